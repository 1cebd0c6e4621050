"""
Photon-number statistics of filtered ASE noise.

Single-mode and M-fold degenerate Bose-Einstein laws, the mode number of a
Gaussian optical spectrum seen through a detector of finite bandwidth, and
the mean photon numbers implied by a measured optical power.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.special import erf, gammaln
from scipy.stats import nbinom

from .errors import DomainError, PreconditionError

logger = logging.getLogger(__name__)

# CODATA 2018, exact SI values
PLANCK_CONSTANT = 6.62607015e-34
SPEED_OF_LIGHT = 299792458.0

DEFAULT_TAIL_TOLERANCE = 1e-12
SMALL_RATIO_LIMIT = 1e-6
NORMALIZATION_TOLERANCE = 1e-9

ArrayLike = Union[int, float, np.ndarray]


@dataclass(frozen=True)
class OpticalSetup:
    optical_bandwidth: float
    electrical_bandwidth: float
    optical_power: float = 0.0
    center_wavelength: float = 1550e-9
    polarization_degeneracy: int = 1
    planck_constant: float = PLANCK_CONSTANT
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.optical_bandwidth > 0:
            raise DomainError(f"optical bandwidth must be positive, got {self.optical_bandwidth!r}", "optical_bandwidth_hz")
        if not self.electrical_bandwidth > 0:
            raise DomainError(f"electrical bandwidth must be positive, got {self.electrical_bandwidth!r}", "electrical_bandwidth_hz")
        if not self.optical_power >= 0:
            raise DomainError(f"optical power must be non-negative, got {self.optical_power!r}", "optical_power_w")
        if not self.center_wavelength > 0:
            raise DomainError(f"center wavelength must be positive, got {self.center_wavelength!r}", "center_wavelength_m")
        if self.polarization_degeneracy not in (1, 2):
            raise DomainError(f"polarization degeneracy must be 1 or 2, got {self.polarization_degeneracy!r}", "polarization_degeneracy")

    @property
    def bandwidth_ratio(self) -> float:
        return self.optical_bandwidth / self.electrical_bandwidth

    @property
    def detection_window(self) -> float:
        """Average detection time of the photodiode, 1/B_ele."""
        return 1.0 / self.electrical_bandwidth

    @property
    def photon_energy(self) -> float:
        return self.planck_constant * self.speed_of_light / self.center_wavelength


@dataclass(frozen=True)
class ModalModel:
    mode_number: float
    mean_photons_per_mode: float
    mean_photons_total: float

    def __post_init__(self):
        if not self.mode_number > 0:
            raise DomainError(f"mode number must be positive, got {self.mode_number!r}", "mode_number")
        if not self.mean_photons_per_mode >= 0:
            raise DomainError(f"mean photon number must be non-negative, got {self.mean_photons_per_mode!r}", "nbar")
        expected = self.mode_number * self.mean_photons_per_mode
        if not math.isclose(self.mean_photons_total, expected, rel_tol=1e-12, abs_tol=1e-300):
            raise PreconditionError(
                f"total mean {self.mean_photons_total!r} != M * nbar = {expected!r}", "mean_photons_total"
            )

    @classmethod
    def from_per_mode(cls, mode_number: float, nbar: float) -> "ModalModel":
        return cls(float(mode_number), float(nbar), float(mode_number) * float(nbar))

    @property
    def variance(self) -> float:
        return self.mean_photons_total * (1.0 + self.mean_photons_per_mode)


@dataclass(frozen=True, eq=False)
class PhotonDistribution:
    """Truncated photon-count pmf on the contiguous support [support_min, support_max]."""
    support_min: int
    probabilities: np.ndarray
    log_probabilities: np.ndarray
    cumulative: np.ndarray
    truncated_mass: float = 0.0
    model: Optional[ModalModel] = field(default=None, repr=False)

    @classmethod
    def from_probabilities(
        cls,
        probabilities,
        support_min: int = 0,
        normalize: bool = True,
        model: Optional[ModalModel] = None,
    ) -> "PhotonDistribution":
        probs = np.asarray(probabilities, dtype=np.float64).copy()
        if probs.ndim != 1 or probs.size == 0:
            raise PreconditionError("a distribution needs at least one probability", "probabilities")
        if support_min < 0:
            raise DomainError(f"support must start at a non-negative count, got {support_min}", "support_min")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise PreconditionError("probabilities must be finite and non-negative", "probabilities")
        if normalize:
            probs /= math.fsum(probs)
        with np.errstate(divide="ignore"):
            log_probs = np.log(probs)
        return cls(int(support_min), probs, log_probs, np.cumsum(probs), 0.0, model)

    @property
    def support_max(self) -> int:
        return self.support_min + len(self.probabilities) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1, dtype=np.int64)

    @property
    def total(self) -> float:
        return math.fsum(self.probabilities)

    def is_normalized(self, tolerance: float = NORMALIZATION_TOLERANCE) -> bool:
        return abs(self.total - 1.0) <= tolerance

    @property
    def mean(self) -> float:
        return float(np.dot(self.support.astype(np.float64), self.probabilities))

    @property
    def variance(self) -> float:
        centered = self.support.astype(np.float64) - self.mean
        return float(np.dot(centered * centered, self.probabilities))

    @property
    def max_probability(self) -> float:
        return float(self.probabilities.max())

    @property
    def argmax(self) -> int:
        return self.support_min + int(np.argmax(self.probabilities))

    def pmf_at(self, n: int) -> float:
        if n < self.support_min or n > self.support_max:
            return 0.0
        return float(self.probabilities[n - self.support_min])


def _check_counts(n: ArrayLike) -> np.ndarray:
    counts = np.asarray(n, dtype=np.float64)
    if np.any(counts < 0):
        raise DomainError("photon count must be non-negative", "n")
    return counts


def _unwrap(values: np.ndarray, like: ArrayLike):
    if np.ndim(like) == 0:
        return float(values)
    return values


def bose_einstein_pmf(n: ArrayLike, n_bar: float):
    """Single-mode thermal law nbar^n / (1 + nbar)^(1 + n), evaluated in log space."""
    counts = _check_counts(n)
    if not n_bar >= 0:
        raise DomainError(f"mean photon number must be non-negative, got {n_bar!r}", "nbar")
    if n_bar == 0:
        return _unwrap(np.where(counts == 0, 1.0, 0.0), n)
    log_p = counts * math.log(n_bar) - (1.0 + counts) * math.log1p(n_bar)
    return _unwrap(np.exp(log_p), n)


def degenerate_be_log_pmf(n: ArrayLike, n_bar: float, mode_number: float):
    counts = _check_counts(n)
    if not mode_number > 0:
        raise DomainError(f"mode number must be positive, got {mode_number!r}", "M")
    if not n_bar >= 0:
        raise DomainError(f"mean photon number must be non-negative, got {n_bar!r}", "nbar")
    if n_bar == 0:
        return _unwrap(np.where(counts == 0, 0.0, -np.inf), n)
    log_norm = gammaln(counts + mode_number) - gammaln(counts + 1.0) - gammaln(mode_number)
    # (1 + 1/nbar)^-n (1 + nbar)^-M rewritten as nbar^n / (1 + nbar)^(n + M)
    log_p = log_norm + counts * math.log(n_bar) - (counts + mode_number) * math.log1p(n_bar)
    return _unwrap(log_p, n)


def degenerate_be_pmf(n: ArrayLike, n_bar: float, mode_number: float):
    """M-fold degenerate Bose-Einstein pmf; M may be any positive real."""
    return _unwrap(np.exp(degenerate_be_log_pmf(n, n_bar, mode_number)), n)


def mode_number_for_ratio(ratio: float, polarization_degeneracy: int = 1) -> float:
    if not ratio > 0:
        raise DomainError(f"bandwidth ratio must be positive, got {ratio!r}", "bandwidth_ratio")
    if polarization_degeneracy not in (1, 2):
        raise DomainError(f"polarization degeneracy must be 1 or 2, got {polarization_degeneracy!r}", "polarization_degeneracy")
    if ratio < SMALL_RATIO_LIMIT:
        base = 1.0
    else:
        pr2 = math.pi * ratio * ratio
        denominator = math.pi * ratio * float(erf(math.sqrt(math.pi) * ratio)) + math.expm1(-pr2)
        # M >= 1 for one polarization; rounding may land a hair below near the limit
        base = max(pr2 / denominator, 1.0)
    return polarization_degeneracy * base


def mode_number(setup: OpticalSetup) -> float:
    """Mode number of a Gaussian optical spectrum behind a detector of bandwidth B_ele."""
    return mode_number_for_ratio(setup.bandwidth_ratio, setup.polarization_degeneracy)


def photons_in_window(setup: OpticalSetup) -> float:
    """Mean photon number within one detection window, P*T / (h c / lambda)."""
    return setup.optical_power * setup.detection_window / setup.photon_energy


def mean_photons(setup: OpticalSetup, mode_count: Optional[float] = None) -> ModalModel:
    if mode_count is None:
        mode_count = mode_number(setup)
    total = photons_in_window(setup)
    return ModalModel(float(mode_count), total / mode_count, total)


def build_distribution(model: ModalModel, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> PhotonDistribution:
    """
    Tabulate the degenerate Bose-Einstein pmf over the support that leaves less
    than tail_tolerance/2 of the mass on either side, then renormalize.
    """
    if not 0 < tail_tolerance <= 1e-6:
        raise DomainError(f"tail tolerance must lie in (0, 1e-6], got {tail_tolerance!r}", "tail_tolerance")
    nbar = model.mean_photons_per_mode
    shape = model.mode_number
    if nbar == 0:
        return PhotonDistribution(0, np.array([1.0]), np.array([0.0]), np.array([1.0]), 0.0, model)

    half = tail_tolerance / 2.0
    law = nbinom(shape, 1.0 / (1.0 + nbar))
    lower = max(int(law.ppf(half)), 0)
    upper = int(law.isf(half))
    while lower > 0 and law.cdf(lower - 1) >= half:
        lower -= 1
    while law.sf(upper) >= half:
        upper += 1
    left_tail = float(law.cdf(lower - 1)) if lower > 0 else 0.0
    truncated = left_tail + float(law.sf(upper))

    counts = np.arange(lower, upper + 1, dtype=np.float64)
    log_p = degenerate_be_log_pmf(counts, nbar, shape)
    raw = np.exp(log_p)
    total = math.fsum(raw)
    logger.debug("support [%d, %d] (%d counts), truncated mass %.3e", lower, upper, len(counts), truncated)

    return PhotonDistribution(
        support_min=lower,
        probabilities=raw / total,
        log_probabilities=log_p - math.log(total),
        cumulative=np.cumsum(raw / total),
        truncated_mass=truncated,
        model=model,
    )


def distribution_for(nbar: float, mode_count: float, tail_tolerance: float = DEFAULT_TAIL_TOLERANCE) -> PhotonDistribution:
    return build_distribution(ModalModel.from_per_mode(mode_count, nbar), tail_tolerance)
