"""
Photodiode + oscilloscope chain: linear photon-to-voltage mapping, additive
electronic noise, and the comprehensive simulation that composes them with
the photon statistics and the sampler.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, EmptyTraceError, PreconditionError
from .photon_statistics import (
    DEFAULT_TAIL_TOLERANCE,
    OpticalSetup,
    PhotonDistribution,
    build_distribution,
    mean_photons,
    mode_number,
    photons_in_window,
)
from .sampling import DEFAULT_CHUNK_SIZE, PhotonCountTrace, SampleRequest, inverse_transform_sample

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 10e9
MIN_MEASURED_NOISE_SAMPLES = 10_000

NOISE_MEASURED = "measured"
NOISE_GAUSSIAN = "gaussian"


@dataclass(frozen=True, eq=False)
class VoltageTrace:
    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    label: str = ""

    def __post_init__(self):
        if np.asarray(self.samples).size == 0:
            raise EmptyTraceError("voltage trace is empty", "trace")
        if not self.sample_rate > 0:
            raise DomainError(f"sample rate must be positive, got {self.sample_rate!r}", "sample_rate_hz")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def values(self) -> np.ndarray:
        return self.samples

    def relabel(self, label: str) -> "VoltageTrace":
        return VoltageTrace(self.samples, self.sample_rate, label)


@dataclass(frozen=True)
class DetectionCalibration:
    volts_per_photon: float
    fit_residual_relative_max: float = 0.0
    source_points: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.volts_per_photon > 0:
            raise DomainError(f"volts per photon must be positive, got {self.volts_per_photon!r}", "volts_per_photon")

    @classmethod
    def from_coefficient(cls, volts_per_photon: float) -> "DetectionCalibration":
        return cls(float(volts_per_photon))

    @property
    def delta_v0(self) -> float:
        """Voltage step of one extra photon, g(n+1) - g(n)."""
        return self.volts_per_photon

    def voltage(self, photons: float) -> float:
        return self.volts_per_photon * photons


@dataclass(frozen=True, eq=False)
class ElectronicNoiseSource:
    kind: str
    trace: Optional[VoltageTrace] = field(default=None, repr=False)
    mean: float = 0.0
    std_dev: float = 0.0
    dc_offset: float = 0.0

    def __post_init__(self):
        if self.kind == NOISE_MEASURED:
            if self.trace is None:
                raise EmptyTraceError("measured noise source needs a trace", "noise_trace")
        elif self.kind == NOISE_GAUSSIAN:
            if not self.std_dev >= 0:
                raise DomainError(f"noise std dev must be non-negative, got {self.std_dev!r}", "noise_std_v")
        else:
            raise DomainError(f"unknown noise kind {self.kind!r}", "noise")

    @classmethod
    def measured(cls, trace: VoltageTrace) -> "ElectronicNoiseSource":
        return cls(NOISE_MEASURED, trace=trace)

    @classmethod
    def gaussian(cls, std_dev: float, mean: float = 0.0, dc_offset: float = 0.0) -> "ElectronicNoiseSource":
        return cls(NOISE_GAUSSIAN, mean=mean, std_dev=std_dev, dc_offset=dc_offset)

    @property
    def expected_mean(self) -> float:
        if self.kind == NOISE_MEASURED:
            return float(np.mean(self.trace.samples))
        return self.mean + self.dc_offset


def calibrate_mapping(points: Sequence[Tuple[float, float]]) -> DetectionCalibration:
    """Through-origin least-squares fit v = c * n of (photon count, mean voltage) pairs."""
    if len(points) == 0:
        raise EmptyTraceError("calibration needs at least one point", "calibration")
    pairs = np.asarray(points, dtype=np.float64)
    n, v = pairs[:, 0], pairs[:, 1]
    if np.any(n <= 0) or np.any(v <= 0):
        raise DomainError("calibration photon counts and voltages must be positive", "calibration")
    c = float(np.dot(n, v) / np.dot(n, n))
    residual = float(np.max(np.abs(v - c * n) / v))
    logger.info("calibrated %.6e V/photon over %d points, max relative residual %.3e", c, len(n), residual)
    return DetectionCalibration(c, residual, tuple((float(a), float(b)) for a, b in pairs))


def photons_to_voltage(
    trace: PhotonCountTrace,
    calib: DetectionCalibration,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    label: str = "photon",
) -> VoltageTrace:
    return VoltageTrace(calib.volts_per_photon * trace.counts.astype(np.float64), sample_rate, label)


def add_electronic_noise(photon_voltages: VoltageTrace, noise: ElectronicNoiseSource, seed: int) -> VoltageTrace:
    """V_com = V_photon + V_ele, deterministic for a given seed."""
    size = len(photon_voltages)
    rng = np.random.Generator(np.random.Philox(key=seed))
    if noise.kind == NOISE_MEASURED:
        recorded = np.asarray(noise.trace.samples, dtype=np.float64)
        if recorded.size == 0:
            raise EmptyTraceError("noise trace is empty", "noise_trace")
        if recorded.size < size:
            logger.info("resampling %d noise samples with replacement to %d", recorded.size, size)
            component = recorded[rng.integers(0, recorded.size, size)]
        else:
            component = recorded[:size]
    else:
        component = rng.normal(noise.mean + noise.dc_offset, noise.std_dev, size)
    return VoltageTrace(photon_voltages.samples + component, photon_voltages.sample_rate, photon_voltages.label)


def noise_seed(seed: int) -> int:
    """Seed of the noise stream, derived from the experiment seed."""
    return int(np.random.SeedSequence([seed, 1]).generate_state(1, np.uint64)[0])


def simulate_ase_experiment(
    setup: OpticalSetup,
    calib: DetectionCalibration,
    noise: ElectronicNoiseSource,
    count: int,
    seed: int,
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE,
    sample_rate: float = DEFAULT_SAMPLE_RATE,
    distribution: Optional[PhotonDistribution] = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    label: str = "V_com",
) -> VoltageTrace:
    """
    Comprehensive simulation of an acquired trace: mode number, mean photons,
    theoretical pmf, inverse-transform photon counts, linear mapping to volts,
    then additive electronic noise.

    Pass a prebuilt distribution to skip the pmf tabulation.
    """
    if noise.kind == NOISE_MEASURED and len(noise.trace) < MIN_MEASURED_NOISE_SAMPLES:
        raise PreconditionError(
            f"measured noise trace has {len(noise.trace)} samples, at least {MIN_MEASURED_NOISE_SAMPLES} required",
            "noise_trace",
        )
    if distribution is None:
        model = mean_photons(setup, mode_number(setup))
        logger.info("M = %.4f, nbar = %.1f", model.mode_number, model.mean_photons_per_mode)
        distribution = build_distribution(model, tail_tolerance)
    counts = inverse_transform_sample(SampleRequest(distribution, count, seed, chunk_size, workers))
    photon_voltages = photons_to_voltage(counts, calib, sample_rate, label)
    return add_electronic_noise(photon_voltages, noise, noise_seed(seed))


def split_components(
    setup_distribution: PhotonDistribution,
    calib: DetectionCalibration,
    noise: ElectronicNoiseSource,
    count: int,
    seed: int,
) -> Tuple[VoltageTrace, VoltageTrace]:
    """Photon-only and noise-only components of a simulation, for independence checks."""
    counts = inverse_transform_sample(SampleRequest(setup_distribution, count, seed))
    photon_voltages = photons_to_voltage(counts, calib)
    zero = VoltageTrace(np.zeros(count), photon_voltages.sample_rate, "noise")
    return photon_voltages, add_electronic_noise(zero, noise, noise_seed(seed))


def calibration_points_from_powers(
    powers: Sequence[float],
    voltages: Sequence[float],
    center_wavelength: float = 1550e-9,
    electrical_bandwidth: float = 5e9,
) -> List[Tuple[float, float]]:
    """(photon count, mean voltage) pairs for a constant-power laser, n = P*T / (h c / lambda)."""
    points = []
    for power, voltage in zip(powers, voltages):
        setup = OpticalSetup(1.0, electrical_bandwidth, power, center_wavelength)
        points.append((float(round(photons_in_window(setup))), float(voltage)))
    return points
