"""
Randomness quantification: min-entropy of the theoretical pmf, of the pmf
merged to the acquisition resolution, and of acquired traces; resolution
estimation from the spacing of acquired voltage levels; and the
moment-matched Gaussian fit for large mode numbers.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.stats import norm, trim_mean

from .detection_chain import VoltageTrace
from .errors import DegenerateTraceError, DomainError, EmptyTraceError, FormatError, PreconditionError
from .photon_statistics import NORMALIZATION_TOLERANCE, PhotonDistribution
from .sampling import Histogram

logger = logging.getLogger(__name__)

MIN_FIT_SAMPLES = 1000
DEFAULT_FIT_BINS = 100
RESOLUTION_RATIO_TOLERANCE = 1e-9

REPORT_KEYS = (
    "h_theoretical_bits",
    "h_merged_bits",
    "h_empirical_bits",
    "resolution_m",
    "delta_v0_v",
    "deviation",
    "rate_bits_per_s",
)


@dataclass(frozen=True)
class ResolutionEstimate:
    resolution_m: int
    delta_v0: float
    mean_unique_gap: float


@dataclass(frozen=True)
class GaussianFit:
    mean: float
    std_dev: float
    fit_distance: float


@dataclass(frozen=True)
class EntropyReport:
    h_theoretical: float
    h_merged: float
    h_empirical: float
    deviation: float
    resolution: ResolutionEstimate
    sample_rate: float
    equivalent_rate_bits_per_s: float

    def as_dict(self) -> Dict[str, Union[float, int]]:
        return {
            "h_theoretical_bits": self.h_theoretical,
            "h_merged_bits": self.h_merged,
            "h_empirical_bits": self.h_empirical,
            "resolution_m": self.resolution.resolution_m,
            "delta_v0_v": self.resolution.delta_v0,
            "mean_unique_gap_v": self.resolution.mean_unique_gap,
            "deviation": self.deviation,
            "sample_rate_hz": self.sample_rate,
            "rate_bits_per_s": self.equivalent_rate_bits_per_s,
        }

    def to_text(self) -> str:
        lines = []
        values = self.as_dict()
        for key in REPORT_KEYS:
            value = values[key]
            lines.append(f"{key} = {value}" if isinstance(value, int) else f"{key} = {value:.17g}")
        return "\n".join(lines) + "\n"


def _probabilities(pmf: Union[Histogram, PhotonDistribution]) -> np.ndarray:
    probs = np.asarray(pmf.probabilities, dtype=np.float64)
    if probs.size == 0:
        raise EmptyTraceError("cannot take the min-entropy of an empty pmf", "pmf")
    return probs


def min_entropy(pmf: Union[Histogram, PhotonDistribution]) -> float:
    """-log2 of the most probable outcome."""
    probs = _probabilities(pmf)
    total = math.fsum(probs)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise PreconditionError(f"pmf sums to {total!r}, not 1", "pmf")
    return -math.log2(float(probs.max()))


def merge_distribution(pmf: PhotonDistribution, m: int, offset: int = 0) -> Histogram:
    """
    Sum the pmf over the photon-count intervals [i*m + offset, (i+1)*m - 1 + offset].

    The merged histogram's values are the lower edges of the intervals.
    """
    if m < 1:
        raise DomainError(f"resolution must be a positive integer, got {m!r}", "resolution_m")
    if m == 1 and offset == 0:
        return Histogram(pmf.support, pmf.probabilities.copy())
    bins = (pmf.support - offset) // m
    first = int(bins[0])
    merged = np.bincount(bins - first, weights=pmf.probabilities)
    edges = (np.arange(len(merged), dtype=np.int64) + first) * m + offset
    return Histogram(edges, merged)


def resolution_from_gap(mean_unique_gap: float, delta_v0: float) -> int:
    """ceil(gap / delta_v0), with ratios within float error of an integer taken as that integer."""
    if not delta_v0 > 0:
        raise DomainError(f"single-photon voltage step must be positive, got {delta_v0!r}", "delta_v0")
    ratio = mean_unique_gap / delta_v0
    nearest = round(ratio)
    if nearest >= 1 and math.isclose(ratio, nearest, rel_tol=RESOLUTION_RATIO_TOLERANCE):
        return int(nearest)
    return max(int(math.ceil(ratio)), 1)


def grid_resolution(m: int, delta_v0: float) -> ResolutionEstimate:
    """Resolution of a fully populated acquisition grid of m photons per level."""
    if m < 1:
        raise DomainError(f"resolution must be a positive integer, got {m!r}", "resolution_m")
    return ResolutionEstimate(int(m), float(delta_v0), m * delta_v0)


def estimate_resolution(trace: VoltageTrace, delta_v0: float, trim_fraction: float = 0.0) -> ResolutionEstimate:
    """
    Resolution in photons from the average spacing of the sorted distinct voltages.

    trim_fraction > 0 drops that share of the smallest and largest gaps before
    averaging; the default averages every gap.
    """
    if not delta_v0 > 0:
        raise DomainError(f"single-photon voltage step must be positive, got {delta_v0!r}", "delta_v0")
    if not 0 <= trim_fraction < 0.5:
        raise DomainError(f"trim fraction must lie in [0, 0.5), got {trim_fraction!r}", "trim_fraction")
    levels = np.unique(trace.samples)
    if len(levels) < 2:
        raise DegenerateTraceError("resolution needs at least two distinct voltage values", "trace")
    if trim_fraction > 0:
        gap = float(trim_mean(np.diff(levels), trim_fraction))
    else:
        # mean of consecutive differences telescopes to the span over the gap count
        gap = float(levels[-1] - levels[0]) / (len(levels) - 1)
    m = resolution_from_gap(gap, delta_v0)
    logger.debug("%d distinct levels, mean gap %.6e V -> m = %d", len(levels), gap, m)
    return ResolutionEstimate(m, float(delta_v0), gap)


def empirical_min_entropy(trace: VoltageTrace) -> float:
    """Min-entropy over the distinct acquired voltage values, without re-binning."""
    samples = np.asarray(trace.samples)
    if samples.size == 0:
        raise EmptyTraceError("cannot take the min-entropy of an empty trace", "trace")
    _, counts = np.unique(samples, return_counts=True)
    return -math.log2(int(counts.max()) / samples.size)


def quantize_trace(trace: VoltageTrace, level_width: float) -> VoltageTrace:
    """
    Map each sample to floor(v / width) * width, emulating a finite-resolution ADC.

    Ratios within float error of an integer take that integer, so a voltage of
    exactly k levels lands on level k as the photon-count bins do.
    """
    if not level_width > 0:
        raise DomainError(f"level width must be positive, got {level_width!r}", "level_width")
    ratio = np.asarray(trace.samples, dtype=np.float64) / level_width
    nearest = np.rint(ratio)
    snapped = np.isclose(ratio, nearest, rtol=RESOLUTION_RATIO_TOLERANCE, atol=0.0)
    levels = np.where(snapped, nearest, np.floor(ratio)) * level_width
    return VoltageTrace(levels, trace.sample_rate, trace.label)


def gaussian_fit(trace: VoltageTrace, bins: int = DEFAULT_FIT_BINS) -> GaussianFit:
    """
    Moment-matched Gaussian and its total variation distance to the trace histogram.

    The histogram uses `bins` equal-width bins over the sample range; Gaussian
    mass falling outside that range counts fully toward the distance.
    """
    samples = np.asarray(trace.samples, dtype=np.float64)
    if samples.size < MIN_FIT_SAMPLES:
        raise PreconditionError(f"a Gaussian fit needs at least {MIN_FIT_SAMPLES} samples, got {samples.size}", "trace")
    mean = float(samples.mean())
    std_dev = float(samples.std(ddof=1))
    if std_dev == 0 or samples.min() == samples.max():
        raise DegenerateTraceError("trace has zero variance", "trace")

    edges, observed, expected = gaussian_fit_bins(trace, GaussianFit(mean, std_dev, 0.0), bins)
    outside = max(1.0 - float(expected.sum()), 0.0)
    distance = 0.5 * (float(np.abs(observed - expected).sum()) + float(outside))
    return GaussianFit(mean, std_dev, distance)


def gaussian_fit_bins(
    trace: VoltageTrace,
    fit: GaussianFit,
    bins: int = DEFAULT_FIT_BINS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bin edges, observed mass and Gaussian mass per bin over the sample range."""
    samples = np.asarray(trace.samples, dtype=np.float64)
    if samples.size == 0:
        raise EmptyTraceError("cannot bin an empty trace", "trace")
    counts, edges = np.histogram(samples, bins=bins)
    expected = np.diff(norm.cdf(edges, loc=fit.mean, scale=fit.std_dev))
    return edges, counts / samples.size, expected


def relative_deviation(h_merged: float, h_empirical: float) -> float:
    """(h_merged - h_empirical) / h_empirical."""
    if h_empirical == 0:
        return 0.0 if h_merged == 0 else math.inf
    return (h_merged - h_empirical) / h_empirical


def build_report(
    pmf: PhotonDistribution,
    trace: VoltageTrace,
    delta_v0: float,
    trim_fraction: float = 0.0,
    sample_rate: Optional[float] = None,
    resolution: Optional[ResolutionEstimate] = None,
) -> EntropyReport:
    """
    Chain resolution estimate, merge, the three min-entropies, deviation and
    equivalent rate. A known resolution (an emulated ADC grid) skips the
    estimate from the trace.
    """
    if resolution is None:
        resolution = estimate_resolution(trace, delta_v0, trim_fraction)
    merged = merge_distribution(pmf, resolution.resolution_m)
    h_theoretical = min_entropy(pmf)
    h_merged = min_entropy(merged)
    h_empirical = empirical_min_entropy(trace)
    rate = trace.sample_rate if sample_rate is None else sample_rate
    return EntropyReport(
        h_theoretical=h_theoretical,
        h_merged=h_merged,
        h_empirical=h_empirical,
        deviation=relative_deviation(h_merged, h_empirical),
        resolution=resolution,
        sample_rate=rate,
        equivalent_rate_bits_per_s=h_merged * rate,
    )


def parse_report(text: str) -> Dict[str, float]:
    """Inverse of EntropyReport.to_text; comment lines are skipped."""
    values: Dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise FormatError(f"expected 'key = value' in report, got {line!r}", "report")
        try:
            values[key] = int(value) if key == "resolution_m" else float(value)
        except ValueError:
            raise FormatError(f"non-numeric report value {line!r}", key)
    return values

