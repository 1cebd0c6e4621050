"""
Inverse-transform sampling of photon counts and the histogram helpers used to
compare samples with their source distribution.

Uniform variates come from a Philox4x64 counter-based generator keyed by the
master seed. The stream is cut into fixed blocks of BLOCK_DRAWS draws; block b
starts at counter b * 2**128, so any slice of the stream can be produced
independently and the output never depends on chunk size or worker count.
Each raw 64-bit word w maps to ((w >> 11) + 0.5) * 2**-53, which lies in the
open interval (0, 1).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import chi2

from .errors import EmptyTraceError, PreconditionError
from .photon_statistics import ModalModel, PhotonDistribution

logger = logging.getLogger(__name__)

BLOCK_DRAWS = 1 << 16
DEFAULT_CHUNK_SIZE = 1 << 20
_UNIFORM_SCALE = 2.0 ** -53


@dataclass(frozen=True)
class SampleRequest:
    distribution: PhotonDistribution
    count: int
    master_seed: int
    chunk_size: int = DEFAULT_CHUNK_SIZE
    workers: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise EmptyTraceError(f"sample count must be at least 1, got {self.count}", "sample_count")
        if self.chunk_size < 1:
            raise PreconditionError(f"chunk size must be at least 1, got {self.chunk_size}", "chunk_size")
        if not 0 <= self.master_seed < 2 ** 64:
            raise PreconditionError(f"master seed must be a 64-bit unsigned integer, got {self.master_seed}", "master_seed")


@dataclass(frozen=True, eq=False)
class PhotonCountTrace:
    counts: np.ndarray
    source_model: Optional[ModalModel] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def values(self) -> np.ndarray:
        return self.counts


@dataclass(frozen=True, eq=False)
class Histogram:
    """Sorted distinct values with their relative frequencies."""
    values: np.ndarray
    probabilities: np.ndarray
    counts: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> Dict[float, float]:
        return dict(zip(self.values.tolist(), self.probabilities.tolist()))

    @property
    def max_probability(self) -> float:
        return float(self.probabilities.max())


@lru_cache(maxsize=16)
def _uniform_block(master_seed: int, block: int) -> np.ndarray:
    generator = np.random.Philox(key=master_seed, counter=block << 128)
    raw = generator.random_raw(BLOCK_DRAWS)
    uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _UNIFORM_SCALE
    uniforms.setflags(write=False)
    return uniforms


def uniform_stream(master_seed: int, start: int, stop: int) -> np.ndarray:
    """Uniform variates at stream positions [start, stop)."""
    first, last = start // BLOCK_DRAWS, (stop - 1) // BLOCK_DRAWS
    pieces = []
    for block in range(first, last + 1):
        lo = max(start - block * BLOCK_DRAWS, 0)
        hi = min(stop - block * BLOCK_DRAWS, BLOCK_DRAWS)
        pieces.append(_uniform_block(master_seed, block)[lo:hi])
    return np.concatenate(pieces)


def invert_cdf(distribution: PhotonDistribution, uniforms) -> np.ndarray:
    """Smallest count k with F(k) >= u for each uniform u."""
    u = np.asarray(uniforms, dtype=np.float64)
    index = np.searchsorted(distribution.cumulative, u, side="left")
    # u may exceed a final cumulative value that rounded just below 1
    np.minimum(index, len(distribution.cumulative) - 1, out=index)
    return distribution.support_min + index.astype(np.int64)


def inverse_transform_sample(request: SampleRequest) -> PhotonCountTrace:
    distribution = request.distribution
    if not distribution.is_normalized():
        raise PreconditionError(
            f"distribution sums to {distribution.total!r}, not 1", "distribution"
        )

    bounds = [
        (start, min(start + request.chunk_size, request.count))
        for start in range(0, request.count, request.chunk_size)
    ]

    def draw(span: Tuple[int, int]) -> np.ndarray:
        return invert_cdf(distribution, uniform_stream(request.master_seed, *span))

    logger.debug("sampling %d counts in %d chunks", request.count, len(bounds))
    if request.workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=request.workers) as pool:
            chunks = list(pool.map(draw, bounds))
    else:
        chunks = [draw(span) for span in bounds]

    return PhotonCountTrace(np.concatenate(chunks), distribution.model)


def empirical_pmf(trace) -> Histogram:
    """Relative frequency of every distinct value in a photon-count or voltage trace."""
    values = np.asarray(getattr(trace, "values", trace))
    if values.size == 0:
        raise EmptyTraceError("cannot build a histogram from an empty trace", "trace")
    distinct, counts = np.unique(values, return_counts=True)
    return Histogram(distinct, counts / values.size, counts)


def histogram_from_distribution(distribution: PhotonDistribution) -> Histogram:
    return Histogram(distribution.support, distribution.probabilities)


def total_variation_distance(first: Histogram, second: Histogram) -> float:
    """Half the L1 distance between two histograms over the union of their values."""
    values = np.union1d(first.values, second.values)
    p = np.zeros(len(values))
    q = np.zeros(len(values))
    p[np.searchsorted(values, first.values)] = first.probabilities
    q[np.searchsorted(values, second.values)] = second.probabilities
    return 0.5 * float(np.abs(p - q).sum())


def merge_sparse_bins(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0) -> Tuple[np.ndarray, np.ndarray]:
    """Pool neighbouring bins left to right until each pooled expectation reaches min_expected."""
    merged_obs: List[float] = []
    merged_exp: List[float] = []
    acc_obs = acc_exp = 0.0
    for obs, exp in zip(observed, expected):
        acc_obs += obs
        acc_exp += exp
        if acc_exp >= min_expected:
            merged_obs.append(acc_obs)
            merged_exp.append(acc_exp)
            acc_obs = acc_exp = 0.0
    if acc_exp > 0 or acc_obs > 0:
        if merged_exp:
            merged_obs[-1] += acc_obs
            merged_exp[-1] += acc_exp
        else:
            merged_obs.append(acc_obs)
            merged_exp.append(acc_exp)
    return np.array(merged_obs), np.array(merged_exp)


def pearson_chi_square(
    observed: Sequence[float],
    expected: Sequence[float],
    min_expected: float = 5.0,
) -> Tuple[float, int, float]:
    """
    Pearson chi-square of observed counts against expected counts.

    Bins are pooled so that every expected count is at least min_expected.

    Returns:
        (statistic, degrees of freedom, p-value); the p-value is nan when fewer
        than two pooled bins remain.
    """
    obs, exp = merge_sparse_bins(np.asarray(observed, dtype=np.float64), np.asarray(expected, dtype=np.float64), min_expected)
    if np.any(exp <= 0):
        return math.inf, max(len(exp) - 1, 0), 0.0
    statistic = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(exp) - 1
    if dof < 1:
        return statistic, dof, math.nan
    return statistic, dof, float(chi2.sf(statistic, dof))


def chi_square_against(trace: PhotonCountTrace, distribution: PhotonDistribution, min_expected: float = 5.0) -> Tuple[float, int, float]:
    """Goodness of fit of a sampled trace against the distribution it was drawn from."""
    observed = np.bincount(trace.counts - distribution.support_min, minlength=len(distribution.probabilities))
    if len(observed) > len(distribution.probabilities):
        raise PreconditionError("trace holds counts outside the distribution support", "trace")
    expected = distribution.probabilities * len(trace)
    return pearson_chi_square(observed, expected, min_expected)


def as_count_trace(values: Union[Sequence[int], np.ndarray], model: Optional[ModalModel] = None) -> PhotonCountTrace:
    counts = np.asarray(values, dtype=np.int64)
    if counts.size == 0:
        raise EmptyTraceError("photon-count trace is empty", "trace")
    if np.any(counts < 0):
        raise PreconditionError("photon counts must be non-negative", "trace")
    return PhotonCountTrace(counts, model)
