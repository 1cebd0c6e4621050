"""
Toeplitz-hashing post-processing of acquired samples.

Convention (bit-exact): the seed holds n + k - 1 bits. The first n bits are
the first column of an n x k Toeplitz matrix A, read top-down; the remaining
k - 1 bits continue its first row from the second column on, left to right
(A[0][0] is seed[0]). Every constant diagonal of A repeats its first entry,
so A[i][j] = seed[i - j] for i >= j and seed[n - 1 + j - i] otherwise.
Each n-bit input block x maps to the k-bit output y = A^T x over GF(2).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.stats import chisquare

from .detection_chain import VoltageTrace
from .errors import DomainError, EmptyTraceError, FormatError, PreconditionError
from .entropy_quant import EntropyReport

logger = logging.getLogger(__name__)

DEFAULT_INPUT_BLOCK_BITS = 4096
MAX_BITS_PER_SAMPLE = 64
# blocks multiplied per matrix product
_BATCH_BLOCKS = 256


@dataclass(frozen=True, eq=False)
class ToeplitzSpec:
    input_block_bits: int
    output_block_bits: int
    seed_bits: np.ndarray = field(repr=False)
    max_ratio: Optional[float] = None

    def __post_init__(self):
        n, k = self.input_block_bits, self.output_block_bits
        if n < 1:
            raise DomainError(f"input block must hold at least one bit, got {n}", "input_block_bits")
        if not 0 < k <= n:
            raise DomainError(f"output block must hold 1..{n} bits, got {k}", "output_block_bits")
        if len(self.seed_bits) != n + k - 1:
            raise PreconditionError(f"seed must hold {n + k - 1} bits, got {len(self.seed_bits)}", "seed_bits")
        if self.max_ratio is not None and k / n > self.max_ratio:
            raise PreconditionError(f"extraction ratio {k}/{n} exceeds the certified bound {self.max_ratio:.6f}", "output_block_bits")

    @classmethod
    def seeded(cls, input_block_bits: int, output_block_bits: int, seed: int, max_ratio: Optional[float] = None) -> "ToeplitzSpec":
        bits = seed_bits_from_int(seed, input_block_bits + output_block_bits - 1)
        return cls(input_block_bits, output_block_bits, bits, max_ratio)

    @classmethod
    def for_entropy(
        cls,
        h_merged: float,
        bits_per_sample: int,
        seed: int,
        input_block_bits: int = DEFAULT_INPUT_BLOCK_BITS,
    ) -> "ToeplitzSpec":
        """Output block sized by floor(h_merged) certified bits per bits_per_sample raw bits."""
        if not 1 <= bits_per_sample <= MAX_BITS_PER_SAMPLE:
            raise DomainError(f"bits per sample must lie in [1, {MAX_BITS_PER_SAMPLE}], got {bits_per_sample}", "bits_per_sample")
        certified = min(math.floor(h_merged), bits_per_sample)
        output_bits = (input_block_bits * certified) // bits_per_sample
        if output_bits < 1:
            raise PreconditionError(f"h_merged = {h_merged:.4f} certifies no output bits", "h_merged_bits")
        return cls.seeded(input_block_bits, output_bits, seed, max_ratio=h_merged / bits_per_sample)

    @classmethod
    def from_report(
        cls,
        report: EntropyReport,
        bits_per_sample: int,
        seed: int,
        input_block_bits: int = DEFAULT_INPUT_BLOCK_BITS,
    ) -> "ToeplitzSpec":
        return cls.for_entropy(report.h_merged, bits_per_sample, seed, input_block_bits)

    @property
    def ratio(self) -> float:
        return self.output_block_bits / self.input_block_bits

    def matrix(self) -> np.ndarray:
        """The n x k matrix A."""
        n = self.input_block_bits
        first_column = self.seed_bits[:n]
        first_row = np.concatenate([self.seed_bits[:1], self.seed_bits[n:]])
        return toeplitz(first_column, first_row).astype(np.uint8)

    def seed_hex(self) -> str:
        return np.packbits(self.seed_bits).tobytes().hex()


def seed_bits_from_int(seed: int, length: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=seed))
    return rng.integers(0, 2, size=length, dtype=np.uint8)


def seed_bits_from_hex(text: str, length: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
    if len(bits) < length:
        raise FormatError(f"seed holds {len(bits)} bits, {length} expected", "seed")
    return bits[:length]


def raw_bits_from_trace(trace: VoltageTrace, bits_per_sample: int) -> np.ndarray:
    """
    Rank-map samples onto their sorted distinct levels and emit each level
    index as a bits_per_sample wide word, most significant bit first.
    """
    if not 1 <= bits_per_sample <= MAX_BITS_PER_SAMPLE:
        raise DomainError(f"bits per sample must lie in [1, {MAX_BITS_PER_SAMPLE}], got {bits_per_sample}", "bits_per_sample")
    levels, index = np.unique(trace.samples, return_inverse=True)
    if len(levels) > 2 ** bits_per_sample:
        raise PreconditionError(
            f"{len(levels)} distinct levels do not fit in {bits_per_sample} bits; use at least "
            f"{math.ceil(math.log2(len(levels)))} bits per sample",
            "bits_per_sample",
        )
    word_type = np.uint32 if bits_per_sample <= 32 else np.uint64
    shifts = np.arange(bits_per_sample - 1, -1, -1, dtype=word_type)
    words = (index.astype(word_type).reshape(-1, 1) >> shifts) & word_type(1)
    return words.astype(np.uint8).ravel()


def toeplitz_extract(bits: np.ndarray, spec: ToeplitzSpec) -> np.ndarray:
    """Hash whole n-bit blocks; a trailing partial block is dropped."""
    data = np.asarray(bits, dtype=np.uint8)
    n, k = spec.input_block_bits, spec.output_block_bits
    blocks = len(data) // n
    dropped = len(data) - blocks * n
    if dropped:
        logger.warning("discarding %d trailing bits that do not fill a %d-bit block", dropped, n)
    if blocks == 0:
        return np.zeros(0, dtype=np.uint8)

    # float32 products are exact: every dot product is an integer <= n < 2**24
    matrix = spec.matrix().astype(np.float32)
    inputs = data[: blocks * n].reshape(blocks, n)
    out = np.empty((blocks, k), dtype=np.uint8)
    for start in range(0, blocks, _BATCH_BLOCKS):
        batch = inputs[start:start + _BATCH_BLOCKS].astype(np.float32)
        out[start:start + _BATCH_BLOCKS] = np.mod(batch @ matrix, 2).astype(np.uint8)
    return out.ravel()


def discarded_bits(length: int, spec: ToeplitzSpec) -> int:
    return length % spec.input_block_bits


def smoke_test(bits: np.ndarray, z_limit: float = 4.0, p_floor: float = 0.001) -> Dict[str, Any]:
    """
    Monobit and byte-frequency checks on an output bitstream.

    Not a statistical test battery; a quick guard against gross bias.
    """
    data = np.asarray(bits, dtype=np.uint8)
    total = len(data)
    if total == 0:
        raise EmptyTraceError("cannot smoke-test an empty bitstream", "bits")
    ones = int(data.sum())
    z = (ones - total / 2.0) / math.sqrt(total / 4.0)
    whole = total - total % 8
    byte_counts = np.bincount(np.packbits(data[:whole]), minlength=256)
    _, p_value = chisquare(byte_counts)
    return {
        "bits": total,
        "ones_fraction": ones / total,
        "monobit_z": z,
        "byte_chi2_p": float(p_value),
        "passed": bool(abs(z) < z_limit and p_value > p_floor),
    }
