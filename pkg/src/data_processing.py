"""
File formats for traces, calibration points, histograms and bitstreams, plus
the staged writer that keeps a failed run from leaving partial outputs.
"""
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np

from .detection_chain import DEFAULT_SAMPLE_RATE, DetectionCalibration, VoltageTrace
from .errors import EmptyTraceError, FormatError
from .sampling import Histogram, PhotonCountTrace, as_count_trace

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
CALIBRATION_HEADER = "photon_count,mean_voltage_v"
HISTOGRAM_HEADER = "value,frequency"
CALIBRATION_FIT_HEADER = "photon_count,mean_voltage_v,fitted_voltage_v,relative_residual"
GAUSSIAN_FIT_HEADER = "bin_left_v,bin_right_v,observed_mass,gaussian_mass"
LEVELS_HEADER = "index,voltage_v,gap_v"


def save_json(filepath: str, data: Any):
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def provenance_lines(config_hash: str, seed: Optional[int], version: str) -> List[str]:
    return [f"# config_sha256={config_hash} seed={'-' if seed is None else seed} version={version}"]


def _header_block(lines: Iterable[str]) -> str:
    return "".join(line.rstrip("\n") + "\n" for line in lines)


def write_voltage_trace(path: str, trace: VoltageTrace, provenance: Iterable[str] = ()):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        f.write(f"# sample_rate_hz={trace.sample_rate:.17g} label={trace.label}\n")
        np.savetxt(f, trace.samples, fmt=FLOAT_FORMAT)


def read_voltage_trace(path: str) -> VoltageTrace:
    sample_rate = DEFAULT_SAMPLE_RATE
    label = Path(path).stem
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("sample_rate_hz="):
                rate_part, _, label_part = body.partition(" label=")
                try:
                    sample_rate = float(rate_part.split("=", 1)[1])
                except ValueError:
                    raise FormatError(f"{path}: malformed sample rate header {line.strip()!r}", "sample_rate_hz")
                label = label_part
    try:
        samples = np.loadtxt(path, comments="#", dtype=np.float64, ndmin=1)
    except ValueError as e:
        raise FormatError(f"{path}: {e}", "trace")
    if samples.size == 0:
        raise EmptyTraceError(f"{path}: trace holds no samples", "trace")
    return VoltageTrace(samples, sample_rate, label)


def write_counts(path: str, trace: PhotonCountTrace, provenance: Iterable[str] = ()):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        np.savetxt(f, trace.counts, fmt="%d")


def read_counts(path: str) -> PhotonCountTrace:
    try:
        counts = np.loadtxt(path, comments="#", dtype=np.int64, ndmin=1)
    except ValueError as e:
        raise FormatError(f"{path}: {e}", "trace")
    return as_count_trace(counts)


def read_calibration_csv(path: str) -> List[Tuple[float, float]]:
    points = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line == CALIBRATION_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}:{number}: expected '{CALIBRATION_HEADER}', got {line!r}", "calibration_file")
            try:
                points.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(f"{path}:{number}: non-numeric calibration row {line!r}", "calibration_file")
    return points


def write_calibration_csv(path: str, points: Iterable[Tuple[float, float]]):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(CALIBRATION_HEADER + "\n")
        for n, v in points:
            f.write(f"{n:.17g},{v:.17g}\n")


def write_calibration_fit_csv(path: str, calib: DetectionCalibration, provenance: Iterable[str] = ()):
    """Measured points next to the through-origin line, one row per point."""
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        f.write(f"# volts_per_photon={calib.volts_per_photon:.17g}\n")
        f.write(CALIBRATION_FIT_HEADER + "\n")
        for n, v in calib.source_points:
            fitted = calib.voltage(n)
            f.write(f"{n:.17g},{v:.17g},{fitted:.17g},{(v - fitted) / v:.17g}\n")


def write_gaussian_fit_csv(
    path: str,
    edges: np.ndarray,
    observed: np.ndarray,
    expected: np.ndarray,
    provenance: Iterable[str] = (),
):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        f.write(GAUSSIAN_FIT_HEADER + "\n")
        for left, right, seen, mass in zip(edges[:-1].tolist(), edges[1:].tolist(), observed.tolist(), expected.tolist()):
            f.write(f"{left:.17g},{right:.17g},{seen:.17g},{mass:.17g}\n")


def write_levels_csv(path: str, trace: VoltageTrace, provenance: Iterable[str] = ()):
    """Sorted distinct voltages of a trace with the gap to the previous level."""
    levels = np.unique(trace.samples)
    gaps = np.concatenate(([np.nan], np.diff(levels)))
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        f.write(LEVELS_HEADER + "\n")
        for index, (level, gap) in enumerate(zip(levels.tolist(), gaps.tolist())):
            f.write(f"{index},{level:.17g},{'' if index == 0 else format(gap, '.17g')}\n")


def write_histogram_csv(path: str, histogram: Histogram, provenance: Iterable[str] = ()):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(_header_block(provenance))
        f.write(HISTOGRAM_HEADER + "\n")
        for value, probability in zip(histogram.values.tolist(), histogram.probabilities.tolist()):
            f.write(f"{value:.17g},{probability:.17g}\n")


def read_histogram_csv(path: str) -> Histogram:
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#") or line == HISTOGRAM_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}:{number}: expected '{HISTOGRAM_HEADER}', got {line!r}", "histogram")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(f"{path}:{number}: non-numeric histogram row {line!r}", "histogram")
    if not rows:
        raise EmptyTraceError(f"{path}: histogram holds no rows", "histogram")
    table = np.array(rows)
    return Histogram(table[:, 0], table[:, 1])


def downsample_histogram(samples: np.ndarray, bins: int) -> Histogram:
    """Fixed-width copy for plotting; values are bin centres."""
    counts, edges = np.histogram(samples, bins=bins)
    return Histogram(0.5 * (edges[:-1] + edges[1:]), counts / len(samples), counts)


def write_bitstream(path: str, bits: np.ndarray, header: Optional[Dict[str, Any]] = None):
    """Packed bytes, most significant bit first, after a one-line text header."""
    fields = dict(header or {})
    fields["bits"] = len(bits)
    line = "# " + " ".join(f"{key}={value}" for key, value in fields.items()) + "\n"
    with open(path, 'wb') as f:
        f.write(line.encode("ascii"))
        f.write(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes())


def read_bitstream(path: str) -> Tuple[np.ndarray, Dict[str, str]]:
    with open(path, 'rb') as f:
        first = f.readline()
        payload = f.read()
    try:
        line = first.decode("ascii").strip()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: bitstream header is not ASCII text", "bitstream")
    if not line.startswith("#"):
        raise FormatError(f"{path}: missing bitstream header", "bitstream")
    header = {}
    for item in line[1:].split():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise FormatError(f"{path}: malformed header item {item!r}", "bitstream")
        header[key] = value
    if "bits" not in header:
        raise FormatError(f"{path}: header lacks a bit count", "bitstream")
    try:
        count = int(header["bits"])
    except ValueError:
        raise FormatError(f"{path}: bit count {header['bits']!r} is not an integer", "bitstream")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    if count < 0 or count > len(bits):
        raise FormatError(f"{path}: header claims {count} bits, payload holds {len(bits)}", "bitstream")
    return bits[:count], header


class ArtifactWriter:
    """
    Stages every output file in a scratch directory next to the destination
    and moves them into place only on commit; an aborted run removes the
    scratch directory and leaves the destination untouched.
    """

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.staging: Optional[Path] = None
        self.names: List[str] = []
        self.written: List[Path] = []

    def __enter__(self) -> "ArtifactWriter":
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        return self

    def path(self, name: str) -> str:
        self.names.append(name)
        return str(self.staging / name)

    def commit(self) -> List[Path]:
        final = []
        for name in self.names:
            target = self.out_dir / name
            os.replace(self.staging / name, target)
            final.append(target)
        logger.info("wrote %d files to %s", len(final), self.out_dir)
        return final

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.written = self.commit()
        shutil.rmtree(self.staging, ignore_errors=True)
        return False
