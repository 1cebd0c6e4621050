"""
Runtime defaults and experiment config files.

Defaults come from the environment (a .env file is honoured). Experiment
configs are flat `key = value` text files with `#` comments.
"""
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from dotenv import load_dotenv

from .errors import ConfigError, QrngError
from .photon_statistics import OpticalSetup

load_dotenv()

SAMPLE_RATE_HZ = float(os.getenv("QRNG_SAMPLE_RATE_HZ", "1e10"))
SAMPLE_COUNT = int(float(os.getenv("QRNG_SAMPLE_COUNT", "1e7")))
TAIL_TOLERANCE = float(os.getenv("QRNG_TAIL_TOLERANCE", "1e-12"))
OUTPUT_DIR = os.getenv("QRNG_OUTPUT_DIR", "output")
WORKERS = int(os.getenv("QRNG_WORKERS", "1"))
BLOCK_BITS = int(os.getenv("QRNG_BLOCK_BITS", "4096"))

TOOL_VERSION = "0.3.0"


def _path(value: str) -> Path:
    return Path(value)


def _int(value: str) -> int:
    number = float(value)
    if number != int(number):
        raise ValueError(f"{value!r} is not an integer")
    return int(number)


CONFIG_KEYS: Dict[str, Callable[[str], Any]] = {
    "label": str,
    "optical_bandwidth_hz": float,
    "electrical_bandwidth_hz": float,
    "polarization_degeneracy": _int,
    "optical_power_w": float,
    "center_wavelength_m": float,
    "noise_trace": _path,
    "noise_std_v": float,
    "noise_mean_v": float,
    "noise_dc_offset_v": float,
    "calibration_file": _path,
    "volts_per_photon": float,
    "sample_count": _int,
    "master_seed": _int,
    "tail_tolerance": float,
    "sample_rate_hz": float,
    "quantization_m": _int,
    "trim_fraction": float,
    "reference_trace": _path,
    "histogram_bins": _int,
    "outputs": _path,
}

REQUIRED_KEYS = ("optical_bandwidth_hz", "electrical_bandwidth_hz", "optical_power_w")
PATH_KEYS = ("noise_trace", "calibration_file", "reference_trace")
UNHASHED_KEYS = ("outputs",)


@dataclass(frozen=True)
class ExperimentConfig:
    setup: OpticalSetup
    label: str = "experiment"
    noise_trace: Optional[Path] = None
    noise_std_v: float = 0.0
    noise_mean_v: float = 0.0
    noise_dc_offset_v: float = 0.0
    calibration_file: Optional[Path] = None
    volts_per_photon: Optional[float] = None
    sample_count: int = SAMPLE_COUNT
    master_seed: int = 0
    tail_tolerance: float = TAIL_TOLERANCE
    sample_rate_hz: float = SAMPLE_RATE_HZ
    quantization_m: int = 0
    trim_fraction: float = 0.0
    reference_trace: Optional[Path] = None
    histogram_bins: int = 0
    outputs: Path = Path(OUTPUT_DIR)
    raw: Dict[str, str] = field(default_factory=dict, compare=False, repr=False)
    base_dir: Optional[Path] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.sample_count < 1:
            raise ConfigError(f"sample_count must be at least 1, got {self.sample_count}", "sample_count")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}", "master_seed")
        if self.noise_std_v < 0:
            raise ConfigError(f"noise_std_v must be non-negative, got {self.noise_std_v}", "noise_std_v")
        if self.quantization_m < 0:
            raise ConfigError(f"quantization_m must be non-negative, got {self.quantization_m}", "quantization_m")
        if self.histogram_bins < 0:
            raise ConfigError(f"histogram_bins must be non-negative, got {self.histogram_bins}", "histogram_bins")
        for key in PATH_KEYS:
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}", key)

    def canonical_text(self) -> str:
        """Sorted `key = value` lines of every experiment parameter; the output location is not one."""
        return "".join(f"{key} = {self.raw[key]}\n" for key in sorted(self.raw) if key not in UNHASHED_KEYS)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        values = dict(self.raw)
        values.update({key: str(value) for key, value in overrides.items() if value is not None})
        return config_from_mapping(values, self.base_dir)


def parse_config_text(text: str) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {number}: unknown key {key!r}", key)
        values[key] = value
    return values


def config_from_mapping(values: Dict[str, str], base_dir: Optional[Path] = None) -> ExperimentConfig:
    missing = [key for key in REQUIRED_KEYS if key not in values]
    if missing:
        raise ConfigError(f"missing required key {missing[0]!r}", missing[0])

    parsed: Dict[str, Any] = {}
    for key, text in values.items():
        try:
            parsed[key] = CONFIG_KEYS[key](text)
        except ValueError as e:
            raise ConfigError(f"malformed value for {key}: {e}", key)
        if key in PATH_KEYS and base_dir is not None and not parsed[key].is_absolute():
            parsed[key] = base_dir / parsed[key]

    setup_keys = {
        "optical_bandwidth_hz": "optical_bandwidth",
        "electrical_bandwidth_hz": "electrical_bandwidth",
        "optical_power_w": "optical_power",
        "center_wavelength_m": "center_wavelength",
        "polarization_degeneracy": "polarization_degeneracy",
    }
    try:
        setup = OpticalSetup(**{name: parsed.pop(key) for key, name in setup_keys.items() if key in parsed})
    except QrngError as e:
        raise ConfigError(str(e), e.field)

    return ExperimentConfig(setup=setup, raw=dict(values), base_dir=base_dir, **parsed)


def load_config(path: str) -> ExperimentConfig:
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}", "config")
    text = config_path.read_text(encoding="utf-8")
    return config_from_mapping(parse_config_text(text), base_dir=config_path.parent)
