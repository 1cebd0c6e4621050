"""Published setup tables used as reproduction targets and bundled fixtures."""
from typing import Dict, List, Tuple

from .errors import ConfigError

ELECTRICAL_BANDWIDTH_HZ = 5e9
CENTER_WAVELENGTH_M = 1550e-9
SAMPLE_RATE_HZ = 10e9
PUBLISHED_VOLTS_PER_PHOTON = 2.968e-8

# optical bandwidth (Hz), optical power (W), mode number, mean photons per mode
SETUPS = {
    "row1": {"optical_bandwidth_hz": 13e9, "optical_power_w": 33e-6, "mode_number": 2.9627, "nbar": 17383},
    "row2": {"optical_bandwidth_hz": 16e9, "optical_power_w": 45.4e-6, "mode_number": 3.5535, "nbar": 19939},
    "row3": {"optical_bandwidth_hz": 23e9, "optical_power_w": 73e-6, "mode_number": 4.9420, "nbar": 23052},
    "row4": {"optical_bandwidth_hz": 48.5e9, "optical_power_w": 161e-6, "mode_number": 10.0291, "nbar": 25831},
    "row5": {"optical_bandwidth_hz": 251e9, "optical_power_w": 825e-6, "mode_number": 50.5203, "nbar": 26257},
    "row6": {"optical_bandwidth_hz": 498.5e9, "optical_power_w": 1660e-6, "mode_number": 100.0193, "nbar": 26681},
}

# resolution m, merged min-entropy, min-entropy of the measured trace, deviation
ENTROPY_RESULTS = {
    "row1": {"resolution_m": 51, "h_merged": 10.2859, "h_empirical": 10.3913, "deviation": -0.010143},
    "row2": {"resolution_m": 51, "h_merged": 10.6597, "h_empirical": 10.7234, "deviation": -0.005940},
    "row3": {"resolution_m": 54, "h_merged": 11.0834, "h_empirical": 11.1139, "deviation": -0.002744},
    "row4": {"resolution_m": 91, "h_merged": 11.0754, "h_empirical": 11.0848, "deviation": -0.000848},
    "row5": {"resolution_m": 109, "h_merged": 12.0554, "h_empirical": 12.0618, "deviation": -0.000531},
    "row6": {"resolution_m": 182, "h_merged": 11.8375, "h_empirical": 11.8414, "deviation": -0.000329},
}

# laser power (W), photon count per window, mean voltage (V)
CALIBRATION_TABLE: List[Tuple[float, int, float]] = [
    (30.2e-6, 47130, 1.3963e-3),
    (50.3e-6, 78498, 2.3369e-3),
    (100.5e-6, 156840, 4.6824e-3),
    (501e-6, 781857, 23.201e-3),
    (1000e-6, 1560593, 46.256e-3),
    (1507e-6, 2351813, 69.857e-3),
    (2005e-6, 3128989, 93.074e-3),
]

MAX_PROBABILITY_ROW1 = 1.5709e-5
H_THEORETICAL_ROW1 = 15.9580
MEAN_UNIQUE_GAP_ROW1_V = 1.5114e-6


def setups_by_mode_number() -> List[str]:
    return sorted(SETUPS, key=lambda name: SETUPS[name]["mode_number"])


def calibration_points() -> List[Tuple[float, float]]:
    return [(float(n), v) for _, n, v in CALIBRATION_TABLE]


def setup_fields(name: str) -> Dict[str, float]:
    """Config keys describing one published setup."""
    if name not in SETUPS:
        raise ConfigError(f"unknown setup {name!r}; choose one of {', '.join(SETUPS)}", "setup")
    row = SETUPS[name]
    return {
        "optical_bandwidth_hz": row["optical_bandwidth_hz"],
        "electrical_bandwidth_hz": ELECTRICAL_BANDWIDTH_HZ,
        "polarization_degeneracy": 1,
        "optical_power_w": row["optical_power_w"],
        "center_wavelength_m": CENTER_WAVELENGTH_M,
    }
