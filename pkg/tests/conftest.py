import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.detection_chain import DetectionCalibration
from src.photon_statistics import distribution_for
from src.reference_data import PUBLISHED_VOLTS_PER_PHOTON, SETUPS

DATA_DIR = ROOT / "data"


@pytest.fixture(scope="session")
def row1_distribution():
    return distribution_for(SETUPS["row1"]["nbar"], SETUPS["row1"]["mode_number"])


@pytest.fixture(scope="session")
def published_calibration():
    return DetectionCalibration.from_coefficient(PUBLISHED_VOLTS_PER_PHOTON)


@pytest.fixture
def data_dir():
    return DATA_DIR
