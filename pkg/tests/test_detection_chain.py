import numpy as np
import pytest

from src.detection_chain import (
    DetectionCalibration,
    ElectronicNoiseSource,
    VoltageTrace,
    add_electronic_noise,
    calibrate_mapping,
    calibration_points_from_powers,
    photons_to_voltage,
    simulate_ase_experiment,
    split_components,
)
from src.errors import DomainError, EmptyTraceError, PreconditionError
from src.photon_statistics import OpticalSetup, distribution_for
from src.reference_data import CALIBRATION_TABLE, PUBLISHED_VOLTS_PER_PHOTON, calibration_points
from src.sampling import as_count_trace


class TestCalibration:
    def test_published_table(self):
        calib = calibrate_mapping(calibration_points())
        assert calib.volts_per_photon == pytest.approx(PUBLISHED_VOLTS_PER_PHOTON, rel=0.005)
        assert calib.fit_residual_relative_max < 0.01
        for n, v in calib.source_points:
            assert abs(v - calib.voltage(n)) / v <= calib.fit_residual_relative_max + 1e-15

    def test_single_point(self):
        assert calibrate_mapping([(100, 1e-6)]).volts_per_photon == pytest.approx(1e-8, rel=1e-15)

    def test_exact_line(self):
        points = [(n, 5e-8 * n) for n in (10, 200, 3000, 45000)]
        assert calibrate_mapping(points).volts_per_photon == pytest.approx(5e-8, rel=1e-12)

    def test_invalid_points(self):
        with pytest.raises(EmptyTraceError):
            calibrate_mapping([])
        with pytest.raises(DomainError):
            calibrate_mapping([(100, -1e-6)])
        with pytest.raises(DomainError):
            DetectionCalibration(0.0)

    def test_photon_counts_from_laser_powers(self):
        powers = [p for p, _, _ in CALIBRATION_TABLE]
        voltages = [v for _, _, v in CALIBRATION_TABLE]
        points = calibration_points_from_powers(powers, voltages)
        for (n, _), (_, published, _) in zip(points, CALIBRATION_TABLE):
            assert n == pytest.approx(published, rel=1e-3)


class TestPhotonsToVoltage:
    def test_zero_counts(self, published_calibration):
        v = photons_to_voltage(as_count_trace([0, 0, 0]), published_calibration)
        assert v.samples.tolist() == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("count,measured,gap", [(47130, 1.3963e-3, 0.002), (3128989, 93.074e-3, 0.003)])
    def test_published_rows(self, published_calibration, count, measured, gap):
        v = photons_to_voltage(as_count_trace([count]), published_calibration).samples[0]
        assert abs(v - measured) / measured < gap

    def test_linearity(self, published_calibration):
        counts = np.array([0, 1, 17, 51_000, 3_000_000])
        single = photons_to_voltage(as_count_trace(counts), published_calibration).samples
        doubled = photons_to_voltage(as_count_trace(2 * counts), published_calibration).samples
        assert np.array_equal(doubled, 2 * single)
        tripled = photons_to_voltage(as_count_trace(3 * counts), published_calibration).samples
        assert np.allclose(tripled, 3 * single, rtol=1e-15, atol=0)


class TestElectronicNoise:
    def test_zero_noise_is_identity(self):
        trace = VoltageTrace(np.linspace(0, 1, 1000))
        noisy = add_electronic_noise(trace, ElectronicNoiseSource.gaussian(0.0), seed=4)
        assert np.array_equal(noisy.samples, trace.samples)

    def test_constant_measured_noise_is_resampled(self):
        trace = VoltageTrace(np.linspace(0, 1, 1000))
        noise = ElectronicNoiseSource.measured(VoltageTrace(np.array([1e-4])))
        noisy = add_electronic_noise(trace, noise, seed=4)
        assert len(noisy) == len(trace)
        assert np.array_equal(noisy.samples, trace.samples + 1e-4)

    def test_long_measured_noise_is_aligned(self):
        recorded = np.arange(10.0)
        noisy = add_electronic_noise(VoltageTrace(np.zeros(4)), ElectronicNoiseSource.measured(VoltageTrace(recorded)), seed=0)
        assert noisy.samples.tolist() == [0.0, 1.0, 2.0, 3.0]

    def test_gaussian_standard_deviation(self):
        sigma = 3.8e-7
        noisy = add_electronic_noise(VoltageTrace(np.zeros(1_000_000)), ElectronicNoiseSource.gaussian(sigma), seed=17)
        assert noisy.samples.std(ddof=1) == pytest.approx(sigma, rel=0.005)

    def test_dc_offset_shifts_mean(self):
        noise = ElectronicNoiseSource.gaussian(1e-6, mean=0.0, dc_offset=2e-3)
        assert noise.expected_mean == 2e-3
        noisy = add_electronic_noise(VoltageTrace(np.zeros(100_000)), noise, seed=1)
        assert noisy.samples.mean() == pytest.approx(2e-3, rel=1e-3)

    def test_deterministic_for_seed(self):
        trace = VoltageTrace(np.zeros(100))
        noise = ElectronicNoiseSource.gaussian(1.0)
        assert np.array_equal(add_electronic_noise(trace, noise, 3).samples, add_electronic_noise(trace, noise, 3).samples)

    def test_invalid_sources(self):
        with pytest.raises(DomainError):
            ElectronicNoiseSource.gaussian(-1.0)
        with pytest.raises(EmptyTraceError):
            VoltageTrace(np.array([]))
        with pytest.raises(DomainError):
            VoltageTrace(np.zeros(3), sample_rate=0.0)


class TestSimulation:
    def test_zero_power_zero_noise(self, published_calibration):
        trace = simulate_ase_experiment(
            OpticalSetup(13e9, 5e9, 0.0), published_calibration, ElectronicNoiseSource.gaussian(0.0), 1000, seed=1,
        )
        assert np.all(trace.samples == 0.0)

    def test_reproducible(self, published_calibration):
        setup = OpticalSetup(13e9, 5e9, 1e-9)
        noise = ElectronicNoiseSource.gaussian(1e-7)
        first = simulate_ase_experiment(setup, published_calibration, noise, 20_000, seed=42)
        again = simulate_ase_experiment(setup, published_calibration, noise, 20_000, seed=42, chunk_size=333, workers=2)
        assert np.array_equal(first.samples, again.samples)

    def test_short_measured_noise_rejected(self, published_calibration):
        noise = ElectronicNoiseSource.measured(VoltageTrace(np.zeros(100)))
        with pytest.raises(PreconditionError) as info:
            simulate_ase_experiment(OpticalSetup(13e9, 5e9, 1e-9), published_calibration, noise, 10, seed=1)
        assert info.value.field == "noise_trace"

    def test_composition_mean(self):
        calib = DetectionCalibration.from_coefficient(1e-6)
        distribution = distribution_for(1000.0, 10.0)
        noise = ElectronicNoiseSource.gaussian(1e-4, mean=2e-3)
        trace = simulate_ase_experiment(
            OpticalSetup(1e9, 1e9), calib, noise, 1_000_000, seed=6, distribution=distribution,
        )
        expected = calib.volts_per_photon * distribution.model.mean_photons_total + noise.expected_mean
        standard_error = trace.samples.std(ddof=1) / np.sqrt(len(trace))
        assert abs(trace.samples.mean() - expected) < 3 * standard_error

    def test_noise_independent_of_photon_component(self, row1_distribution, published_calibration):
        photon, noise = split_components(
            row1_distribution, published_calibration, ElectronicNoiseSource.gaussian(3.8e-7), 1_000_000, seed=2,
        )
        assert abs(np.corrcoef(photon.samples, noise.samples)[0, 1]) < 0.01
