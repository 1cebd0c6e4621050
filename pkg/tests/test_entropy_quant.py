import math

import numpy as np
import pytest

from src.detection_chain import ElectronicNoiseSource, VoltageTrace, photons_to_voltage, simulate_ase_experiment
from src.entropy_quant import (
    REPORT_KEYS,
    build_report,
    empirical_min_entropy,
    estimate_resolution,
    gaussian_fit,
    gaussian_fit_bins,
    grid_resolution,
    merge_distribution,
    min_entropy,
    parse_report,
    quantize_trace,
    relative_deviation,
    resolution_from_gap,
)
from src.errors import DegenerateTraceError, DomainError, EmptyTraceError, FormatError, PreconditionError
from src.photon_statistics import OpticalSetup, PhotonDistribution, distribution_for
from src.reference_data import ENTROPY_RESULTS, MEAN_UNIQUE_GAP_ROW1_V, PUBLISHED_VOLTS_PER_PHOTON, SETUPS
from src.sampling import Histogram, SampleRequest, as_count_trace, inverse_transform_sample

DV0 = PUBLISHED_VOLTS_PER_PHOTON


class TestMinEntropy:
    def test_uniform(self):
        assert min_entropy(Histogram(np.arange(1024), np.full(1024, 1 / 1024))) == pytest.approx(10.0)

    def test_point_mass(self):
        assert min_entropy(PhotonDistribution.from_probabilities([1.0], support_min=3)) == 0.0

    def test_unnormalized_rejected(self):
        with pytest.raises(PreconditionError):
            min_entropy(Histogram(np.arange(2), np.array([0.5, 0.4])))
        with pytest.raises(EmptyTraceError):
            min_entropy(Histogram(np.array([]), np.array([])))


class TestMerge:
    def test_identity_at_unit_resolution(self, row1_distribution):
        merged = merge_distribution(row1_distribution, 1)
        assert np.array_equal(merged.values, row1_distribution.support)
        assert np.array_equal(merged.probabilities, row1_distribution.probabilities)
        assert min_entropy(merged) == min_entropy(row1_distribution)

    def test_row1_resolution_51(self, row1_distribution):
        assert min_entropy(merge_distribution(row1_distribution, 51)) == pytest.approx(10.2859, abs=0.005)

    @pytest.mark.parametrize("name", list(SETUPS))
    def test_published_merged_entropies(self, name):
        d = distribution_for(SETUPS[name]["nbar"], SETUPS[name]["mode_number"])
        result = ENTROPY_RESULTS[name]
        assert min_entropy(merge_distribution(d, result["resolution_m"])) == pytest.approx(result["h_merged"], abs=0.02)

    def test_bins_anchored_at_zero(self):
        d = PhotonDistribution.from_probabilities([0.1, 0.2, 0.3, 0.4], support_min=2)
        merged = merge_distribution(d, 3)
        assert merged.values.tolist() == [0, 3]
        assert merged.probabilities == pytest.approx([0.1, 0.9])
        shifted = merge_distribution(d, 3, offset=1)
        assert shifted.values.tolist() == [1, 4]
        assert shifted.probabilities == pytest.approx([0.3, 0.7])

    def test_nested_merging_never_raises_entropy(self, row1_distribution):
        previous = min_entropy(merge_distribution(row1_distribution, 3))
        for j in (2, 4, 8):
            current = min_entropy(merge_distribution(row1_distribution, 3 * j))
            assert current <= previous + 1e-12
        for m in (1, 7, 51, 1000):
            total = math.fsum(merge_distribution(row1_distribution, m).probabilities)
            assert total == pytest.approx(row1_distribution.total, abs=1e-12)

    def test_merged_never_exceeds_theoretical(self, row1_distribution):
        h = min_entropy(row1_distribution)
        for m in (2, 51, 182):
            assert min_entropy(merge_distribution(row1_distribution, m)) <= h

    def test_nonpositive_resolution_rejected(self, row1_distribution):
        with pytest.raises(DomainError):
            merge_distribution(row1_distribution, 0)


class TestResolution:
    def test_published_gap(self):
        assert resolution_from_gap(MEAN_UNIQUE_GAP_ROW1_V, DV0) == 51

    @pytest.mark.parametrize("k", [1, 2, 3, 10, 51])
    def test_populated_grid(self, k):
        trace = VoltageTrace(np.repeat(np.arange(300) * k * DV0, 3))
        estimate = estimate_resolution(trace, DV0)
        assert estimate.resolution_m == k
        assert estimate.mean_unique_gap == pytest.approx(k * DV0, rel=1e-9)

    def test_trimmed_mean_ignores_outlier_gap(self):
        levels = np.concatenate([np.arange(100) * 3 * DV0, [1000 * DV0]])
        assert estimate_resolution(VoltageTrace(levels), DV0).resolution_m > 3
        assert estimate_resolution(VoltageTrace(levels), DV0, trim_fraction=0.05).resolution_m == 3

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateTraceError):
            estimate_resolution(VoltageTrace(np.full(10, 1e-3)), DV0)
        with pytest.raises(DomainError):
            estimate_resolution(VoltageTrace(np.arange(10.0)), 0.0)
        with pytest.raises(DomainError):
            estimate_resolution(VoltageTrace(np.arange(10.0)), DV0, trim_fraction=0.5)

    def test_grid_resolution(self):
        estimate = grid_resolution(51, DV0)
        assert estimate.resolution_m == 51
        assert estimate.mean_unique_gap == pytest.approx(51 * DV0)


class TestEmpiricalEntropy:
    def test_constant_trace(self):
        assert empirical_min_entropy(VoltageTrace(np.full(50, 0.25))) == 0.0

    def test_uniform_cycle(self):
        trace = VoltageTrace(np.tile(np.arange(256) * DV0, 1000))
        assert empirical_min_entropy(trace) == 8.0

    def test_deviation_sign(self):
        assert relative_deviation(10.2859, 10.3913) == pytest.approx(-0.010143, abs=1e-5)
        assert relative_deviation(0.0, 0.0) == 0.0


class TestQuantize:
    def test_wide_level_collapses_trace(self):
        trace = VoltageTrace(np.linspace(0.0, 0.9, 50))
        assert np.unique(quantize_trace(trace, 10.0).samples).tolist() == [0.0]

    def test_level_count_of_gaussian_trace(self):
        samples = np.random.default_rng(5).normal(0.0, 1.0, 100_000)
        quantized = quantize_trace(VoltageTrace(samples), 0.5)
        expected = (math.floor(samples.max() / 0.5) - math.floor(samples.min() / 0.5)) + 1
        assert abs(len(np.unique(quantized.samples)) - expected) <= 2

    def test_levels_are_multiples_of_width(self):
        quantized = quantize_trace(VoltageTrace(np.array([0.0, 0.49, 0.5, 1.26, -0.1])), 0.5)
        assert quantized.samples.tolist() == [0.0, 0.0, 0.5, 1.0, -0.5]

    @pytest.mark.parametrize("m", [3, 7, 51, 91, 182])
    def test_noiseless_levels_match_photon_bins(self, published_calibration, m):
        counts = np.arange(200_000)
        trace = photons_to_voltage(as_count_trace(counts), published_calibration)
        quantized = quantize_trace(trace, m * DV0)
        assert np.array_equal(np.rint(quantized.samples / (m * DV0)).astype(np.int64), counts // m)

    def test_nonpositive_width_rejected(self):
        with pytest.raises(DomainError):
            quantize_trace(VoltageTrace(np.arange(3.0)), 0.0)


class TestGaussianFit:
    def test_recovers_gaussian(self):
        samples = np.random.default_rng(9).normal(5.0, 2.0, 1_000_000)
        fit = gaussian_fit(VoltageTrace(samples))
        assert fit.mean == pytest.approx(5.0, rel=0.005)
        assert fit.std_dev == pytest.approx(2.0, rel=0.005)
        assert fit.fit_distance < 0.01

    def test_bins_for_plotting(self):
        trace = VoltageTrace(np.random.default_rng(2).normal(0.0, 1.0, 50_000))
        fit = gaussian_fit(trace)
        edges, observed, expected = gaussian_fit_bins(trace, fit)
        assert len(edges) == 101 and len(observed) == len(expected) == 100
        assert observed.sum() == pytest.approx(1.0)
        assert 0.99 < expected.sum() <= 1.0
        assert fit.fit_distance == pytest.approx(0.5 * (np.abs(observed - expected).sum() + 1.0 - expected.sum()))

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            gaussian_fit(VoltageTrace(np.arange(999.0)))
        with pytest.raises(DegenerateTraceError):
            gaussian_fit(VoltageTrace(np.ones(5000)))

    @pytest.mark.slow
    def test_large_mode_number_fits_better(self, published_calibration):
        noise = ElectronicNoiseSource.gaussian(3.8e-7)
        fits = {}
        for name in ("row1", "row6"):
            d = distribution_for(SETUPS[name]["nbar"], SETUPS[name]["mode_number"])
            trace = simulate_ase_experiment(OpticalSetup(1.0, 1.0), published_calibration, noise, 10_000_000, seed=3, distribution=d)
            fits[name] = gaussian_fit(trace).fit_distance
        assert fits["row6"] < 0.03
        assert fits["row6"] < fits["row1"]


class TestReport:
    def test_uniform_pmf_noiseless_trace(self):
        d = PhotonDistribution.from_probabilities(np.full(256, 1 / 256))
        trace = VoltageTrace(np.tile(np.arange(256.0), 40))
        report = build_report(d, trace, delta_v0=1.0)
        assert report.resolution.resolution_m == 1
        assert report.h_merged == pytest.approx(8.0)
        assert report.h_empirical == pytest.approx(8.0)
        assert report.deviation == pytest.approx(0.0, abs=1e-12)

    def test_row1_rate(self, row1_distribution):
        trace = VoltageTrace(np.arange(100) * 51 * DV0, sample_rate=1e10)
        report = build_report(row1_distribution, trace, DV0)
        assert report.resolution.resolution_m == 51
        assert report.equivalent_rate_bits_per_s == pytest.approx(102.859e9, abs=5e7)
        assert report.equivalent_rate_bits_per_s == pytest.approx(report.h_merged * 1e10, rel=1e-9)
        assert report.h_merged <= report.h_theoretical

    def test_row4_merged(self):
        d = distribution_for(SETUPS["row4"]["nbar"], SETUPS["row4"]["mode_number"])
        trace = VoltageTrace(np.arange(10) * 91 * DV0)
        assert build_report(d, trace, DV0).h_merged == pytest.approx(11.0754, abs=0.01)

    def test_text_form(self, row1_distribution):
        trace = VoltageTrace(np.arange(100) * 51 * DV0)
        report = build_report(row1_distribution, trace, DV0, resolution=grid_resolution(51, DV0))
        text = report.to_text()
        assert [line.split(" = ")[0] for line in text.splitlines()] == list(REPORT_KEYS)
        values = parse_report("# provenance\n" + text)
        assert values["resolution_m"] == 51
        assert values["h_merged_bits"] == report.h_merged

    @pytest.mark.parametrize("text", ["h_merged_bits 10.2", "h_merged_bits = ten"])
    def test_malformed_report_text(self, text):
        with pytest.raises(FormatError):
            parse_report(text)


def sample_merged(distribution, m, count, seed):
    merged = merge_distribution(distribution, m)
    pmf = PhotonDistribution.from_probabilities(merged.probabilities, support_min=int(merged.values[0]) // m)
    return merged, inverse_transform_sample(SampleRequest(pmf, count, seed))


@pytest.mark.slow
def test_empirical_entropy_converges_to_merged(row1_distribution):
    merged, trace = sample_merged(row1_distribution, 51, 10_000_000, seed=4)
    h_emp = empirical_min_entropy(VoltageTrace(trace.counts.astype(np.float64)))
    assert abs(h_emp - min_entropy(merged)) < 0.05


@pytest.mark.slow
def test_row1_end_to_end_deviation(row1_distribution, published_calibration):
    m = ENTROPY_RESULTS["row1"]["resolution_m"]
    noise = ElectronicNoiseSource.gaussian(0.25 * m * DV0)
    trace = simulate_ase_experiment(
        OpticalSetup(1.0, 1.0), published_calibration, noise, 10_000_000, seed=20240501, distribution=row1_distribution,
    )
    report = build_report(row1_distribution, quantize_trace(trace, m * DV0), DV0, resolution=grid_resolution(m, DV0))
    assert abs(report.h_empirical - report.h_merged) / report.h_empirical < 0.02
