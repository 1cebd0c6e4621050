"""Batch experiment runner: config in, simulated trace, histograms and entropy report out."""
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from statistics import median
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import config as settings
from .config import ExperimentConfig
from .data_processing import (
    ArtifactWriter,
    downsample_histogram,
    provenance_lines,
    read_calibration_csv,
    read_voltage_trace,
    save_json,
    write_histogram_csv,
    write_voltage_trace,
)
from .detection_chain import (
    DetectionCalibration,
    ElectronicNoiseSource,
    VoltageTrace,
    add_electronic_noise,
    calibrate_mapping,
    noise_seed,
    photons_to_voltage,
    simulate_ase_experiment,
)
from .entropy_quant import (
    EntropyReport,
    build_report,
    empirical_min_entropy,
    estimate_resolution,
    grid_resolution,
    merge_distribution,
    min_entropy,
    quantize_trace,
    relative_deviation,
)
from .errors import ConfigError, DomainError, EmptyTraceError
from .photon_statistics import (
    OpticalSetup,
    PhotonDistribution,
    build_distribution,
    distribution_for,
    mean_photons,
    mode_number,
    mode_number_for_ratio,
)
from .reference_data import (
    ENTROPY_RESULTS,
    PUBLISHED_VOLTS_PER_PHOTON,
    SETUPS,
    calibration_points,
    setup_fields,
    setups_by_mode_number,
)
from .sampling import (
    Histogram,
    SampleRequest,
    empirical_pmf,
    histogram_from_distribution,
    inverse_transform_sample,
    pearson_chi_square,
    total_variation_distance,
)

logger = logging.getLogger(__name__)

SURFACE_HEADER = "ratio,polarization_degeneracy,mode_number"


@dataclass(frozen=True)
class TraceComparison:
    total_variation: float
    chi_square: float
    degrees_of_freedom: int
    p_value: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "total_variation": self.total_variation,
            "chi_square": self.chi_square,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value": self.p_value,
        }


@dataclass
class ExperimentOutcome:
    report: EntropyReport
    distribution: PhotonDistribution
    trace: VoltageTrace
    estimated_resolution_m: int
    comparison: Optional[TraceComparison] = None
    files: List[Path] = field(default_factory=list)


def load_calibration(config: ExperimentConfig) -> DetectionCalibration:
    if config.calibration_file is not None:
        return calibrate_mapping(read_calibration_csv(str(config.calibration_file)))
    if config.volts_per_photon is not None:
        return DetectionCalibration.from_coefficient(config.volts_per_photon)
    return calibrate_mapping(calibration_points())


def load_noise(config: ExperimentConfig) -> ElectronicNoiseSource:
    if config.noise_trace is not None:
        return ElectronicNoiseSource.measured(read_voltage_trace(str(config.noise_trace)))
    return ElectronicNoiseSource.gaussian(config.noise_std_v, config.noise_mean_v, config.noise_dc_offset_v)


def compare_traces(
    trace_a,
    trace_b,
    bin_width: Optional[float] = None,
    expected_from_a: bool = True,
) -> TraceComparison:
    """
    Total variation and Pearson chi-square between two traces on a common binning.

    Without bin_width every distinct observed value is its own bin. The
    chi-square takes trace_a (or trace_b when expected_from_a is False) as the
    expected distribution.
    """
    a = np.asarray(getattr(trace_a, "values", trace_a), dtype=np.float64)
    b = np.asarray(getattr(trace_b, "values", trace_b), dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptyTraceError("cannot compare an empty trace", "trace")
    if bin_width is not None:
        if not bin_width > 0:
            raise DomainError(f"bin width must be positive, got {bin_width!r}", "bin_width")
        a, b = np.floor(a / bin_width), np.floor(b / bin_width)

    hist_a, hist_b = empirical_pmf(a), empirical_pmf(b)
    distance = total_variation_distance(hist_a, hist_b)

    expected_hist, observed_hist = (hist_a, hist_b) if expected_from_a else (hist_b, hist_a)
    values = np.union1d(hist_a.values, hist_b.values)
    expected = np.zeros(len(values))
    observed = np.zeros(len(values))
    expected[np.searchsorted(values, expected_hist.values)] = expected_hist.probabilities * observed_hist.counts.sum()
    observed[np.searchsorted(values, observed_hist.values)] = observed_hist.counts
    statistic, dof, p_value = pearson_chi_square(observed, expected)
    return TraceComparison(distance, statistic, dof, p_value)


def parse_pmf_spec(text: str, tail_tolerance: float = settings.TAIL_TOLERANCE) -> PhotonDistribution:
    """Distribution from an inline `nbar=<value>,M=<value>` description."""
    fields: Dict[str, float] = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise DomainError(f"expected 'key=value' in pmf description, got {item!r}", "pmf_from")
        try:
            fields[key.strip()] = float(value)
        except ValueError:
            raise DomainError(f"non-numeric value in pmf description: {item!r}", "pmf_from")
    missing = [key for key in ("nbar", "M") if key not in fields]
    if missing:
        raise DomainError(f"pmf description lacks {missing[0]!r}", "pmf_from")
    return distribution_for(fields["nbar"], fields["M"], tail_tolerance)


def emit_mode_number_surface(
    ratio_min: float,
    ratio_max: float,
    points: int,
    s_values: Sequence[int] = (1, 2),
    include_ratios: Iterable[float] = (),
) -> List[Tuple[float, int, float]]:
    """(r, s, M) rows over a log-spaced grid of bandwidth ratios."""
    if not 0 < ratio_min < ratio_max:
        raise DomainError(f"need 0 < ratio_min < ratio_max, got {ratio_min!r}, {ratio_max!r}", "ratio_min")
    if points < 2:
        raise DomainError(f"a surface needs at least 2 points, got {points}", "points")
    ratios = np.union1d(np.geomspace(ratio_min, ratio_max, points), np.asarray(list(include_ratios), dtype=np.float64))
    rows = []
    for s in s_values:
        for r in ratios.tolist():
            rows.append((r, int(s), mode_number_for_ratio(r, int(s))))
    return rows


def write_surface_csv(path: str, rows: Sequence[Tuple[float, int, float]], provenance: Iterable[str] = ()):
    with open(path, 'w', encoding='utf-8') as f:
        for line in provenance:
            f.write(line + "\n")
        f.write(SURFACE_HEADER + "\n")
        for r, s, m in rows:
            f.write(f"{r:.17g},{s},{m:.17g}\n")


class ExperimentRunner:
    """Runs one experiment config end to end and writes its artifacts."""

    def __init__(self, config: ExperimentConfig, workers: int = settings.WORKERS):
        self.config = config
        self.workers = workers

    def provenance(self) -> List[str]:
        return provenance_lines(self.config.config_hash(), self.config.master_seed, settings.TOOL_VERSION)

    def simulate(self) -> ExperimentOutcome:
        config = self.config
        model = mean_photons(config.setup, mode_number(config.setup))
        logger.info("%s: M = %.4f, nbar = %.1f", config.label, model.mode_number, model.mean_photons_per_mode)
        distribution = build_distribution(model, config.tail_tolerance)
        calib = load_calibration(config)
        noise = load_noise(config)

        trace = simulate_ase_experiment(
            config.setup,
            calib,
            noise,
            config.sample_count,
            config.master_seed,
            config.tail_tolerance,
            config.sample_rate_hz,
            distribution=distribution,
            workers=self.workers,
            label=config.label,
        )
        resolution = None
        if config.quantization_m > 0:
            trace = quantize_trace(trace, config.quantization_m * calib.delta_v0)
            resolution = grid_resolution(config.quantization_m, calib.delta_v0)

        estimated = estimate_resolution(trace, calib.delta_v0, config.trim_fraction) if len(np.unique(trace.samples)) > 1 else None
        estimated_m = estimated.resolution_m if estimated else 1
        if resolution is None:
            if estimated is None:
                resolution = grid_resolution(1, calib.delta_v0)
            else:
                resolution = estimated
        elif estimated_m != resolution.resolution_m:
            logger.warning(
                "resolution estimated from the trace is %d, merging at the emulated grid m = %d",
                estimated_m, resolution.resolution_m,
            )

        report = build_report(distribution, trace, calib.delta_v0, config.trim_fraction, resolution=resolution)

        comparison = None
        if config.reference_trace is not None:
            comparison = compare_traces(read_voltage_trace(str(config.reference_trace)), trace)
        return ExperimentOutcome(report, distribution, trace, estimated_m, comparison)

    def write(self, outcome: ExperimentOutcome, extra: Optional[Dict[str, Any]] = None) -> List[Path]:
        config = self.config
        header = self.provenance()
        delta_v0 = outcome.report.resolution.delta_v0
        merged = merge_distribution(outcome.distribution, outcome.report.resolution.resolution_m)
        merged_volts = Histogram(merged.values * delta_v0, merged.probabilities)

        with ArtifactWriter(str(config.outputs)) as writer:
            write_voltage_trace(writer.path("trace.csv"), outcome.trace, header)
            write_histogram_csv(writer.path("histogram_empirical.csv"), empirical_pmf(outcome.trace), header)
            write_histogram_csv(writer.path("histogram_theoretical.csv"), histogram_from_distribution(outcome.distribution), header)
            write_histogram_csv(writer.path("histogram_merged.csv"), merged_volts, header)
            if config.histogram_bins > 0:
                binned = downsample_histogram(outcome.trace.samples, config.histogram_bins)
                write_histogram_csv(writer.path("histogram_empirical_binned.csv"), binned, header)
            with open(writer.path("report.txt"), 'w', encoding='utf-8') as f:
                f.write("\n".join(header) + "\n")
                f.write(outcome.report.to_text())
            structured = {
                "provenance": {
                    "config_sha256": config.config_hash(),
                    "seed": config.master_seed,
                    "version": settings.TOOL_VERSION,
                },
                "report": outcome.report.as_dict(),
                "estimated_resolution_m": outcome.estimated_resolution_m,
                "mode_number": outcome.distribution.model.mode_number,
                "nbar": outcome.distribution.model.mean_photons_per_mode,
            }
            if outcome.comparison is not None:
                structured["comparison"] = outcome.comparison.as_dict()
            save_json(writer.path("report.json"), structured)
            save_json(writer.path("metadata.json"), {
                "finished_utc": datetime.now(timezone.utc).isoformat(),
                "config_sha256": config.config_hash(),
                "config": config.raw,
                "arguments": extra or {},
            })
        return writer.written

    def compare_with_resimulation(self, trace: VoltageTrace, seed: int) -> TraceComparison:
        """Baseline for a trace when no measured reference exists: the same config run under another seed."""
        baseline = ExperimentRunner(self.config.with_overrides(master_seed=seed), self.workers)
        return compare_traces(baseline.simulate().trace, trace)

    def run(self, extra: Optional[Dict[str, Any]] = None) -> ExperimentOutcome:
        outcome = self.simulate()
        outcome.files = self.write(outcome, extra)
        return outcome


def run_experiment(config: ExperimentConfig, extra: Optional[Dict[str, Any]] = None) -> ExperimentOutcome:
    return ExperimentRunner(config).run(extra)


def reproduce_published_tables(tail_tolerance: float = settings.TAIL_TOLERANCE) -> List[Dict[str, float]]:
    """
    Mode number, mean photons and merged min-entropy for every published setup.

    The merged min-entropy uses the published mean photon number and
    resolution so it can be compared with the published value directly.
    """
    rows = []
    for name in setups_by_mode_number():
        published = SETUPS[name]
        entropy = ENTROPY_RESULTS[name]
        fields = setup_fields(name)
        setup = OpticalSetup(
            fields["optical_bandwidth_hz"],
            fields["electrical_bandwidth_hz"],
            fields["optical_power_w"],
            fields["center_wavelength_m"],
            fields["polarization_degeneracy"],
        )
        model = mean_photons(setup)
        distribution = distribution_for(published["nbar"], published["mode_number"], tail_tolerance)
        h_merged = min_entropy(merge_distribution(distribution, entropy["resolution_m"]))
        rows.append({
            "setup": name,
            "mode_number": model.mode_number,
            "mode_number_published": published["mode_number"],
            "nbar": model.mean_photons_per_mode,
            "nbar_published": published["nbar"],
            "resolution_m": entropy["resolution_m"],
            "h_theoretical": min_entropy(distribution),
            "h_merged": h_merged,
            "h_merged_published": entropy["h_merged"],
            "rate_bits_per_s": h_merged * settings.SAMPLE_RATE_HZ,
        })
    return rows


def quantized_deviation(
    distribution: PhotonDistribution,
    calib: DetectionCalibration,
    noise: ElectronicNoiseSource,
    resolution_m: int,
    count: int,
    seed: int,
) -> Tuple[float, float, float]:
    """(h_merged, h_empirical, deviation) for one simulated trace quantized to m photons per level."""
    counts = inverse_transform_sample(SampleRequest(distribution, count, seed))
    trace = add_electronic_noise(photons_to_voltage(counts, calib), noise, noise_seed(seed))
    quantized = quantize_trace(trace, resolution_m * calib.delta_v0)
    h_merged = min_entropy(merge_distribution(distribution, resolution_m))
    h_empirical = empirical_min_entropy(quantized)
    return h_merged, h_empirical, relative_deviation(h_merged, h_empirical)


def deviation_trend(
    seeds: Sequence[int],
    count: int,
    noise_std_v: float,
    calib: Optional[DetectionCalibration] = None,
    tail_tolerance: float = settings.TAIL_TOLERANCE,
) -> List[Dict[str, float]]:
    """Median |deviation| over seeds for every published setup, ordered by mode number."""
    calib = calib or DetectionCalibration.from_coefficient(PUBLISHED_VOLTS_PER_PHOTON)
    noise = ElectronicNoiseSource.gaussian(noise_std_v)
    rows = []
    for name in setups_by_mode_number():
        published = SETUPS[name]
        m = ENTROPY_RESULTS[name]["resolution_m"]
        distribution = distribution_for(published["nbar"], published["mode_number"], tail_tolerance)
        deviations = [abs(quantized_deviation(distribution, calib, noise, m, count, seed)[2]) for seed in seeds]
        rows.append({
            "setup": name,
            "mode_number": published["mode_number"],
            "resolution_m": m,
            "median_abs_deviation": median(deviations),
        })
        logger.info("%s: median |deviation| %.5f over %d seeds", name, rows[-1]["median_abs_deviation"], len(seeds))
    return rows


def deviation_versus_count(
    setup_name: str,
    counts: Sequence[int],
    seeds: Sequence[int],
    noise_std_v: float,
    calib: Optional[DetectionCalibration] = None,
    tail_tolerance: float = settings.TAIL_TOLERANCE,
) -> List[Dict[str, float]]:
    """
    Median signed and absolute deviation of one published setup at each trace length.

    A positive deviation that shrinks as the count grows marks the upward bias
    of the empirical maximum frequency on a finite trace.
    """
    if setup_name not in SETUPS:
        raise ConfigError(f"unknown setup {setup_name!r}; choose one of {', '.join(SETUPS)}", "setup")
    calib = calib or DetectionCalibration.from_coefficient(PUBLISHED_VOLTS_PER_PHOTON)
    noise = ElectronicNoiseSource.gaussian(noise_std_v)
    published = SETUPS[setup_name]
    m = ENTROPY_RESULTS[setup_name]["resolution_m"]
    distribution = distribution_for(published["nbar"], published["mode_number"], tail_tolerance)
    rows = []
    for count in counts:
        deviations = [quantized_deviation(distribution, calib, noise, m, count, seed)[2] for seed in seeds]
        rows.append({
            "setup": setup_name,
            "count": int(count),
            "median_deviation": median(deviations),
            "median_abs_deviation": median(abs(d) for d in deviations),
        })
        logger.info("%s at %d samples: median deviation %+.5f", setup_name, count, rows[-1]["median_deviation"])
    return rows


def is_non_increasing(values: Sequence[float]) -> bool:
    return all(later <= earlier or math.isclose(later, earlier) for earlier, later in zip(values, values[1:]))
