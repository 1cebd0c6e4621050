#!/usr/bin/env python3
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src import config as settings
from src.config import config_from_mapping, load_config
from src.data_processing import (
    ArtifactWriter,
    provenance_lines,
    read_bitstream,
    read_calibration_csv,
    read_counts,
    read_voltage_trace,
    write_bitstream,
    write_calibration_fit_csv,
    write_counts,
    write_gaussian_fit_csv,
    write_histogram_csv,
    write_levels_csv,
    write_voltage_trace,
)
from src.detection_chain import calibrate_mapping
from src.entropy_quant import (
    empirical_min_entropy,
    estimate_resolution,
    gaussian_fit,
    gaussian_fit_bins,
    merge_distribution,
    min_entropy,
    parse_report,
)
from src.errors import ConfigError, FormatError, QrngError
from src.extractor import (
    ToeplitzSpec,
    raw_bits_from_trace,
    smoke_test,
    toeplitz_extract,
)
from src.harness import (
    ExperimentRunner,
    compare_traces,
    emit_mode_number_surface,
    parse_pmf_spec,
    write_surface_csv,
)
from src.photon_statistics import OpticalSetup, build_distribution, mean_photons, mode_number
from src.reference_data import calibration_points, setup_fields
from src.sampling import SampleRequest, chi_square_against, histogram_from_distribution, inverse_transform_sample

logger = logging.getLogger("qrng")


def banner(title: str):
    print("\n" + "=" * 60, file=sys.stderr)
    print(title, file=sys.stderr)
    print("=" * 60, file=sys.stderr)


def numeric_arguments(args: argparse.Namespace) -> Dict[str, Any]:
    """Numeric flags echoed into every result for provenance."""
    return {
        key: value for key, value in sorted(vars(args).items())
        if isinstance(value, (int, float)) and not isinstance(value, bool) and key != "verbosity"
    }


def emit(result: Dict[str, Any], args: argparse.Namespace):
    result = dict(result)
    result["arguments"] = numeric_arguments(args)
    if args.format == "structured":
        print(json.dumps(result, indent=2, sort_keys=True, default=float))
        return
    for key, value in result.items():
        if key == "arguments":
            for name, number in value.items():
                print(f"# {name}={number}")
        elif isinstance(value, float):
            print(f"{key},{value:.17g}")
        else:
            print(f"{key},{value}")


def resolve_config(args: argparse.Namespace):
    """Experiment config from --config or --setup, with --seed/--count/--out applied on top."""
    if getattr(args, "config", None):
        config = load_config(args.config)
    elif getattr(args, "setup", None):
        config = config_from_mapping({key: str(value) for key, value in setup_fields(args.setup).items()})
    else:
        return None
    overrides = {
        "master_seed": args.seed,
        "sample_count": getattr(args, "count", None),
        "outputs": args.out,
    }
    return config.with_overrides(**overrides)


def distribution_from_args(args: argparse.Namespace):
    if args.pmf_from:
        return parse_pmf_spec(args.pmf_from, args.tail_tolerance)
    config = resolve_config(args)
    if config is None:
        raise ConfigError("give --pmf-from, --config or --setup", "pmf_from")
    return build_distribution(mean_photons(config.setup), config.tail_tolerance)


def used_seed(args: argparse.Namespace) -> int:
    return 0 if args.seed is None else args.seed


def config_hash_for(args: argparse.Namespace) -> str:
    config = resolve_config(args) if (getattr(args, "config", None) or getattr(args, "setup", None)) else None
    return config.config_hash() if config else "-"


def provenance_for(args: argparse.Namespace, seed: Optional[int] = None) -> List[str]:
    """Header lines; `seed` overrides --seed when a command drew with a default."""
    return provenance_lines(config_hash_for(args), args.seed if seed is None else seed, settings.TOOL_VERSION)


def write_outputs(args: argparse.Namespace, writers: Dict[str, Callable[[str], None]]) -> Dict[str, Path]:
    """Run each writer against a staged path; files appear in --out only once all succeed."""
    with ArtifactWriter(args.out or settings.OUTPUT_DIR) as writer:
        for name, write in writers.items():
            write(writer.path(name))
    for path in writer.written:
        logger.info("wrote %s", path)
    return {path.name: path for path in writer.written}


def cmd_model(args: argparse.Namespace):
    if args.b_opt is not None:
        setup = OpticalSetup(args.b_opt, args.b_ele, args.power, args.wavelength, args.polarization)
    else:
        config = resolve_config(args)
        if config is None:
            raise ConfigError("give --b-opt or --config or --setup", "optical_bandwidth_hz")
        setup = config.setup
    model = mean_photons(setup, mode_number(setup))
    distribution = build_distribution(model, args.tail_tolerance)
    if args.out:
        write_outputs(args, {
            "histogram_theoretical.csv": lambda path: write_histogram_csv(
                path, histogram_from_distribution(distribution), provenance_for(args)),
        })
    emit({
        "mode_number": model.mode_number,
        "nbar": model.mean_photons_per_mode,
        "nbar_total": model.mean_photons_total,
        "support_min": distribution.support_min,
        "support_max": distribution.support_max,
        "max_probability": distribution.max_probability,
        "h_theoretical_bits": min_entropy(distribution),
    }, args)


def cmd_sample(args: argparse.Namespace):
    distribution = distribution_from_args(args)
    seed = used_seed(args)
    trace = inverse_transform_sample(SampleRequest(distribution, args.count, seed, workers=args.workers))
    statistic, dof, p_value = chi_square_against(trace, distribution)
    path = write_outputs(args, {
        "counts.txt": lambda target: write_counts(target, trace, provenance_for(args, seed)),
    })["counts.txt"]
    emit({
        "samples": len(trace),
        "sample_mean": float(np.mean(trace.counts)),
        "expected_mean": distribution.mean,
        "chi_square": statistic,
        "degrees_of_freedom": dof,
        "p_value": p_value,
        "output": str(path),
    }, args)


def cmd_simulate(args: argparse.Namespace):
    config = resolve_config(args)
    if config is None:
        raise ConfigError("simulate needs --config or --setup", "config")
    runner = ExperimentRunner(config, args.workers)
    outcome = runner.simulate()
    writers = {"trace.csv": lambda path: write_voltage_trace(path, outcome.trace, runner.provenance())}
    fit = gaussian_fit(outcome.trace) if args.gaussian_fit else None
    if fit is not None:
        writers["gaussian_fit.csv"] = lambda path: write_gaussian_fit_csv(
            path, *gaussian_fit_bins(outcome.trace, fit), runner.provenance())
    paths = write_outputs(args, writers)
    result = {
        "samples": len(outcome.trace),
        "mean_v": float(np.mean(outcome.trace.samples)),
        "std_v": float(np.std(outcome.trace.samples, ddof=1)) if len(outcome.trace) > 1 else 0.0,
        "output": str(paths["trace.csv"]),
    }
    if fit is not None:
        result.update({
            "fit_mean_v": fit.mean,
            "fit_std_v": fit.std_dev,
            "fit_distance": fit.fit_distance,
            "fit_output": str(paths["gaussian_fit.csv"]),
        })
    emit(result, args)


def cmd_calibrate(args: argparse.Namespace):
    points = read_calibration_csv(args.points) if args.points else calibration_points()
    calib = calibrate_mapping(points)
    result: Dict[str, Any] = {
        "volts_per_photon": calib.volts_per_photon,
        "delta_v0_v": calib.delta_v0,
        "fit_residual_relative_max": calib.fit_residual_relative_max,
        "points": len(calib.source_points),
    }
    if args.out:
        paths = write_outputs(args, {
            "calibration_fit.csv": lambda path: write_calibration_fit_csv(path, calib, provenance_for(args)),
        })
        result["output"] = str(paths["calibration_fit.csv"])
    emit(result, args)


def cmd_resolution(args: argparse.Namespace):
    trace = read_voltage_trace(args.trace)
    estimate = estimate_resolution(trace, args.delta_v0, args.trim)
    if args.out:
        write_outputs(args, {
            "voltage_levels.csv": lambda path: write_levels_csv(path, trace, provenance_for(args)),
        })
    if args.format == "structured":
        emit({
            "resolution_m": estimate.resolution_m,
            "mean_unique_gap_v": estimate.mean_unique_gap,
            "delta_v0_v": estimate.delta_v0,
        }, args)
    else:
        print(estimate.resolution_m)


def cmd_entropy(args: argparse.Namespace):
    distribution = distribution_from_args(args)
    result: Dict[str, Any] = {"h_theoretical_bits": min_entropy(distribution)}
    if args.merge:
        result["h_merged_bits"] = min_entropy(merge_distribution(distribution, args.merge, args.offset))
        result["rate_bits_per_s"] = result["h_merged_bits"] * args.sample_rate
    if args.trace:
        result["h_empirical_bits"] = empirical_min_entropy(read_voltage_trace(args.trace))
    if args.format == "csv" and args.merge and not args.trace:
        print(f"{result['h_merged_bits']:.4f}")
        return
    emit(result, args)


def cmd_merge(args: argparse.Namespace):
    distribution = distribution_from_args(args)
    merged = merge_distribution(distribution, args.merge, args.offset)
    path = write_outputs(args, {
        "merged.csv": lambda target: write_histogram_csv(target, merged, provenance_for(args)),
    })["merged.csv"]
    emit({"levels": len(merged), "h_merged_bits": min_entropy(merged), "output": str(path)}, args)


def cmd_extract(args: argparse.Namespace):
    trace = read_voltage_trace(args.trace)
    if args.report:
        values = parse_report(Path(args.report).read_text(encoding="utf-8"))
        if "h_merged_bits" not in values:
            raise FormatError(f"{args.report}: report lacks h_merged_bits", "report")
        h_merged = values["h_merged_bits"]
    else:
        h_merged = args.h_merged
    if h_merged is None:
        raise ConfigError("extract needs --report or --h-merged", "h_merged_bits")

    seed = used_seed(args)
    spec = ToeplitzSpec.for_entropy(h_merged, args.bits_per_sample, seed, args.block_bits)
    raw = raw_bits_from_trace(trace, args.bits_per_sample)
    out = toeplitz_extract(raw, spec)
    header = {
        "n": spec.input_block_bits,
        "k": spec.output_block_bits,
        "seed": spec.seed_hex(),
        "master_seed": seed,
        "config_sha256": config_hash_for(args),
        "version": settings.TOOL_VERSION,
    }
    path = write_outputs(args, {"extracted.bin": lambda target: write_bitstream(target, out, header)})["extracted.bin"]
    result = {
        "raw_bits": len(raw),
        "output_bits": len(out),
        "n": spec.input_block_bits,
        "k": spec.output_block_bits,
        "ratio": spec.ratio,
        "output": str(path),
    }
    if len(out) >= 8:
        result.update({f"smoke_{key}": value for key, value in smoke_test(out).items()})
    emit(result, args)


def cmd_report(args: argparse.Namespace):
    config = resolve_config(args)
    if config is None:
        raise ConfigError("report needs --config or --setup", "config")
    banner(f"EXPERIMENT {config.label}")
    runner = ExperimentRunner(config, args.workers)
    outcome = runner.simulate()
    if outcome.comparison is None and args.compare_seed is not None:
        outcome.comparison = runner.compare_with_resimulation(outcome.trace, args.compare_seed)
    outcome.files = runner.write(outcome, extra={key: str(value) for key, value in vars(args).items() if key != "func"})
    for path in outcome.files:
        print(f"  wrote {path}", file=sys.stderr)
    result: Dict[str, Any] = dict(outcome.report.as_dict())
    result["estimated_resolution_m"] = outcome.estimated_resolution_m
    if outcome.comparison is not None:
        result.update({f"compare_{key}": value for key, value in outcome.comparison.as_dict().items()})
    emit(result, args)


def cmd_surface(args: argparse.Namespace):
    rows = emit_mode_number_surface(args.rmin, args.rmax, args.points, args.s, args.include)
    path = write_outputs(args, {
        "mode_number_surface.csv": lambda target: write_surface_csv(target, rows, provenance_for(args)),
    })["mode_number_surface.csv"]
    emit({"rows": len(rows), "output": str(path)}, args)


def cmd_compare(args: argparse.Namespace):
    a = read_voltage_trace(args.a) if not args.counts else read_counts(args.a)
    b = read_voltage_trace(args.b) if not args.counts else read_counts(args.b)
    comparison = compare_traces(a, b, args.bin_width, expected_from_a=not args.expected_from_b)
    emit(comparison.as_dict(), args)


def cmd_bits(args: argparse.Namespace):
    bits, header = read_bitstream(args.bitstream)
    result: Dict[str, Any] = dict(header)
    result.update(smoke_test(bits))
    emit(result, args)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str)
    common.add_argument("--setup", type=str, help="published setup name, row1..row6")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=str)
    common.add_argument("--format", choices=["csv", "structured"], default="csv")
    common.add_argument("--verbosity", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="WARNING")
    common.add_argument("--tail-tolerance", type=float, default=settings.TAIL_TOLERANCE)
    common.add_argument("--workers", type=int, default=settings.WORKERS)

    parser = argparse.ArgumentParser(
        description="ASE-noise QRNG simulation and randomness quantification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py model --setup row1
  python main.py entropy --pmf-from "nbar=17383,M=2.9627" --merge 51
  python main.py resolution --trace t.csv --delta-v0 2.968e-8
  python main.py report --config data/configs/table1_row1.cfg --out output/row1
  python main.py surface --rmin 0.01 --rmax 100 --points 200
        """
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", parents=[common])
    p.add_argument("--b-opt", type=float)
    p.add_argument("--b-ele", type=float, default=5e9)
    p.add_argument("--power", type=float, default=0.0)
    p.add_argument("--wavelength", type=float, default=1550e-9)
    p.add_argument("--polarization", type=int, default=1)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("sample", parents=[common])
    p.add_argument("--pmf-from", type=str)
    p.add_argument("--count", type=int, default=1_000_000)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--count", type=int)
    p.add_argument("--gaussian-fit", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common])
    p.add_argument("--points", type=str, help="calibration CSV; defaults to the bundled table")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("resolution", parents=[common])
    p.add_argument("--trace", type=str, required=True)
    p.add_argument("--delta-v0", type=float, required=True)
    p.add_argument("--trim", type=float, default=0.0)
    p.set_defaults(func=cmd_resolution)

    p = sub.add_parser("entropy", parents=[common])
    p.add_argument("--pmf-from", type=str)
    p.add_argument("--merge", type=int)
    p.add_argument("--offset", type=int, default=0)
    p.add_argument("--trace", type=str)
    p.add_argument("--sample-rate", type=float, default=settings.SAMPLE_RATE_HZ)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("merge", parents=[common])
    p.add_argument("--pmf-from", type=str)
    p.add_argument("--merge", type=int, required=True)
    p.add_argument("--offset", type=int, default=0)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("extract", parents=[common])
    p.add_argument("--trace", type=str, required=True)
    p.add_argument("--report", type=str)
    p.add_argument("--h-merged", type=float)
    p.add_argument("--bits-per-sample", type=int, default=16)
    p.add_argument("--block-bits", type=int, default=settings.BLOCK_BITS)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("report", parents=[common])
    p.add_argument("--count", type=int)
    p.add_argument("--compare-seed", type=int)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("surface", parents=[common])
    p.add_argument("--rmin", type=float, required=True)
    p.add_argument("--rmax", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.add_argument("--s", type=int, nargs="+", default=[1, 2])
    p.add_argument("--include", type=float, nargs="*", default=[])
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("compare", parents=[common])
    p.add_argument("--a", type=str, required=True)
    p.add_argument("--b", type=str, required=True)
    p.add_argument("--bin-width", type=float)
    p.add_argument("--counts", action="store_true", help="inputs are photon-count files")
    p.add_argument("--expected-from-b", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bits", parents=[common])
    p.add_argument("--bitstream", type=str, required=True)
    p.set_defaults(func=cmd_bits)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.verbosity, format="%(asctime)s [%(levelname)s] [%(name)s] %(message)s", datefmt="%Y-%m-%d %H:%M:%S")
    logging.getLogger().setLevel(args.verbosity)

    try:
        args.func(args)
    except QrngError as e:
        print(e.one_line(), file=sys.stderr)
        return 2
    except OSError as e:
        message = str(e).replace('"', "'")
        print(f'error kind={type(e).__name__} field={getattr(e, "filename", None) or "-"} message="{message}"', file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
