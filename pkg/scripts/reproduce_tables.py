"""Reproduce the published setup and min-entropy tables, optionally running every bundled config."""
import json
import logging
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))
from src.config import load_config
from src.harness import reproduce_published_tables, run_experiment
from src.reference_data import ENTROPY_RESULTS, setups_by_mode_number


def reproduce_tables(output_path: str, run_configs: bool = False, count: int = None, configs_dir: str = "data/configs"):
    print("Computing mode numbers, mean photons and merged min-entropies...")
    rows = reproduce_published_tables()

    print(f"\n  {'setup':<6} {'M':>9} {'(pub)':>9} {'nbar':>9} {'(pub)':>7} {'m':>4} {'H_merged':>9} {'(pub)':>8}")
    for row in rows:
        print(
            f"  {row['setup']:<6} {row['mode_number']:>9.4f} {row['mode_number_published']:>9.4f} "
            f"{row['nbar']:>9.0f} {row['nbar_published']:>7d} {row['resolution_m']:>4d} "
            f"{row['h_merged']:>9.4f} {row['h_merged_published']:>8.4f}"
        )

    experiments = []
    if run_configs:
        for name in setups_by_mode_number():
            config_path = Path(configs_dir) / f"table1_{name}.cfg"
            print(f"\n[{name}] running {config_path}")
            try:
                config = load_config(str(config_path))
                if count:
                    config = config.with_overrides(sample_count=count)
                outcome = run_experiment(config)
            except Exception as e:
                print(f"  ERROR: {e}")
                experiments.append({"setup": name, "error": str(e)})
                continue
            report = outcome.report
            print(f"  h_merged {report.h_merged:.4f} (published {ENTROPY_RESULTS[name]['h_merged']:.4f}), "
                  f"h_empirical {report.h_empirical:.4f}, deviation {report.deviation:+.4%}")
            experiments.append({"setup": name, "report": report.as_dict(), "files": [str(p) for p in outcome.files]})

    output_file = Path(output_path)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    with open(output_file, 'w') as f:
        json.dump({"tables": rows, "experiments": experiments}, f, indent=2)
    print(f"\nResults saved to {output_file}")
    return rows


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser()
    parser.add_argument("--output", default="output/tables.json", help="Output path")
    parser.add_argument("--run-configs", action="store_true", help="Also simulate every bundled setup config")
    parser.add_argument("--count", type=int, help="Override sample_count of the configs")
    parser.add_argument("--configs", default="data/configs", help="Directory of table1_row*.cfg files")
    parser.add_argument("--verbosity", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="INFO")
    args = parser.parse_args()

    logging.basicConfig(level=args.verbosity, format="%(asctime)s [%(levelname)s] [%(name)s] %(message)s")
    reproduce_tables(args.output, args.run_configs, args.count, args.configs)
