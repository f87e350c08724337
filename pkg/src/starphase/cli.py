"""Command-line front end: config-driven sweeps emitting CSV, JSON, and figures.

Subcommands: fisher-sweep, mu-opt, mle-sim, oracle-check, detector-sweep.
Every output file embeds the fully resolved configuration and seed, and
re-running a command with the same config yields byte-identical CSV bodies.
Exit codes: 0 success, 2 config error, 3 validation/oracle failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import runs
from .config import Config, ConfigError, load_config
from .detection import DetectionError
from .estimation import EstimationError
from .fock import FockError
from .sources import OptimizeError, SourceError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3

JSON_SCHEMA = "starphase.summary/1"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def write_csv(path: Path, command: str, config: Config, header, rows) -> None:
    """CSV with `# key=value` provenance lines, a header row, then data rows."""
    lines = [f"# starphase {command} v1"]
    for key, value in sorted(config.as_dict().items()):
        lines.append(f"# {key}={value}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, command: str, config: Config, payload) -> None:
    document = {
        "schema": JSON_SCHEMA,
        "command": command,
        "config": config.as_dict(),
        "results": payload,
    }
    path.write_text(
        json.dumps(document, sort_keys=True, indent=2, allow_nan=True) + "\n",
        encoding="utf-8",
    )


def _out_paths(args, command: str) -> tuple[Path, Path, Path]:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / command
    return base.with_suffix(".csv"), base.with_suffix(".json"), base.with_suffix(".png")


def _cache_dir(args) -> Path | None:
    if args.no_cache:
        return None
    return Path(args.cache_dir).expanduser()


def _cmd_fisher_sweep(args, config: Config) -> int:
    rows = runs.fisher_sweep(config, _cache_dir(args), args.workers)
    csv_path, _, png_path = _out_paths(args, "fisher-sweep")
    write_csv(csv_path, "fisher-sweep", config, runs.FISHER_SWEEP_HEADER, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if not args.no_plot:
        from . import plots

        plots.fisher_sweep_plot(rows, png_path)
        print(f"wrote {png_path}")
    return EXIT_OK


def _cmd_mu_opt(args, config: Config) -> int:
    skipped = [s.label() for s in config.sources if s.kind not in ("coherent", "heralded")]
    if skipped:
        print(f"note: skipping sources without intensity: {', '.join(skipped)}", file=sys.stderr)
    rows = runs.mu_opt(config)
    csv_path, _, png_path = _out_paths(args, "mu-opt")
    write_csv(csv_path, "mu-opt", config, runs.MU_OPT_HEADER, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if not args.no_plot:
        from . import plots

        plots.mu_opt_plot(rows, png_path)
        print(f"wrote {png_path}")
    return EXIT_OK


def _cmd_mle_sim(args, config: Config) -> int:
    rows, diagnostics = runs.mle_sim(config, _cache_dir(args), args.workers)
    csv_path, json_path, png_path = _out_paths(args, "mle-sim")
    write_csv(csv_path, "mle-sim", config, runs.MLE_SIM_HEADER, rows)
    write_json(json_path, "mle-sim", config, diagnostics)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    print(f"wrote {json_path}")
    if not args.no_plot:
        from . import plots

        plots.mle_sim_plot(rows, png_path)
        print(f"wrote {png_path}")
    return EXIT_OK


def _cmd_detector_sweep(args, config: Config) -> int:
    rows = runs.detector_sweep(config, _cache_dir(args), args.workers)
    csv_path, _, png_path = _out_paths(args, "detector-sweep")
    write_csv(csv_path, "detector-sweep", config, runs.DETECTOR_SWEEP_HEADER, rows)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    if not args.no_plot:
        from . import plots

        plots.detector_sweep_plot(rows, png_path)
        print(f"wrote {png_path}")
    return EXIT_OK


def _cmd_oracle_check(args, config: Config) -> int:
    report, ok = runs.oracle_check(config, corrupt=args.corrupt)
    print(report)
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config value (repeatable)",
    )
    common.add_argument("--out-dir", default="out", help="output directory")
    common.add_argument(
        "--cache-dir",
        default="~/.cache/starphase",
        help="outcome-table cache directory",
    )
    common.add_argument("--no-cache", action="store_true", help="bypass the table cache")
    common.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    common.add_argument(
        "--workers", type=int, default=1, help="worker processes for sweep points"
    )
    parser = argparse.ArgumentParser(
        prog="starphase",
        description="Threshold-detector stellar interferometry sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fisher-sweep", parents=[common], help="Fisher information vs baseline")
    sub.add_parser("mu-opt", parents=[common], help="optimized source intensity vs baseline")
    sub.add_parser("mle-sim", parents=[common], help="Monte Carlo MLE angular error vs CRB")
    oracle = sub.add_parser(
        "oracle-check", parents=[common], help="closed forms vs Fock engine"
    )
    oracle.add_argument(
        "--corrupt",
        action="store_true",
        help="perturb one coefficient to self-test the harness (must fail)",
    )
    sub.add_parser(
        "detector-sweep", parents=[common], help="angular error under imperfect detectors"
    )
    return parser


_COMMANDS = {
    "fisher-sweep": _cmd_fisher_sweep,
    "mu-opt": _cmd_mu_opt,
    "mle-sim": _cmd_mle_sim,
    "oracle-check": _cmd_oracle_check,
    "detector-sweep": _cmd_detector_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, config)
    except (DetectionError, EstimationError, FockError, SourceError, OptimizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
