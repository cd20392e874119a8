"""Command line entry point.

Subcommands::

    gqmp run <config.json>        run an experiment config
    gqmp preset <name>            run a bundled preset
    gqmp validate <config.json>   check a config and list every error
    gqmp plotdata <results> --kind fig2|fig3|fig4|fig6|fig7

Exit codes: 0 on success, 2 on an invalid config or argument, 3 when any
cell's solver failed (the other cells still run and are written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness import (
    PLOT_KINDS,
    ConfigError,
    ExperimentConfig,
    emit_plotdata,
    load_config,
    load_preset,
    preset_names,
    run_experiment,
    with_seeds,
    write_results,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3


def _seed_list(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gqmp", description="Precoding experiments by generalized QMF programming.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--seed-override", type=_seed_list, default=None, help="comma separated seeds replacing the config's")
        p.add_argument("--out-dir", type=Path, default=None, help="directory for the result files")
        p.add_argument("--workers", type=int, default=1, help="number of worker processes")

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", type=Path)
    run_flags(p_run)

    p_pre = sub.add_parser("preset", help="run a bundled preset")
    p_pre.add_argument("name", help="one of: " + ", ".join(preset_names()))
    run_flags(p_pre)

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("config", type=Path)

    p_plot = sub.add_parser("plotdata", help="write figure series from a results directory")
    p_plot.add_argument("results", type=Path)
    p_plot.add_argument("--kind", required=True, help="one of: " + ", ".join(PLOT_KINDS))
    p_plot.add_argument("--out-dir", type=Path, default=None)
    return parser


def _run(cfg: ExperimentConfig, args) -> int:
    if args.seed_override is not None:
        cfg = with_seeds(cfg, args.seed_override)
    if args.workers < 1:
        raise ConfigError(["--workers: must be at least 1"])
    out_dir = args.out_dir or Path(cfg.output or Path("results") / cfg.experiment_id)
    out = run_experiment(cfg, workers=args.workers)
    write_results(out, out_dir)
    print(f"wrote {len(out.rows)} rows to {out_dir}")
    return EXIT_SOLVER if out.failed else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on bad arguments already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _run(load_config(args.config), args)
        if args.command == "preset":
            return _run(load_preset(args.name), args)
        if args.command == "validate":
            load_config(args.config)
            print("config is valid")
            return EXIT_OK
        if args.kind not in PLOT_KINDS:
            raise ConfigError([f"--kind: unknown plot kind {args.kind!r}; expected one of {', '.join(PLOT_KINDS)}"])
        target = None if args.out_dir is None else args.out_dir / f"plot_{args.kind}.csv"
        print(emit_plotdata(args.results, args.kind, target))
        return EXIT_OK
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
