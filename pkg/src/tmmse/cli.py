"""Command line entry point: ``tmmse run | reproduce | selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigurationError
from .harness import (
    FIGURES,
    ExperimentSpec,
    emit_plot_data,
    figure_spec,
    load_config,
    parse_schemes,
    parse_sweep,
    run,
)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value experiment file")
    p.add_argument("--out", help="output CSV path (metadata goes next to it as .meta.json)")
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", action="append", help="scheme(s), repeatable or comma separated")
    p.add_argument("--sweep", help="sweep as NAME=v1,v2,... with NAME in L, tau_p, N, K")
    p.add_argument("--drops", type=int)
    p.add_argument("--trials", type=int, help="evaluation realizations per drop")
    p.add_argument("--training-samples", type=int, help="realizations per AP for the team statistics")
    p.add_argument("--sorted-aps", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--workers", type=int, help="worker processes (default: $TMMSE_WORKERS or CPU count)")


def _apply(spec: ExperimentSpec, args: argparse.Namespace) -> ExperimentSpec:
    if args.config:
        spec = load_config(args.config, spec)
    changes = {}
    if args.out:
        changes["output_path"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.scheme:
        changes["schemes"] = parse_schemes(args.scheme)
    if args.sweep:
        changes["sweep"] = parse_sweep(args.sweep)
    if args.drops is not None:
        changes["drops"] = args.drops
    if args.trials is not None:
        changes["trials_per_drop"] = args.trials
    if args.training_samples is not None:
        changes["training_samples"] = args.training_samples
    if args.sorted_aps is not None:
        changes["sorted_aps"] = args.sorted_aps
    return replace(spec, **changes) if changes else spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmmse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment described by a config file and flags")
    _add_overrides(p_run)

    p_rep = sub.add_parser("reproduce", help="run one of the preset comparison figures")
    p_rep.add_argument("figure", choices=FIGURES)
    _add_overrides(p_rep)
    p_rep.add_argument("--plot-data", help="plot-data CSV path (default: <out stem>.plot.csv)")

    sub.add_parser("selftest", help="run desk-scale invariant checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            from .selftest import run_selftest
            return 0 if run_selftest() else 1

        base = figure_spec(args.figure) if args.command == "reproduce" else ExperimentSpec()
        spec = _apply(base, args)
        if args.command == "reproduce" and not spec.output_path:
            spec = replace(spec, output_path=f"{args.figure}.csv")
        record = run(spec, workers=args.workers)
        if spec.output_path:
            print(f"wrote {spec.output_path} ({len(record.rows)} rows)")
        if args.command == "reproduce":
            out = Path(spec.output_path)
            plot_path = args.plot_data or str(out.with_name(out.stem + ".plot.csv"))
            emit_plot_data(record, args.figure, plot_path)
            print(f"wrote {plot_path}")
        elif not spec.output_path:
            for scheme in spec.labels:
                se = record.se(scheme)
                print(f"{scheme:18s} mean SE {se.mean():.4f} bit/s/Hz over {se.size} samples")
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
