"""Command-line entry point: ``macsim <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import synthgen
from .pipeline import RunConfigError, make_config, report, run_assessment


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--x", dest="x_path")
    p.add_argument("--y", dest="y_path")
    p.add_argument("--truth", dest="truth_path")
    p.add_argument("--n-y", dest="n_y", help="generate a synthetic population of this size")
    p.add_argument("--scale")
    p.add_argument("--seed")
    p.add_argument("--cutoff")
    p.add_argument("--blocking", help="blocking fields, e.g. sa1 or sa1,sex")
    p.add_argument("--observed-blocking", dest="use_truth_values", action="store_const",
                   const="false", help="block X on observed rather than pre-error values")
    p.add_argument("--linking", dest="linking_fields")
    p.add_argument("--steps")
    p.add_argument("--thin")
    p.add_argument("--burn-in", dest="burn_in")
    p.add_argument("--blocks", help="KEY[,KEY...] restrict the run to these blocks")
    p.add_argument("--use-saved-samples", dest="use_saved_samples", metavar="PATH")
    p.add_argument("--save-samples", dest="save_samples", action="store_const", const="true")
    p.add_argument("--params", dest="params_path")
    p.add_argument("--drop-invalid-fields", dest="drop_invalid_fields",
                   action="store_const", const="true")
    p.add_argument("--smoothing")
    p.add_argument("--workers")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic X, Y and truth CSVs")
    g.add_argument("--n-y", type=int, default=400_000)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--error-seed", type=int)
    g.add_argument("--no-errors", action="store_true")
    g.add_argument("--out", default=".")

    for name, help_ in (("block", "partition and write the block manifest"),
                        ("estimate", "write block-specific m, u, g"),
                        ("link", "write observed links"),
                        ("simulate", "run the chains and save samples"),
                        ("assess", "full assessment with accuracy reports")):
        _run_flags(sub.add_parser(name, help=help_))

    r = sub.add_parser("report", help="rebuild binned tables from per_record.csv")
    r.add_argument("per_record")
    r.add_argument("--out", default=".")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "generate":
        seed = args.error_seed if args.error_seed is not None else args.seed + 1
        errors = synthgen.ErrorSpec.none(seed) if args.no_errors else synthgen.ErrorSpec(seed=seed)
        synthgen.generate_files(args.out, args.n_y, args.scale, args.seed, errors)
        return 0
    if args.command == "report":
        report(args.per_record, args.out)
        return 0

    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("command", "config", "verbose") and v is not None}
    try:
        cfg = make_config(args.config, **overrides)
        result = run_assessment(cfg, stage=args.command)
    except RunConfigError as exc:
        print(f"macsim: {exc}", file=sys.stderr)
        return 2
    for r in result.results:
        if r.status != "completed":
            print(f"block {r.key} skipped: {r.reason}", file=sys.stderr)
    for stage, secs in result.timings.items():
        print(f"{stage:>14s} {secs:10.3f} s")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
