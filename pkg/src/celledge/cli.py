"""Command-line entry point.

Subcommands: correct, rasterize, eval, prep, compare. Algorithm
parameters come from an INI config file (CELLEDGE_CONFIG or --config);
individual flags override file values. Exit codes: 0 success, 1 partial
failures, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from celledge.config import ConfigError, PipelineConfig, load_config
from celledge.pipeline import run_compare, run_correct, run_eval, run_prep, run_rasterize

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="celledge",
        description="Correct polygon cell annotations by gradient-guided "
                    "snapping and locally weighted curve refitting.",
    )
    parser.add_argument("--config", help="INI config file (default: $CELLEDGE_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_correct = sub.add_parser("correct", help="correct annotations and write edge labels")
    p_correct.add_argument("--in", dest="in_dir", required=True)
    p_correct.add_argument("--out", dest="out_dir", required=True)
    p_correct.add_argument("--workers", type=int)
    p_correct.add_argument("--sigma", type=float, help="gradient smoothing scale (px)")
    p_correct.add_argument("--radius", type=int, help="snap search radius (px)")
    p_correct.add_argument("--contrast-threshold", type=float)
    p_correct.add_argument("--step", type=float, help="curve sampling step (px)")
    p_correct.add_argument("--mode", choices=["smooth_closed", "stitched"])
    p_correct.add_argument("--dump-gradient", action="store_true",
                           help="also write the gradient field as 16-bit PNGs")
    p_correct.add_argument("--no-original", action="store_true",
                           help="skip the uncorrected baseline edge PNGs")

    p_raster = sub.add_parser("rasterize", help="rasterize annotations without correction")
    p_raster.add_argument("--in", dest="in_dir", required=True)
    p_raster.add_argument("--out", dest="out_dir", required=True)

    p_eval = sub.add_parser("eval", help="score predicted edge maps (ODS/OIS/AP)")
    p_eval.add_argument("--pred", required=True)
    p_eval.add_argument("--gt", required=True)
    p_eval.add_argument("--out", dest="out_dir", default=".")
    p_eval.add_argument("--tol", type=float)
    p_eval.add_argument("--thresholds", type=int)

    p_prep = sub.add_parser("prep", help="cut patches and write the split manifest")
    p_prep.add_argument("--in", dest="in_dir", required=True)
    p_prep.add_argument("--out", dest="out_dir", required=True)
    p_prep.add_argument("--seed", type=int)

    p_cmp = sub.add_parser("compare", help="original-vs-corrected overlay PNGs")
    p_cmp.add_argument("--in", dest="in_dir", required=True)
    p_cmp.add_argument("--out", dest="out_dir", required=True)
    return parser


def apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    correction = config.correction
    fit = config.fit
    if getattr(args, "radius", None) is not None:
        correction = dataclasses.replace(
            correction, radius=args.radius, bandwidth=args.radius / 2.0)
    if getattr(args, "contrast_threshold", None) is not None:
        correction = dataclasses.replace(
            correction, contrast_threshold=args.contrast_threshold)
    if getattr(args, "step", None) is not None:
        fit = dataclasses.replace(fit, step=args.step)
    if getattr(args, "mode", None) is not None:
        fit = dataclasses.replace(fit, mode=args.mode)
    return dataclasses.replace(
        config,
        sigma=args.sigma if getattr(args, "sigma", None) is not None else config.sigma,
        correction=correction,
        fit=fit,
        workers=args.workers if getattr(args, "workers", None) is not None else config.workers,
        write_original=(not args.no_original) if getattr(args, "no_original", False)
        else config.write_original,
        dump_gradient=True if getattr(args, "dump_gradient", False) else config.dump_gradient,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command in ("correct", "compare"):
            config = apply_overrides(config, args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "correct":
            report = run_correct(args.in_dir, args.out_dir, config)
        elif args.command == "rasterize":
            report = run_rasterize(args.in_dir, args.out_dir)
        elif args.command == "eval":
            report = run_eval(
                args.pred, args.gt, args.out_dir,
                tol=args.tol if args.tol is not None else config.eval_tolerance,
                n_thresholds=args.thresholds if args.thresholds is not None
                else config.eval_thresholds,
            )
        elif args.command == "prep":
            seed = args.seed if args.seed is not None else config.prep_seed
            report = run_prep(args.in_dir, args.out_dir, seed)
        else:
            report = run_compare(args.in_dir, args.out_dir, config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL

    print(json.dumps(report, indent=2))
    return int(report.get("exit_code", EXIT_OK))


if __name__ == "__main__":
    sys.exit(main())
