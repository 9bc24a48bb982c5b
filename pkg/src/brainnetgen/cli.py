"""Command-line entry point.

Exit codes: 0 success, 1 validation error (bad input, config or arguments),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import AUTISM, CONTROL, InputError
from . import commands
from .config import load_config

log = logging.getLogger("brainnetgen")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, help="master seed; overrides protocol.seed")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--skip-bad", action="store_true", help="skip failing subjects instead of aborting")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="brainnetgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="time series -> connectome cohort")
    p.add_argument("--manifest", type=Path, help="overrides io.manifest")
    p.add_argument("--ablation", choices=("none", "preprocessing", "threshold"), default="none")

    p = sub.add_parser("synth", parents=[common], help="synthetic two-population cohort or baselines")
    p.add_argument("--from-cohort", type=Path, help="build baseline graphs from this cohort")
    p.add_argument("--baseline", choices=("degree", "clustering"), default="degree")

    p = sub.add_parser("train-gen", parents=[common], help="train one generator per class")
    p.add_argument("--cohort", type=Path, required=True)
    p.add_argument("--label", choices=(AUTISM, CONTROL, "both"), default="both")

    p = sub.add_parser("sample", parents=[common], help="sample graphs from a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--count", type=int, required=True)

    sub.add_parser("experiment", parents=[common], help="raw / generated / mixed classifier protocol")

    p = sub.add_parser("metrics", parents=[common], help="graph statistics, degree MMD, PCA")
    p.add_argument("--cohort", type=Path, required=True)
    p.add_argument("--reference", type=Path)
    p.add_argument("--sigma", type=float, default=1.0)
    return parser


def run(args: argparse.Namespace) -> dict:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.protocol.seed
    if args.seed is not None:
        cfg = cfg.model_copy(update={"protocol": cfg.protocol.model_copy(update={"seed": seed})})
    out = args.out
    if args.command == "preprocess":
        if args.manifest is not None:
            cfg = cfg.model_copy(update={"io": cfg.io.model_copy(update={"manifest": str(args.manifest.resolve())})})
        return commands.cmd_preprocess(cfg, out, args.skip_bad, args.ablation)
    if args.command == "synth":
        if args.from_cohort is not None:
            return commands.cmd_baseline(args.from_cohort, args.baseline, out, seed, cfg)
        return commands.cmd_synth(cfg, out, seed)
    if args.command == "train-gen":
        labels = (AUTISM, CONTROL) if args.label == "both" else (args.label,)
        return commands.cmd_train_gen(cfg, args.cohort, labels, out, seed)
    if args.command == "sample":
        if args.count < 1:
            raise InputError("--count must be at least 1")
        return commands.cmd_sample(args.checkpoint, args.count, seed, out)
    if args.command == "experiment":
        return commands.cmd_experiment(cfg, out, seed)
    if args.command == "metrics":
        return commands.cmd_metrics(args.cohort, out, args.reference, args.sigma)
    raise InputError(f"unknown command {args.command}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        result = run(args)
    except InputError as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # runtime failures map to exit code 2
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
