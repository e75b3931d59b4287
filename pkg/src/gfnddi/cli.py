"""Command-line entry point: ``gfnddi <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 ok, 2 input error, 3 missing prerequisite, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import ContractError, MissingPrerequisite, TrainingError, ValidationError
from .fixtures import FixtureSpec, write_fixture

EXIT_OK, EXIT_INPUT, EXIT_PREREQ, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gfnddi")

STAGES = {
    "pretrain": ("stage 1", pipeline.cmd_pretrain),
    "train-gfn": ("stage 2", pipeline.cmd_train_gfn),
    "augment-retrain": ("stage 3", pipeline.cmd_augment_retrain),
    "run-all": ("pipeline", pipeline.cmd_run_all),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfnddi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
        p.add_argument("--out", type=Path, default=None, help="overrides [paths] out_dir")
        if name == "evaluate":
            p.add_argument("--model", choices=("stage1", "stage3"), default="stage1")
    p = sub.add_parser("make-fixture")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drugs", type=int, default=50)
    p.add_argument("--types", type=int, default=8)
    p.add_argument("--edges", type=int, default=2000)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--affinity", type=float, default=1000.0)
    return parser


def _run(args) -> int:
    if args.command == "make-fixture":
        spec = FixtureSpec(args.drugs, args.types, args.edges, args.ratio, args.clusters,
                           args.affinity, args.seed)
        for path in write_fixture(spec, args.out):
            print(path)
        return EXIT_OK
    cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
    if args.command == "evaluate":
        print(pipeline.cmd_evaluate(cfg, args.model).to_json(), end="")
        return EXIT_OK
    label, fn = STAGES[args.command]
    log.info("%s: writing to %s", label, cfg.paths.out_dir)
    fn(cfg)
    summary = cfg.paths.out_dir / pipeline.REPORTS / "summary.txt"
    if args.command in ("augment-retrain", "run-all") and summary.is_file():
        print(summary.read_text(), end="")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = STAGES.get(args.command, (args.command, None))[0]
    try:
        return _run(args)
    except MissingPrerequisite as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except TrainingError as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ValidationError, ContractError) as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
