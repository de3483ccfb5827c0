"""Command-line entry point.

Subcommands mirror the pipeline stages plus ranking, best-of-N inference,
and evaluation. Exit codes: 0 success, 1 pipeline error, 2 configuration
or usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .dataset import evaluate, load_predictions, load_records
from .errors import ConfigError, VpcotError
from .model import StepLabels
from .pipeline import (
    run_pipeline,
    run_scale,
    stage_convert,
    stage_execute,
    stage_generate,
    stage_label,
)
from .ranker import select_best


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument("--tasks", default=None, help="task manifest (JSONL)")
    parser.add_argument("--out", default=None, help="output directory for artifacts")
    parser.add_argument("--backend", default=None, choices=["live", "fixture"])
    parser.add_argument("--fixture-dir", dest="fixture_dir", default=None,
                        help="directory of per-task fixture bundles")
    parser.add_argument("--branch-X", dest="branch_x", type=int, default=None,
                        help="tree branching factor")
    parser.add_argument("--candidates-N", dest="candidates_n", type=int, default=None,
                        help="best-of-N candidate count")
    parser.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)


def _config_from_args(args: argparse.Namespace):
    overrides = {
        "tasks": args.tasks,
        "out": args.out,
        "backend": args.backend,
        "fixture_dir": args.fixture_dir,
        "branch_x": args.branch_x,
        "candidates_n": args.candidates_n,
        "max_depth": args.max_depth,
        "workers": args.workers,
        "seed": args.seed,
    }
    return load_config(args.config, overrides)


def _cmd_generate(args) -> int:
    trees = stage_generate(_config_from_args(args))
    print(f"generated {len(trees)} trees "
          f"({sum(len(t.nodes) for t in trees.values())} blocks)")
    return 0


def _cmd_execute(args) -> int:
    runs = stage_execute(_config_from_args(args))
    paths = sum(len(task_runs) for task_runs in runs.values())
    print(f"executed {paths} complete paths across {len(runs)} tasks")
    return 0


def _cmd_label(args) -> int:
    labels = stage_label(_config_from_args(args))
    nodes = sum(len(task_labels) for task_labels in labels.values())
    print(f"labeled {nodes} blocks across {len(labels)} tasks")
    return 0


def _cmd_convert(args) -> int:
    _, report = stage_convert(_config_from_args(args))
    print(json.dumps(report, indent=2))
    return 0


def _cmd_pipeline(args) -> int:
    report = run_pipeline(_config_from_args(args))
    print(json.dumps(report, indent=2))
    return 0


def _cmd_rank(args) -> int:
    shorts = [part.strip() for part in args.labels.split(",") if part.strip()]
    try:
        candidates = [(index, StepLabels.from_short(s)) for index, s in enumerate(shorts)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(select_best(candidates))
    return 0


def _cmd_scale(args) -> int:
    rows = run_scale(_config_from_args(args))
    matched = sum(1 for row in rows if row.get("matched_gold"))
    failed = sum(1 for row in rows if "error" in row)
    print(f"inference over {len(rows)} tasks: {matched} matched gold, {failed} failed")
    return 0


def _cmd_eval(args) -> int:
    records = load_records(args.records)
    predictions = load_predictions(args.predictions)
    report = evaluate(predictions, records)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpcot",
        description="Visual-program CoT dataset pipeline: generate, run, label, convert, rank.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (
        ("generate", _cmd_generate, "grow program trees for every task"),
        ("execute", _cmd_execute, "run complete paths in the sandbox"),
        ("label", _cmd_label, "assign three-dimensional step labels"),
        ("convert", _cmd_convert, "render CoT steps and emit records"),
        ("pipeline", _cmd_pipeline, "all four stages in sequence"),
        ("scale", _cmd_scale, "best-of-N reward-guided inference"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_common_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("rank", help="order label triples, print the winner's index")
    p.add_argument("--labels", required=True,
                   help='comma-separated triples like "TTF,TFT"')
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("eval", help="score a prediction file against records")
    p.add_argument("--records", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VpcotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
