#!/usr/bin/env python3
"""Run the bundled fixture corpus end to end and print the report.

Artifacts land under --out (default out/): trees.json, traces.jsonl,
labels.jsonl, records.jsonl, report.json. With --staged the four stages run
as separate invocations, each re-reading the previous stage's artifact;
records.jsonl comes out byte-identical either way.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vpcot.config import load_config  # noqa: E402
from vpcot.pipeline import (  # noqa: E402
    run_pipeline,
    stage_convert,
    stage_execute,
    stage_generate,
    stage_label,
)

REPO = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=str(REPO / "out"), help="artifact directory")
    parser.add_argument("--staged", action="store_true",
                        help="run the stages standalone instead of chained")
    args = parser.parse_args()

    config = load_config(REPO / "fixtures" / "demo.cfg", overrides={"out": args.out})
    if args.staged:
        stage_generate(config)
        stage_execute(config)
        stage_label(config)
        _, report = stage_convert(config)
    else:
        report = run_pipeline(config)

    print(json.dumps(report, indent=2))
    print(f"\nartifacts in {config.output_dir}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
