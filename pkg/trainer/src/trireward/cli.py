"""trireward CLI: train a checkpoint from record files, serve the scorer."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import TriHeadRewardModel
from .serve import make_http_server, serve_stdio
from .train import TrainConfig, train_from_records

DEFAULT_CHECKPOINT = Path("models") / "toy.pt"


def _cmd_train(args) -> int:
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        margin=args.margin,
        seed=args.seed,
    )
    last = train_from_records(args.records, args.out, config)
    print(json.dumps({"checkpoint": str(args.out), **last}, indent=2))
    return 0


def _cmd_serve(args) -> int:
    model = TriHeadRewardModel.load(args.checkpoint)
    if args.stdio:
        serve_stdio(model, sys.stdin, sys.stdout)
        return 0
    server = make_http_server(model, host=args.host, port=args.port)
    print(f"scoring at http://{server.server_address[0]}:{server.server_address[1]}/score",
          file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trireward",
        description="Toy tri-head reward model: train on step records, serve scores.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a checkpoint on a records.jsonl file")
    p.add_argument("--records", required=True)
    p.add_argument("--out", default=str(DEFAULT_CHECKPOINT))
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("serve", help="answer scoring-protocol requests")
    p.add_argument("--checkpoint", default=str(DEFAULT_CHECKPOINT))
    p.add_argument("--stdio", action="store_true", help="JSON lines over stdio")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8391)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
