"""phalm-trainer: train the validity filter, then serve it over /score."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import DataError
from .model import FilterModel, TrainerConfig, TrainerError, artifact_hash, train


def cmd_train(args) -> int:
    config = TrainerConfig.load(args.config)
    model, report = train(config)
    model_hash = model.save(config.artifact_path)
    print(json.dumps({"artifact": config.artifact_path, "model_hash": model_hash,
                      **report.record()}, ensure_ascii=False, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .serve import create_app

    artifact = Path(args.model)
    if not artifact.exists():
        print(f"model artifact not found: {artifact}", file=sys.stderr)
        return 2
    model = FilterModel.load(artifact)
    app = create_app(model, artifact_hash(artifact))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="phalm-trainer")
    subparsers = parser.add_subparsers(dest="command", required=True)

    train_parser = subparsers.add_parser("train", help="train on a training-set export")
    train_parser.add_argument("--config", required=True, help="trainer config JSON")

    serve_parser = subparsers.add_parser("serve", help="serve a trained artifact")
    serve_parser.add_argument("--model", required=True, help="model artifact path")
    serve_parser.add_argument("--host", default="127.0.0.1")
    serve_parser.add_argument("--port", type=int, default=8732)

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args)
        return cmd_serve(args)
    except (TrainerError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
