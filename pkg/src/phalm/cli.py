"""Command-line entry point: one subcommand per pipeline stage, plus serve.

Exit codes: 0 success, 2 validation error, 3 external-dependency error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .crowd import (
    JUDGE_CONTINGENCY,
    JUDGE_TIME_INTERVAL,
    JUDGE_VALIDITY,
    WRITE_EVENT,
    WRITE_INFERENCE,
)
from .gateway import TransportError
from .graph import GraphError, Relation
from .pipeline import (
    PipelineRuntime,
    StageError,
    run_full_pipeline,
    stage_compare_xeffect,
    stage_evaluate,
    stage_expand_events,
    stage_expand_inferences,
    stage_export,
    stage_filter,
    stage_seed_collect,
    stage_seed_judge,
    stage_train_filter_export,
)
from .scoring import ScoringError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DEPENDENCY = 3


def _print_record(record) -> None:
    counts = " ".join(f"{k}={v}" for k, v in record.counts.items())
    pending = f" pending={record.pending}" if record.pending else ""
    print(f"[{record.stage}] version {record.input_version} -> {record.output_version} "
          f"| {counts}{pending}")


def _seed_demo_tasks(store) -> None:
    """One open task of each kind, for UI development and scripted sessions."""
    from .annotators import BOOTSTRAP_EVENT_EXAMPLES, BOOTSTRAP_INFERENCE_PAIRS
    from .prompts import default_templates, render_shot

    templates = default_templates()
    store.create_tasks(WRITE_EVENT, 1, example_pool=BOOTSTRAP_EVENT_EXAMPLES, seed=1,
                       instructions="Write one everyday event involving a person X.")
    rendered = [render_shot(templates[Relation.XNEED], h, t)
                for h, t in BOOTSTRAP_INFERENCE_PAIRS[Relation.XNEED]]
    store.create_tasks(WRITE_INFERENCE, [("Xが顔を洗う", Relation.XNEED)],
                       example_pool=rendered, seed=1,
                       instructions="Write one inference for the shown event.")
    store.create_tasks(JUDGE_VALIDITY, [("Xが顔を洗う", Relation.XNEED, "Xが水道で水を出す")],
                       instructions="Is this inference acceptable for the event?")
    store.create_tasks(JUDGE_CONTINGENCY, [("Xが顔を洗う", Relation.XEFFECT, "Xがタオルで顔を拭く")],
                       instructions="How likely is the second event to follow the first?")
    store.create_tasks(JUDGE_TIME_INTERVAL, [("Xが顔を洗う", Relation.XEFFECT, "Xがタオルで顔を拭く")],
                       instructions="How long between the two events?")


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    runtime = PipelineRuntime(config)
    store = runtime.store
    if args.demo_tasks and not store.tasks():
        _seed_demo_tasks(store)
        runtime.save_store()
    app = create_app(store, token=config.service.token, store_path=config.crowd_store)
    host = args.host or config.service.host
    port = args.port or config.service.port
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="phalm",
        description="Build a commonsense event knowledge graph by prompting "
                    "crowdworkers and a text-completion backend.",
    )
    parser.add_argument("--config", required=True, help="path to the pipeline config JSON")
    subparsers = parser.add_subparsers(dest="command", required=True)

    stage_commands = {
        "seed-collect": stage_seed_collect,
        "seed-judge": stage_seed_judge,
        "train-filter-export": stage_train_filter_export,
        "filter": stage_filter,
        "export": stage_export,
        "evaluate": stage_evaluate,
        "compare-xeffect": stage_compare_xeffect,
    }
    for name in stage_commands:
        subparsers.add_parser(name, help=f"run the {name} stage")

    for name in ("expand-events", "expand-inferences"):
        p = subparsers.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--seed-filter", choices=["on", "off"], default=None,
                       help="use the majority-filtered (on) or unfiltered (off) seed shots")

    subparsers.add_parser("run", help="run every stage in order")

    serve = subparsers.add_parser("serve", help="host the crowd annotation HTTP API")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    serve.add_argument("--demo-tasks", action="store_true",
                       help="seed one open task of each kind into an empty store")

    args = parser.parse_args(argv)

    try:
        if args.command == "serve":
            return cmd_serve(args)
        config = load_config(args.config)
        runtime = PipelineRuntime(config)
        if args.command == "run":
            for record in run_full_pipeline(runtime):
                _print_record(record)
        elif args.command in ("expand-events", "expand-inferences"):
            stage_fn = {"expand-events": stage_expand_events,
                        "expand-inferences": stage_expand_inferences}[args.command]
            _print_record(stage_fn(runtime, seed_filter=args.seed_filter))
        else:
            _print_record(stage_commands[args.command](runtime))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (TransportError, ScoringError) as exc:
        print(f"external dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except GraphError as exc:
        print(f"graph error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
