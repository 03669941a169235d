"""Pipeline configuration: one JSON file, documented keys, validated up front.

Relative paths resolve against the config file's directory, so a run
directory is fully described by the files inside it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import GenerationParams
from .graph import Relation


class ConfigError(Exception):
    pass


@dataclass
class BackendConfig:
    kind: str = "mock_seeded"  # mock_seeded | mock_fixture | http
    seed: int = 0
    fixture_path: str | None = None
    default_completion: str | None = None  # mock_fixture fallback for unlisted prompts
    base_url: str | None = None
    api_key_env: str | None = None
    rate_limit_per_sec: float | None = None
    max_attempts: int = 3
    backoff_seconds: float = 0.5
    parallelism: int = 4

    def validate(self) -> None:
        if self.kind not in ("mock_seeded", "mock_fixture", "http"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.base_url:
            raise ConfigError("http backend needs base_url")
        if self.kind == "mock_fixture" and not (self.fixture_path or self.default_completion):
            raise ConfigError("mock_fixture backend needs fixture_path or default_completion")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


@dataclass
class ScorerConfig:
    kind: str = "lexical_baseline"  # lexical_baseline | constant | remote_http
    value: float = 0.5
    endpoint: str | None = None
    batch_size: int = 32
    timeout: float = 30.0

    def validate(self) -> None:
        if self.kind not in ("lexical_baseline", "constant", "remote_http"):
            raise ConfigError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "remote_http" and not self.endpoint:
            raise ConfigError("remote_http scorer needs endpoint")
        if self.batch_size < 1:
            raise ConfigError("scorer batch_size must be >= 1")


@dataclass
class AnnotatorConfig:
    workers: int = 5
    seed: int = 0
    accept_rate: float = 0.85
    event_responses: list[str] | None = None  # None -> bundled fixture

    def validate(self) -> None:
        if self.workers < 3:
            raise ConfigError("need at least 3 scripted workers for 3-judge tasks")
        if not 0.0 <= self.accept_rate <= 1.0:
            raise ConfigError("accept_rate must be in [0, 1]")


@dataclass
class ExportConfig:
    test_size: int = 150
    pronoun_mode: str = "placeholder"  # placeholder | random_pronoun
    pronouns: list[str] | None = None

    def validate(self) -> None:
        if self.test_size < 1:
            raise ConfigError("test_size must be >= 1")
        if self.pronoun_mode not in ("placeholder", "random_pronoun"):
            raise ConfigError(f"unknown pronoun_mode {self.pronoun_mode!r}")


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8731
    token: str | None = None


@dataclass
class EvaluateConfig:
    outputs_path: str | None = None
    judgments_path: str | None = None
    synthesize_with_seed: int | None = None  # mock-model fixture mode


@dataclass
class PipelineConfig:
    base_dir: Path = field(default_factory=Path.cwd)
    seed_graph_path: str = "seed_graph.jsonl"
    expansion_graph_path: str = "expansion_graph.jsonl"
    crowd_store_path: str = "crowd_store.jsonl"
    reports_dir: str = "reports"
    export_dir: str = "export"
    templates_path: str | None = None

    backend: BackendConfig = field(default_factory=BackendConfig)
    generation: GenerationParams = field(default_factory=GenerationParams)
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    annotators: AnnotatorConfig = field(default_factory=AnnotatorConfig)
    export: ExportConfig = field(default_factory=ExportConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    shot_count: int = 10
    events_to_generate: int = 10_000
    inferences_per_event_call: int = 10
    relations: list[Relation] = field(default_factory=lambda: list(Relation))
    seed_events_to_collect: int = 20
    inference_writers_per_event: int = 3
    seed_filter: str = "on"  # on | off: the seed-filter ablation switch

    threshold: float | None = None
    sweep_grid: list[float] | None = None
    negative_mix: dict | None = None

    seeds: dict = field(default_factory=lambda: {
        "shots": 17, "split": 23, "negatives": 29, "annotators": 31, "pronouns": 37,
        "tasks": 41,
    })
    deterministic_clock: bool = False

    # -- path helpers --------------------------------------------------------

    def path(self, relative: str) -> Path:
        p = Path(relative)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def seed_graph(self) -> Path:
        return self.path(self.seed_graph_path)

    @property
    def expansion_graph(self) -> Path:
        return self.path(self.expansion_graph_path)

    @property
    def crowd_store(self) -> Path:
        return self.path(self.crowd_store_path)

    @property
    def reports(self) -> Path:
        return self.path(self.reports_dir)

    @property
    def exports(self) -> Path:
        return self.path(self.export_dir)

    def validate(self) -> None:
        for name in ("shot_count", "events_to_generate", "inferences_per_event_call",
                     "seed_events_to_collect", "inference_writers_per_event"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed_filter not in ("on", "off"):
            raise ConfigError("seed_filter must be 'on' or 'off'")
        if not self.relations:
            raise ConfigError("at least one relation must be enabled")
        if self.threshold is not None and not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.sweep_grid is not None:
            if list(self.sweep_grid) != sorted(self.sweep_grid):
                raise ConfigError("sweep_grid must be sorted ascending")
        self.backend.validate()
        self.scorer.validate()
        self.annotators.validate()
        self.export.validate()
        if self.templates_path is not None and not self.path(self.templates_path).exists():
            raise ConfigError(f"templates file not found: {self.path(self.templates_path)}")
        if self.backend.kind == "mock_fixture" and self.backend.fixture_path:
            if not self.path(self.backend.fixture_path).exists():
                raise ConfigError(f"fixture file not found: {self.path(self.backend.fixture_path)}")


def _build(cls, data: dict, context: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    return cls(**data)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")

    kwargs: dict = {"base_dir": path.resolve().parent}
    nested = {
        "backend": BackendConfig,
        "scorer": ScorerConfig,
        "annotators": AnnotatorConfig,
        "export": ExportConfig,
        "service": ServiceConfig,
        "evaluate": EvaluateConfig,
    }
    for key, value in data.items():
        if key in nested:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be an object")
            kwargs[key] = _build(nested[key], value, key)
        elif key == "generation":
            if not isinstance(value, dict):
                raise ConfigError("generation must be an object")
            stops = value.pop("stop_sequences", None)
            if stops is not None:
                value["stop_sequences"] = tuple(stops)
            try:
                kwargs[key] = GenerationParams(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"generation: {exc}") from None
        elif key == "relations":
            kwargs[key] = [Relation.parse(name) for name in value]
        elif key in PipelineConfig.__dataclass_fields__:
            kwargs[key] = value
        else:
            raise ConfigError(f"{path}: unknown key {key!r}")

    config = PipelineConfig(**kwargs)
    config.validate()
    return config
