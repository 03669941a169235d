"""Resumable pipeline stages over the seed and expansion graphs.

Every stage loads its inputs from disk, works inside one graph batch, and
saves back, so rerunning a completed stage with unchanged inputs is a no-op
(the graph version does not move). Stage records land in a run log;
human-facing numbers land in tabular report files.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from pathlib import Path

from . import negatives as neg
from .annotators import BOOTSTRAP_EVENT_EXAMPLES, BOOTSTRAP_INFERENCE_PAIRS, ScriptedAnnotatorPool, stable_int
from .config import PipelineConfig
from .crowd import (
    JUDGE_CONTINGENCY,
    JUDGE_TIME_INTERVAL,
    JUDGE_VALIDITY,
    WRITE_EVENT,
    WRITE_INFERENCE,
    CrowdStore,
)
from .gateway import (
    CompletionGateway,
    FixtureBackend,
    HttpCompletionBackend,
    RetryPolicy,
    SeededMockBackend,
)
from .graph import KnowledgeGraph, Relation, load_graph, normalize_text, save_graph
from .metrics import (
    MetricsReport,
    acceptance_rate,
    bleu,
    corpus_stats,
    char_tokenize,
    mean_point,
    mp_histogram,
    pearson_matrix,
)
from .prompts import (
    build_event_prompt,
    build_inference_prompt,
    default_templates,
    extract_tail,
    load_templates,
    render_finetune_examples,
    render_shot,
    write_finetune_file,
)
from .scoring import (
    ConstantScorer,
    LexicalOverlapScorer,
    RemoteHttpScorer,
    filter_by_threshold,
    score_triplets,
    sweep_thresholds,
    write_sweep,
)
from .syntax import RuleBasedAnalyzer

RELATION_ORDER = [r.value for r in Relation]


class StageError(Exception):
    """Stage cannot proceed; carries the recommended exit code."""

    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class StageRecord:
    stage: str
    input_version: int
    output_version: int
    counts: dict[str, int]
    pending: int = 0
    started_at: float = 0.0
    finished_at: float = 0.0

    def __post_init__(self) -> None:
        if "in" in self.counts:
            others = sum(v for k, v in self.counts.items() if k != "in")
            if self.counts["in"] != others:
                raise StageError(
                    f"{self.stage}: inconsistent counts {self.counts} "
                    f"(in != sum of outcomes)"
                )

    def record(self) -> dict:
        return {
            "stage": self.stage,
            "input_version": self.input_version,
            "output_version": self.output_version,
            "counts": self.counts,
            "pending": self.pending,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


class PipelineRuntime:
    """Shared handles for one pipeline invocation: clock, store, gateway."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        if config.deterministic_clock:
            self._ticks = 0

            def clock() -> float:
                self._ticks += 1
                return float(self._ticks)

            self.clock = clock
        else:
            self.clock = time.time
        self._store: CrowdStore | None = None
        self._gateway: CompletionGateway | None = None
        self.templates = (
            load_templates(config.path(config.templates_path))
            if config.templates_path else default_templates()
        )
        self.analyzer = RuleBasedAnalyzer()

    # -- lazily-built shared components --------------------------------------

    @property
    def store(self) -> CrowdStore:
        if self._store is None:
            path = self.config.crowd_store
            if path.exists():
                self._store = CrowdStore.load(path, clock=self.clock)
            else:
                self._store = CrowdStore(clock=self.clock)
        return self._store

    def save_store(self) -> None:
        if self._store is not None:
            self.config.crowd_store.parent.mkdir(parents=True, exist_ok=True)
            self._store.save(self.config.crowd_store)

    @property
    def gateway(self) -> CompletionGateway:
        if self._gateway is None:
            backend_cfg = self.config.backend
            if backend_cfg.kind == "mock_seeded":
                backend = SeededMockBackend(seed=backend_cfg.seed)
            elif backend_cfg.kind == "mock_fixture":
                table = {}
                if backend_cfg.fixture_path:
                    table = json.loads(
                        self.config.path(backend_cfg.fixture_path).read_text(encoding="utf-8"))
                backend = FixtureBackend(table, default=backend_cfg.default_completion)
            else:
                backend = HttpCompletionBackend(
                    backend_cfg.base_url, api_key_env=backend_cfg.api_key_env)
            self._gateway = CompletionGateway(
                backend,
                retry=RetryPolicy(backend_cfg.max_attempts, backend_cfg.backoff_seconds),
                rate_limit_per_sec=backend_cfg.rate_limit_per_sec,
            )
        return self._gateway

    def annotator_pool(self) -> ScriptedAnnotatorPool:
        cfg = self.config.annotators
        return ScriptedAnnotatorPool(
            seed=cfg.seed,
            workers=cfg.workers,
            accept_rate=cfg.accept_rate,
            event_responses=cfg.event_responses,
        )

    def scorer(self, seed_graph: KnowledgeGraph):
        cfg = self.config.scorer
        if cfg.kind == "constant":
            return ConstantScorer(cfg.value)
        if cfg.kind == "lexical_baseline":
            reference = [t for t in seed_graph.triplets(status="judged_valid")]
            return LexicalOverlapScorer(reference)
        return RemoteHttpScorer(cfg.endpoint, timeout=cfg.timeout)

    # -- graph + report helpers ----------------------------------------------

    def load_graph_or_new(self, path: Path, name: str) -> KnowledgeGraph:
        if path.exists():
            return load_graph(path)
        return KnowledgeGraph(name=name)

    def save_graph(self, graph: KnowledgeGraph, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_graph(graph, path)

    def log_stage(self, record: StageRecord) -> None:
        self.config.reports.mkdir(parents=True, exist_ok=True)
        log_path = self.config.reports / "run_log.jsonl"
        with log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.record(), ensure_ascii=False) + "\n")


# -- seed collection -----------------------------------------------------------


def _existing_task_keys(store: CrowdStore, kind: str) -> set:
    keys = set()
    for task in store.tasks(kind):
        if task.kind == WRITE_EVENT:
            keys.add(task.id)
        elif task.target:
            keys.add((task.target.get("head"), task.relation, task.target.get("tail")))
    return keys


def stage_seed_collect(runtime: PipelineRuntime) -> StageRecord:
    """Crowd-write events and inferences, gate them, grow the seed graph."""
    config = runtime.config
    store = runtime.store
    graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    started = runtime.clock()
    input_version = graph.version
    pool = runtime.annotator_pool()

    if not store.tasks(WRITE_EVENT):
        store.create_tasks(
            WRITE_EVENT,
            config.seed_events_to_collect,
            example_pool=BOOTSTRAP_EVENT_EXAMPLES,
            seed=config.seeds["tasks"],
            instructions="Write one everyday event involving a person X.",
        )
    pool.work_through(store, WRITE_EVENT)

    counts = {"in": 0, "kept": 0, "deduped": 0, "syntactic_rejected": 0}
    with graph.batch():
        for task in store.tasks(WRITE_EVENT):
            for judgment in store.judgments_for(task.id):
                counts["in"] += 1
                text = normalize_text(str(judgment.value))
                if not text or not runtime.analyzer.check_event(text).ok:
                    counts["syntactic_rejected"] += 1
                    continue
                inserted, _ = graph.add_event(text, "crowd")
                counts["kept" if inserted else "deduped"] += 1

        # Inference writing: one task per (collected event, enabled relation).
        existing = _existing_task_keys(store, WRITE_INFERENCE)
        events = sorted((e for e in graph.events() if e.source == "crowd"),
                        key=lambda e: e.id)
        for event in events:
            for relation in config.relations:
                if (event.text, relation.value, None) in existing:
                    continue
                rendered = [render_shot(runtime.templates[relation], h, t)
                            for h, t in BOOTSTRAP_INFERENCE_PAIRS[relation]]
                store.create_tasks(
                    WRITE_INFERENCE,
                    [(event.text, relation)],
                    example_pool=rendered,
                    seed=stable_int(config.seeds["tasks"], event.text, relation.value),
                    instructions="Write one inference for the shown event.",
                    required_judgments=config.inference_writers_per_event,
                )
        pool.work_through(store, WRITE_INFERENCE)

        inference_counts = {"in": 0, "kept": 0, "deduped": 0, "syntactic_rejected": 0}
        for task in store.tasks(WRITE_INFERENCE):
            relation = Relation.parse(task.relation)
            head = task.target["head"]
            for judgment in store.judgments_for(task.id):
                inference_counts["in"] += 1
                tail = normalize_text(str(judgment.value))
                if not tail or not runtime.analyzer.check_tail(tail, relation).ok:
                    inference_counts["syntactic_rejected"] += 1
                    continue
                outcome = graph.add_triplet(head, relation, tail, "crowd", status="raw")
                if outcome.inserted:
                    outcome.triplet.advance_status("syntactic_ok")
                    inference_counts["kept"] += 1
                else:
                    inference_counts["deduped"] += 1

    for key, value in inference_counts.items():
        counts[key] += value
    runtime.save_graph(graph, config.seed_graph)
    runtime.save_store()
    record = StageRecord(
        stage="seed-collect",
        input_version=input_version,
        output_version=graph.version,
        counts=counts,
        pending=store.pending_count(WRITE_EVENT) + store.pending_count(WRITE_INFERENCE),
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


def stage_seed_judge(runtime: PipelineRuntime) -> StageRecord:
    """Three-judge validity vote over collected inferences; Table-1-style report."""
    config = runtime.config
    store = runtime.store
    graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    started = runtime.clock()
    input_version = graph.version
    pool = runtime.annotator_pool()

    existing = _existing_task_keys(store, JUDGE_VALIDITY)
    candidates = sorted(
        (t for t in graph.triplets(status="syntactic_ok") if t.source == "crowd"),
        key=lambda t: t.id,
    )
    new_targets = [t.key for t in candidates if t.key not in existing]
    if new_targets:
        store.create_tasks(
            JUDGE_VALIDITY,
            new_targets,
            instructions="Is this inference acceptable for the event?",
            required_judgments=3,
        )
    pool.work_through(store, JUDGE_VALIDITY)
    pending = store.pending_count(JUDGE_VALIDITY)

    counts = {"in": 0, "kept": 0, "judged_invalid": 0}
    with graph.batch():
        for task in store.tasks(JUDGE_VALIDITY):
            if not task.complete:
                continue
            target = task.target
            triplet = graph.get_triplet(
                target["head"], Relation.parse(target["relation"]), target["tail"])
            if triplet is None or triplet.status != "syntactic_ok":
                continue  # not in this graph, or already judged on a prior run
            verdict = store.aggregate_majority(task.id)
            triplet.advance_status("judged_valid" if verdict == "valid" else "judged_invalid")
            graph.attach_judgments(triplet, [j.id for j in store.judgments_for(task.id)])
            counts["in"] += 1
            counts["kept" if verdict == "valid" else "judged_invalid"] += 1

    # Table-1 mirror: instances, valid counts, valid %, agreement per relation.
    validity = store.validity_report()
    lines = ["relation\tinstances\tvalid\tvalid_pct\tkappa"]
    for relation in RELATION_ORDER:
        if relation not in validity:
            continue
        entry = validity[relation]
        try:
            report = store.agreement_report(relation)
            kappa = "degenerate" if report.degenerate else f"{report.kappa:.4f}"
        except Exception:
            kappa = ""
        lines.append(f"{relation}\t{entry['instances']}\t{entry['valid']}"
                     f"\t{entry['valid_pct']:.2f}\t{kappa}")
    config.reports.mkdir(parents=True, exist_ok=True)
    (config.reports / "validity_report.tsv").write_text(
        "\n".join(lines) + "\n", encoding="utf-8")

    runtime.save_graph(graph, config.seed_graph)
    runtime.save_store()
    record = StageRecord(
        stage="seed-judge",
        input_version=input_version,
        output_version=graph.version,
        counts=counts,
        pending=pending,
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


# -- expansion ------------------------------------------------------------------


def _shot_pool_triplets(graph: KnowledgeGraph, relation: Relation, seed_filter: str):
    """Seed triplets usable as shots, honoring the seed-filter ablation switch."""
    statuses = ("judged_valid",) if seed_filter == "on" else (
        "syntactic_ok", "judged_valid", "judged_invalid")
    pool = [t for t in graph.triplets(relation=relation)
            if t.status in statuses and t.source == "crowd"]
    return sorted(pool, key=lambda t: t.id)


def stage_expand_events(runtime: PipelineRuntime, seed_filter: str | None = None) -> StageRecord:
    """Generate new events from seed-event shots; gate and dedup them."""
    config = runtime.config
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    expansion = runtime.load_graph_or_new(config.expansion_graph, "expansion")
    started = runtime.clock()
    input_version = expansion.version

    shot_events = sorted((e for e in seed_graph.events() if e.source == "crowd"),
                         key=lambda e: e.id)
    if len(shot_events) < 1:
        raise StageError("expand-events needs collected seed events", exit_code=2)

    prompts = []
    for call_index in range(config.events_to_generate):
        rng = random.Random(stable_int(config.seeds["shots"], "events", call_index))
        sample = rng.sample(shot_events, min(config.shot_count, len(shot_events)))
        prompts.append(build_event_prompt(sample).text)

    results = runtime.gateway.generate_batch(
        prompts, config.generation, parallelism=config.backend.parallelism)

    counts = {"in": len(results), "kept": 0, "deduped": 0,
              "syntactic_rejected": 0, "unparseable": 0, "backend_errors": 0}
    with expansion.batch():
        for result in results:
            if isinstance(result, Exception):
                counts["backend_errors"] += 1
                continue
            text = normalize_text(result.text.split("\n", 1)[0])
            if not text:
                counts["unparseable"] += 1
                continue
            if not runtime.analyzer.check_event(text).ok:
                counts["syntactic_rejected"] += 1
                continue
            if seed_graph.get_event(text) is not None or expansion.get_event(text) is not None:
                counts["deduped"] += 1
                continue
            expansion.add_event(text, "llm")
            counts["kept"] += 1
    if counts["backend_errors"] == len(results) and results:
        raise StageError("completion backend unreachable for every call", exit_code=3)

    runtime.save_graph(expansion, config.expansion_graph)
    record = StageRecord(
        stage="expand-events",
        input_version=input_version,
        output_version=expansion.version,
        counts=counts,
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


def stage_expand_inferences(runtime: PipelineRuntime, seed_filter: str | None = None) -> StageRecord:
    """Generate tails for each (generated event, relation); extract, gate, dedup."""
    config = runtime.config
    seed_filter = seed_filter or config.seed_filter
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    expansion = runtime.load_graph_or_new(config.expansion_graph, "expansion")
    started = runtime.clock()
    input_version = expansion.version

    events = sorted((e for e in expansion.events() if e.source == "llm"), key=lambda e: e.id)
    if not events:
        raise StageError("expand-inferences needs generated events (run expand-events)", 2)

    jobs = []  # (event, relation, prompt)
    for event in events:
        for relation in config.relations:
            pool = _shot_pool_triplets(seed_graph, relation, seed_filter)
            if not pool:
                raise StageError(f"no seed shots for {relation.value}", 2)
            template = runtime.templates[relation]
            for call_index in range(config.inferences_per_event_call):
                rng = random.Random(stable_int(
                    config.seeds["shots"], "inferences", event.id, relation.value, call_index))
                shots = rng.sample(pool, min(config.shot_count, len(pool)))
                prompt = build_inference_prompt(shots, event.text, template).text
                jobs.append((event, relation, prompt))

    results = runtime.gateway.generate_batch(
        [prompt for _, _, prompt in jobs], config.generation,
        parallelism=config.backend.parallelism)

    counts = {"in": len(results), "kept": 0, "deduped": 0,
              "syntactic_rejected": 0, "unparseable": 0, "backend_errors": 0}
    with expansion.batch():
        for (event, relation, _), result in zip(jobs, results):
            if isinstance(result, Exception):
                counts["backend_errors"] += 1
                continue
            tail = extract_tail(result.text, runtime.templates[relation], event.text)
            if tail is None:
                counts["unparseable"] += 1
                continue
            if not runtime.analyzer.check_tail(tail, relation).ok:
                counts["syntactic_rejected"] += 1
                continue
            if seed_graph.get_triplet(event.text, relation, tail) is not None:
                counts["deduped"] += 1
                continue
            outcome = expansion.add_triplet(event.text, relation, tail, "llm", status="raw")
            if outcome.inserted:
                outcome.triplet.advance_status("syntactic_ok")
                counts["kept"] += 1
            else:
                counts["deduped"] += 1
    if counts["backend_errors"] == len(results) and results:
        raise StageError("completion backend unreachable for every call", exit_code=3)

    runtime.save_graph(expansion, config.expansion_graph)
    record = StageRecord(
        stage="expand-inferences",
        input_version=input_version,
        output_version=expansion.version,
        counts=counts,
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


# -- filtering ------------------------------------------------------------------


def _judged_valid_subgraph(seed_graph: KnowledgeGraph) -> KnowledgeGraph:
    subgraph = KnowledgeGraph(name=f"{seed_graph.name}-valid")
    with subgraph.batch():
        for t in sorted(seed_graph.triplets(status="judged_valid"), key=lambda t: t.id):
            outcome = subgraph.add_triplet(t.head, t.relation, t.tail, t.source, status="raw")
            outcome.triplet.status = "judged_valid"
    return subgraph


def stage_train_filter_export(runtime: PipelineRuntime) -> StageRecord:
    """Build and export the filter training set from the judged seed graph."""
    config = runtime.config
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    started = runtime.clock()
    valid = _judged_valid_subgraph(seed_graph)
    if len(valid) == 0:
        raise StageError("no judged_valid triplets to train from (run seed-judge)", 2)

    training = neg.build_training_set(
        valid, mix=config.negative_mix, seed=config.seeds["negatives"])
    flat = [ex for relation in RELATION_ORDER for ex in training.get(relation, [])]
    config.reports.mkdir(parents=True, exist_ok=True)
    out_path = config.reports / "filter_train.jsonl"
    neg.write_training_set(flat, out_path)

    record = StageRecord(
        stage="train-filter-export",
        input_version=seed_graph.version,
        output_version=seed_graph.version,
        counts={"in": len(flat), "kept": len(flat)},
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


def stage_filter(runtime: PipelineRuntime) -> StageRecord:
    """Score expansion triplets; apply the threshold and/or emit the sweep."""
    config = runtime.config
    if config.threshold is None and config.sweep_grid is None:
        raise StageError("filter stage needs an explicit threshold or a sweep_grid", 2)
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    expansion = runtime.load_graph_or_new(config.expansion_graph, "expansion")
    started = runtime.clock()
    input_version = expansion.version

    scorer = runtime.scorer(seed_graph)
    candidates = sorted(expansion.triplets(status="syntactic_ok"), key=lambda t: t.id)
    counts = {"in": len(candidates), "kept": 0, "filter_fail": 0, "scoring_errors": 0}

    with expansion.batch():
        results = score_triplets(candidates, scorer, batch_size=config.scorer.batch_size)
        errors = [r for r in results if isinstance(r, Exception)]
        if errors and len(errors) == len(candidates) and candidates:
            raise StageError(f"scoring failed for every item: {errors[0]}", exit_code=3)
        scored = [t for t, r in zip(candidates, results) if not isinstance(r, Exception)]
        counts["scoring_errors"] = len(errors)

        if config.threshold is not None:
            passed, failed = filter_by_threshold(scored, config.threshold)
            counts["kept"] = len(passed)
            counts["filter_fail"] = len(failed)
        else:
            counts["kept"] = len(scored)

    if config.sweep_grid is not None:
        sweep_set = sorted((t for t in expansion.triplets() if t.filter_score is not None),
                           key=lambda t: t.id)
        points = sweep_thresholds(sweep_set, config.sweep_grid)
        config.reports.mkdir(parents=True, exist_ok=True)
        write_sweep(points, config.reports / "sweep.tsv")

    runtime.save_graph(expansion, config.expansion_graph)
    record = StageRecord(
        stage="filter",
        input_version=input_version,
        output_version=expansion.version,
        counts=counts,
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


# -- export and evaluation --------------------------------------------------------


def _final_triplets(seed_graph: KnowledgeGraph, expansion: KnowledgeGraph):
    final = [t for t in seed_graph.triplets(status="judged_valid")]
    final.extend(t for t in expansion.triplets(status="filter_pass"))
    return sorted(final, key=lambda t: t.id)


def stage_export(runtime: PipelineRuntime) -> StageRecord:
    """Seeded train/test split plus fine-tune files in both input formats."""
    config = runtime.config
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    expansion = runtime.load_graph_or_new(config.expansion_graph, "expansion")
    started = runtime.clock()

    final = _final_triplets(seed_graph, expansion)
    test_size = config.export.test_size
    if len(final) <= test_size:
        raise StageError(
            f"final graph has {len(final)} triplets; need more than test_size={test_size}", 2)

    rng = random.Random(config.seeds["split"])
    test_ids = set(t.id for t in rng.sample(final, test_size))
    test = [t for t in final if t.id in test_ids]
    train = [t for t in final if t.id not in test_ids]

    config.exports.mkdir(parents=True, exist_ok=True)
    pronouns = config.export.pronouns
    render_kwargs = {"pronoun_mode": config.export.pronoun_mode,
                     "seed": config.seeds["pronouns"]}
    if pronouns:
        render_kwargs["pronouns"] = pronouns

    decoder_examples, encoder_examples = [], []
    for t in train:
        decoder, encoder = render_finetune_examples(t, **render_kwargs)
        decoder_examples.append(decoder)
        encoder_examples.append(encoder)
    write_finetune_file(decoder_examples, config.exports / "train_decoder_only.jsonl")
    write_finetune_file(encoder_examples, config.exports / "train_encoder_decoder.jsonl")

    for name, triplets in (("train_triplets.jsonl", train), ("test_triplets.jsonl", test)):
        lines = [json.dumps(
            {"id": t.id, "head": t.head, "relation": t.relation.value, "tail": t.tail},
            ensure_ascii=False) for t in triplets]
        (config.exports / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    record = StageRecord(
        stage="export",
        input_version=expansion.version,
        output_version=expansion.version,
        counts={"in": len(final), "kept": len(train), "test_split": len(test)},
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


def _synthesize_eval_fixtures(runtime: PipelineRuntime, seed: int):
    """A mock model plus mock raters over the exported test split.

    Stands in for the out-of-scope fine-tuned generator so the evaluation
    stage runs end to end against deterministic inputs.
    """
    config = runtime.config
    test_path = config.exports / "test_triplets.jsonl"
    if not test_path.exists():
        raise StageError("evaluate needs the export stage's test_triplets.jsonl", 2)
    test = [json.loads(line) for line in test_path.read_text(encoding="utf-8").splitlines()]

    outputs = []
    judgments = []
    chars = "水顔本歌朝傘靴手窓机"
    for rec in test:
        rng = random.Random(stable_int(seed, "output", rec["id"]))
        reference = rec["tail"]
        if rng.random() < 0.5:
            candidate = reference
        else:
            pos = rng.randrange(len(reference))
            candidate = reference[:pos] + rng.choice(chars) + reference[pos + 1:]
        outputs.append({
            "id": rec["id"], "head": rec["head"], "relation": rec["relation"],
            "candidate": candidate, "reference": reference,
        })
        for worker in range(3):
            h = stable_int(seed, "level", rec["id"], worker)
            level = (0, 1, 1, 2, 2, 3)[h % 6]
            judgments.append({"inference_id": rec["id"], "worker_id": f"w{worker:02d}",
                              "level": level})

    config.reports.mkdir(parents=True, exist_ok=True)
    outputs_path = config.reports / "eval_outputs.jsonl"
    judgments_path = config.reports / "eval_judgments.jsonl"
    outputs_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in outputs) + "\n", encoding="utf-8")
    judgments_path.write_text(
        "\n".join(json.dumps(r, ensure_ascii=False) for r in judgments) + "\n", encoding="utf-8")
    return outputs_path, judgments_path


def _ordinal_distribution(store: CrowdStore, kind: str, levels: int):
    """Median counts per level, split by the judged tail's source."""
    rows = {level: {"crowd": 0, "llm": 0} for level in range(levels)}
    seen = False
    for task in store.tasks(kind):
        if not task.complete:
            continue
        median = store.aggregate_median(task.id)
        source = (task.target or {}).get("source", "crowd")
        rows[median][source] = rows[median].get(source, 0) + 1
        seen = True
    return rows if seen else None


def stage_evaluate(runtime: PipelineRuntime, similarity=None) -> StageRecord:
    """Metrics report plus plot-ready exports from outputs and judgments.

    `similarity` is an optional (candidate, reference) -> [0, 1] scorer; when
    given, its per-inference series joins the correlation matrix.
    """
    config = runtime.config
    started = runtime.clock()

    outputs_path = config.evaluate.outputs_path and config.path(config.evaluate.outputs_path)
    judgments_path = config.evaluate.judgments_path and config.path(config.evaluate.judgments_path)
    if config.evaluate.synthesize_with_seed is not None:
        outputs_path, judgments_path = _synthesize_eval_fixtures(
            runtime, config.evaluate.synthesize_with_seed)

    missing = [str(name) for name, p in
               (("outputs_path", outputs_path), ("judgments_path", judgments_path))
               if p is None or not Path(p).exists()]
    if missing:
        raise StageError(f"evaluate is missing inputs: {', '.join(missing)}", 2)

    outputs = [json.loads(line)
               for line in Path(outputs_path).read_text(encoding="utf-8").splitlines() if line]
    raw_judgments = [json.loads(line)
                     for line in Path(judgments_path).read_text(encoding="utf-8").splitlines()
                     if line]
    by_inference: dict[str, list[int]] = {}
    for rec in raw_judgments:
        by_inference.setdefault(rec["inference_id"], []).append(int(rec["level"]))

    candidates = [rec["candidate"] for rec in outputs]
    references = [rec["reference"] for rec in outputs]

    ar = acceptance_rate(by_inference)
    mp = mean_point(by_inference)
    corpus_bleu = bleu(candidates, references)
    stats = corpus_stats(candidates, tokenize=char_tokenize)

    series: dict[str, list[float]] = {"AR": [], "MP": [], "BLEU": []}
    if similarity is not None:
        series["similarity"] = []
    for rec in outputs:
        levels = by_inference.get(rec["id"])
        if levels is None:
            raise StageError(f"no judgments for output {rec['id']}", 2)
        series["AR"].append(1.0 if sum(1 for v in levels if v > 0) > len(levels) / 2 else 0.0)
        series["MP"].append(sum(levels) / len(levels))
        series["BLEU"].append(bleu([rec["candidate"]], [rec["reference"]], smoothing=True))
        if similarity is not None:
            series["similarity"].append(float(similarity(rec["candidate"], rec["reference"])))
    correlations = pearson_matrix(series) if len(outputs) >= 2 else {}

    report = MetricsReport(
        acceptance_rate=ar,
        mean_point=mp,
        bleu=corpus_bleu,
        avg_output_length=stats["avg_output_length"],
        unique_word_count=stats["unique_word_count"],
        correlations=correlations,
    )
    config.reports.mkdir(parents=True, exist_ok=True)
    (config.reports / "metrics_report.json").write_text(
        json.dumps(report.record(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")

    histogram = mp_histogram(by_inference)
    lines = ["bin_low\tbin_high\tcount"]
    lines += [f"{row['bin_low']}\t{row['bin_high']}\t{row['count']}" for row in histogram]
    (config.reports / "mp_histogram.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # Ordinal comparison distributions, when the comparison tasks were judged.
    store = runtime.store if config.crowd_store.exists() else None
    if store is not None:
        for kind, levels, filename in (
            (JUDGE_CONTINGENCY, 3, "contingency_distribution.tsv"),
            (JUDGE_TIME_INTERVAL, 5, "time_interval_distribution.tsv"),
        ):
            rows = _ordinal_distribution(store, kind, levels)
            if rows is None:
                continue
            out = ["level\tcrowd\tllm"]
            out += [f"{level}\t{cells['crowd']}\t{cells['llm']}" for level, cells in rows.items()]
            (config.reports / filename).write_text("\n".join(out) + "\n", encoding="utf-8")

    record = StageRecord(
        stage="evaluate",
        input_version=0,
        output_version=0,
        counts={"in": len(outputs), "kept": len(outputs)},
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


def stage_compare_xeffect(runtime: PipelineRuntime) -> StageRecord:
    """Crowd tails vs freshly generated tails for the same heads (xEffect),
    judged on contingency and time interval."""
    config = runtime.config
    store = runtime.store
    seed_graph = runtime.load_graph_or_new(config.seed_graph, "seed")
    started = runtime.clock()
    pool = runtime.annotator_pool()
    relation = Relation.XEFFECT
    template = runtime.templates[relation]

    crowd_triplets = sorted(seed_graph.triplets(relation=relation, status="judged_valid"),
                            key=lambda t: t.id)
    if not crowd_triplets:
        raise StageError("compare-xeffect needs judged xEffect seed triplets", 2)
    heads = sorted({t.head for t in crowd_triplets})

    # Three generations per head, fresh shots each.
    jobs = []
    for head in heads:
        for call_index in range(3):
            rng = random.Random(stable_int(config.seeds["shots"], "compare", head, call_index))
            shots = rng.sample(crowd_triplets, min(config.shot_count, len(crowd_triplets)))
            jobs.append((head, build_inference_prompt(shots, head, template).text))
    results = runtime.gateway.generate_batch(
        [p for _, p in jobs], config.generation, parallelism=config.backend.parallelism)

    generated: dict[tuple[str, str], None] = {}
    counts = {"in": len(results), "kept": 0, "deduped": 0,
              "syntactic_rejected": 0, "unparseable": 0, "backend_errors": 0}
    for (head, _), result in zip(jobs, results):
        if isinstance(result, Exception):
            counts["backend_errors"] += 1
            continue
        tail = extract_tail(result.text, template, head)
        if tail is None:
            counts["unparseable"] += 1
            continue
        if not runtime.analyzer.check_tail(tail, relation).ok:
            counts["syntactic_rejected"] += 1
            continue
        if (head, tail) in generated or seed_graph.get_triplet(head, relation, tail) is not None:
            counts["deduped"] += 1
            continue
        generated[(head, tail)] = None
        counts["kept"] += 1

    pairs = [(t.head, t.tail, "crowd") for t in crowd_triplets]
    pairs += [(head, tail, "llm") for head, tail in generated]
    for kind in (JUDGE_CONTINGENCY, JUDGE_TIME_INTERVAL):
        taken = {(t.target.get("head"), t.relation, t.target.get("tail"))
                 for t in store.tasks(kind)}
        fresh = [(h, relation, tl) for h, tl, _ in pairs
                 if (h, relation.value, tl) not in taken]
        if fresh:
            created = store.create_tasks(
                kind, fresh,
                instructions="Judge the relationship between the two events.",
                required_judgments=3,
            )
            source_of = {(h, tl): src for h, tl, src in pairs}
            for task in created:
                task.target["source"] = source_of[(task.target["head"], task.target["tail"])]
        pool.work_through(store, kind)

    runtime.save_store()
    record = StageRecord(
        stage="compare-xeffect",
        input_version=seed_graph.version,
        output_version=seed_graph.version,
        counts=counts,
        started_at=started,
        finished_at=runtime.clock(),
    )
    runtime.log_stage(record)
    return record


STAGES_IN_ORDER = (
    ("seed-collect", stage_seed_collect),
    ("seed-judge", stage_seed_judge),
    ("expand-events", stage_expand_events),
    ("expand-inferences", stage_expand_inferences),
    ("train-filter-export", stage_train_filter_export),
    ("filter", stage_filter),
    ("compare-xeffect", stage_compare_xeffect),
    ("export", stage_export),
    ("evaluate", stage_evaluate),
)


def run_full_pipeline(runtime: PipelineRuntime) -> list[StageRecord]:
    return [stage_fn(runtime) for _, stage_fn in STAGES_IN_ORDER]
