"""Annotation tasks, judgment collection, and aggregation.

One store holds every task and judgment; submissions are atomic per task and
a worker can judge a task only once. Aggregation (majority vote, medians,
Fleiss's kappa) reads completed tasks only. The HTTP layer in service.py is
a thin wrapper over this store.
"""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .graph import Relation

STORE_FORMAT = "phalm-crowd"
STORE_VERSION = 1

WRITE_EVENT = "write_event"
WRITE_INFERENCE = "write_inference"
JUDGE_VALIDITY = "judge_validity"
JUDGE_CONTINGENCY = "judge_contingency"
JUDGE_TIME_INTERVAL = "judge_time_interval"

WRITE_KINDS = (WRITE_EVENT, WRITE_INFERENCE)
JUDGE_KINDS = (JUDGE_VALIDITY, JUDGE_CONTINGENCY, JUDGE_TIME_INTERVAL)
TASK_KINDS = WRITE_KINDS + JUDGE_KINDS

EXAMPLES_PER_WRITE_TASK = 10

# Control specs served to the annotation UI; labels ride with the payload so
# the UI stays language-agnostic. Option order follows the task wording.
CONTROL_SPECS = {
    WRITE_EVENT: {"type": "free_text"},
    WRITE_INFERENCE: {"type": "free_text"},
    JUDGE_VALIDITY: {
        "type": "choice",
        "options": [
            {"value": "accept", "label": "accept"},
            {"value": "reject", "label": "reject"},
        ],
    },
    JUDGE_CONTINGENCY: {
        "type": "ordinal",
        "options": [
            {"value": 2, "label": "must happen"},
            {"value": 1, "label": "likely to happen"},
            {"value": 0, "label": "does not happen"},
        ],
    },
    JUDGE_TIME_INTERVAL: {
        "type": "ordinal",
        "options": [
            {"value": 0, "label": "almost simultaneous"},
            {"value": 1, "label": "seconds to minutes"},
            {"value": 2, "label": "hours"},
            {"value": 3, "label": "days to months"},
            {"value": 4, "label": "longer"},
        ],
    },
}

SUBMIT_ACCEPTED = "accepted"
SUBMIT_TASK_COMPLETE = "task_complete"
SUBMIT_DUPLICATE_WORKER = "duplicate_worker"
SUBMIT_DOMAIN_ERROR = "domain_error"


class CrowdError(Exception):
    pass


class TaskNotFound(CrowdError):
    pass


class TaskClosed(CrowdError):
    pass


@dataclass
class AnnotationTask:
    id: str
    kind: str
    instructions: str
    examples: list[str] = field(default_factory=list)
    target: dict | None = None
    relation: str | None = None
    required_judgments: int = 1
    complete: bool = False

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise CrowdError(f"unknown task kind {self.kind!r}")
        if self.kind in WRITE_KINDS and len(self.examples) != EXAMPLES_PER_WRITE_TASK:
            raise CrowdError(
                f"write tasks carry exactly {EXAMPLES_PER_WRITE_TASK} examples, "
                f"got {len(self.examples)}"
            )
        if self.kind in JUDGE_KINDS and not self.target:
            raise CrowdError("judge tasks need a target")
        if self.required_judgments < 1:
            raise CrowdError("required_judgments must be >= 1")
        if self.kind == JUDGE_VALIDITY and self.required_judgments % 2 == 0:
            raise CrowdError("validity tasks need an odd judge count for a total majority")


@dataclass(frozen=True)
class Judgment:
    id: str
    task_id: str
    worker_id: str
    value: str | int
    submitted_at: float


@dataclass(frozen=True)
class AgreementReport:
    relation: str
    kappa: float | None  # None when chance agreement is degenerate
    n_items: int
    n_raters: int

    @property
    def degenerate(self) -> bool:
        return self.kappa is None


def validate_value(kind: str, value) -> str | int | None:
    """Coerce a submitted value into the task kind's domain; None if outside."""
    if kind in WRITE_KINDS:
        if isinstance(value, str) and value.strip():
            return value
        return None
    if kind == JUDGE_VALIDITY:
        return value if value in ("accept", "reject") else None
    bounds = {JUDGE_CONTINGENCY: 2, JUDGE_TIME_INTERVAL: 4}[kind]
    if isinstance(value, bool) or not isinstance(value, int):
        return None
    return value if 0 <= value <= bounds else None


def fleiss_kappa(matrix: Sequence[Sequence[int]]) -> float | None:
    """Chance-corrected agreement for items x category-count rows.

    Every row must sum to the same rater count n >= 2. Returns None when all
    mass sits in one category (expected agreement 1, kappa undefined).
    """
    if not matrix:
        raise CrowdError("empty judgment matrix")
    n = sum(matrix[0])
    if n < 2:
        raise CrowdError("Fleiss's kappa needs at least two raters per item")
    for row in matrix:
        if sum(row) != n:
            raise CrowdError(f"uneven rater counts: {sum(row)} != {n}")
    n_items = len(matrix)
    n_categories = len(matrix[0])

    p_agree_items = [
        (sum(c * c for c in row) - n) / (n * (n - 1))
        for row in matrix
    ]
    p_bar = sum(p_agree_items) / n_items
    marginals = [
        sum(row[j] for row in matrix) / (n * n_items)
        for j in range(n_categories)
    ]
    p_e = sum(p * p for p in marginals)
    if p_e >= 1.0:
        return None
    return (p_bar - p_e) / (1.0 - p_e)


class CrowdStore:
    """Tasks plus judgments; concurrent submissions are serialized per store."""

    def __init__(self, clock: Callable[[], float] = time.time):
        self._tasks: dict[str, AnnotationTask] = {}
        self._judgments: dict[str, Judgment] = {}
        self._by_task: dict[str, list[str]] = {}
        self._lock = threading.Lock()
        self._clock = clock
        self._task_counter = 0
        self._judgment_counter = 0

    # -- task creation ------------------------------------------------------

    def _next_task_id(self) -> str:
        self._task_counter += 1
        return f"t{self._task_counter:06d}"

    def _next_judgment_id(self) -> str:
        self._judgment_counter += 1
        return f"j{self._judgment_counter:06d}"

    def create_tasks(
        self,
        kind: str,
        targets,
        example_pool: Sequence[str] = (),
        seed: int = 0,
        instructions: str = "",
        required_judgments: int | None = None,
    ) -> list[AnnotationTask]:
        """One task per target (write_event takes a slot count instead).

        Write tasks sample their 10 examples deterministically per task from
        the pool.
        """
        if kind not in TASK_KINDS:
            raise CrowdError(f"unknown task kind {kind!r}")
        if required_judgments is None:
            required_judgments = 3 if kind in JUDGE_KINDS else 1
        if kind in WRITE_KINDS and len(example_pool) < EXAMPLES_PER_WRITE_TASK:
            raise CrowdError(
                f"write tasks need an example pool of >= {EXAMPLES_PER_WRITE_TASK}, "
                f"got {len(example_pool)}"
            )

        if kind == WRITE_EVENT:
            slots = [None] * int(targets)
        else:
            slots = list(targets)

        tasks = []
        with self._lock:
            for index, slot in enumerate(slots):
                examples: list[str] = []
                if kind in WRITE_KINDS:
                    rng = random.Random(f"{seed}:{index}")
                    examples = rng.sample(list(example_pool), EXAMPLES_PER_WRITE_TASK)
                target = None
                relation = None
                if kind == WRITE_INFERENCE:
                    head, rel = slot
                    target = {"head": head}
                    relation = rel.value if isinstance(rel, Relation) else rel
                elif kind in JUDGE_KINDS:
                    head, rel, tail = slot
                    relation = rel.value if isinstance(rel, Relation) else rel
                    target = {"head": head, "relation": relation, "tail": tail}
                task = AnnotationTask(
                    id=self._next_task_id(),
                    kind=kind,
                    instructions=instructions,
                    examples=examples,
                    target=target,
                    relation=relation,
                    required_judgments=required_judgments,
                )
                self._tasks[task.id] = task
                self._by_task[task.id] = []
                tasks.append(task)
        return tasks

    # -- queries -------------------------------------------------------------

    def task(self, task_id: str) -> AnnotationTask:
        try:
            return self._tasks[task_id]
        except KeyError:
            raise TaskNotFound(f"no task {task_id!r}") from None

    def tasks(self, kind: str | None = None) -> list[AnnotationTask]:
        out = list(self._tasks.values())
        if kind is not None:
            out = [t for t in out if t.kind == kind]
        return out

    def judgments_for(self, task_id: str) -> list[Judgment]:
        self.task(task_id)
        return [self._judgments[j] for j in self._by_task[task_id]]

    def judgments(self) -> list[Judgment]:
        return list(self._judgments.values())

    def next_open_task(self, kind: str | None = None, worker_id: str | None = None) -> AnnotationTask | None:
        """The first open task of the kind that this worker has not judged."""
        with self._lock:
            for task in self._tasks.values():
                if task.complete:
                    continue
                if kind is not None and task.kind != kind:
                    continue
                if worker_id is not None and any(
                    self._judgments[j].worker_id == worker_id for j in self._by_task[task.id]
                ):
                    continue
                return task
        return None

    def pending_count(self, kind: str | None = None) -> int:
        return sum(1 for t in self.tasks(kind) if not t.complete)

    # -- submission ----------------------------------------------------------

    def submit_judgment(self, task_id: str, worker_id: str, value) -> str:
        """Returns accepted / task_complete / duplicate_worker / domain_error."""
        with self._lock:
            task = self._tasks.get(task_id)
            if task is None:
                raise TaskNotFound(f"no task {task_id!r}")
            if task.complete:
                raise TaskClosed(f"task {task_id} already has its judgments")
            if any(self._judgments[j].worker_id == worker_id for j in self._by_task[task_id]):
                return SUBMIT_DUPLICATE_WORKER
            coerced = validate_value(task.kind, value)
            if coerced is None:
                return SUBMIT_DOMAIN_ERROR
            judgment = Judgment(
                id=self._next_judgment_id(),
                task_id=task_id,
                worker_id=worker_id,
                value=coerced,
                submitted_at=self._clock(),
            )
            self._judgments[judgment.id] = judgment
            self._by_task[task_id].append(judgment.id)
            if len(self._by_task[task_id]) >= task.required_judgments:
                task.complete = True
                return SUBMIT_TASK_COMPLETE
            return SUBMIT_ACCEPTED

    # -- aggregation ---------------------------------------------------------

    def aggregate_majority(self, task_id: str) -> str:
        """valid/invalid by accept majority over a completed validity task."""
        task = self.task(task_id)
        if task.kind != JUDGE_VALIDITY:
            raise CrowdError(f"majority vote applies to validity tasks, not {task.kind}")
        if not task.complete:
            raise CrowdError(f"task {task_id} is not complete")
        values = [j.value for j in self.judgments_for(task_id)]
        if len(values) % 2 == 0:
            raise CrowdError("even judgment counts cannot produce a total majority")
        accepts = sum(1 for v in values if v == "accept")
        return "valid" if accepts > len(values) / 2 else "invalid"

    def aggregate_median(self, task_id: str) -> int:
        task = self.task(task_id)
        if task.kind not in (JUDGE_CONTINGENCY, JUDGE_TIME_INTERVAL):
            raise CrowdError(f"medians apply to ordinal tasks, not {task.kind}")
        if not task.complete:
            raise CrowdError(f"task {task_id} is not complete")
        values = sorted(j.value for j in self.judgments_for(task_id))
        if len(values) % 2 == 0:
            raise CrowdError("even judgment counts have no single middle value")
        return values[len(values) // 2]

    def agreement_report(self, relation: str) -> AgreementReport:
        """Kappa over completed validity tasks of one relation."""
        rows = []
        n_raters = None
        for task in self.tasks(JUDGE_VALIDITY):
            if task.relation != relation or not task.complete:
                continue
            values = [j.value for j in self.judgments_for(task.id)]
            if n_raters is None:
                n_raters = len(values)
            elif len(values) != n_raters:
                raise CrowdError("agreement needs a uniform rater count per item")
            rows.append([sum(1 for v in values if v == "accept"),
                         sum(1 for v in values if v == "reject")])
        if not rows:
            raise CrowdError(f"no completed validity tasks for {relation}")
        return AgreementReport(
            relation=relation,
            kappa=fleiss_kappa(rows),
            n_items=len(rows),
            n_raters=n_raters,
        )

    def validity_report(self) -> dict[str, dict]:
        """Per-relation instance/valid counts over completed validity tasks."""
        report: dict[str, dict] = {}
        for task in self.tasks(JUDGE_VALIDITY):
            if not task.complete or task.relation is None:
                continue
            entry = report.setdefault(task.relation, {"instances": 0, "valid": 0})
            entry["instances"] += 1
            if self.aggregate_majority(task.id) == "valid":
                entry["valid"] += 1
        for entry in report.values():
            entry["valid_pct"] = round(100.0 * entry["valid"] / entry["instances"], 2)
        return report

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        records = [{
            "format": STORE_FORMAT,
            "version": STORE_VERSION,
            "task_counter": self._task_counter,
            "judgment_counter": self._judgment_counter,
        }]
        for task in self._tasks.values():
            record = {
                "kind": "task",
                "id": task.id,
                "task_kind": task.kind,
                "instructions": task.instructions,
                "examples": task.examples,
                "target": task.target,
                "relation": task.relation,
                "required_judgments": task.required_judgments,
                "complete": task.complete,
            }
            records.append(record)
        for judgment in self._judgments.values():
            records.append({
                "kind": "judgment",
                "id": judgment.id,
                "task_id": judgment.task_id,
                "worker_id": judgment.worker_id,
                "value": judgment.value,
                "submitted_at": judgment.submitted_at,
            })
        lines = [json.dumps(r, ensure_ascii=False) for r in records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, clock: Callable[[], float] = time.time) -> "CrowdStore":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise CrowdError(f"{path}: empty store file")
        header = json.loads(lines[0])
        if header.get("format") != STORE_FORMAT or header.get("version") != STORE_VERSION:
            raise CrowdError(f"{path}:1: not a {STORE_FORMAT} v{STORE_VERSION} file")
        store = cls(clock=clock)
        store._task_counter = int(header.get("task_counter", 0))
        store._judgment_counter = int(header.get("judgment_counter", 0))
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CrowdError(f"{path}:{lineno}: malformed record: {exc}") from None
            if record.get("kind") == "task":
                task = AnnotationTask(
                    id=record["id"],
                    kind=record["task_kind"],
                    instructions=record.get("instructions", ""),
                    examples=list(record.get("examples", [])),
                    target=record.get("target"),
                    relation=record.get("relation"),
                    required_judgments=record["required_judgments"],
                    complete=record.get("complete", False),
                )
                store._tasks[task.id] = task
                store._by_task[task.id] = []
            elif record.get("kind") == "judgment":
                judgment = Judgment(
                    id=record["id"],
                    task_id=record["task_id"],
                    worker_id=record["worker_id"],
                    value=record["value"],
                    submitted_at=record["submitted_at"],
                )
                store._judgments[judgment.id] = judgment
                store._by_task.setdefault(judgment.task_id, []).append(judgment.id)
            else:
                raise CrowdError(f"{path}:{lineno}: unknown record kind")
        return store


def task_view(task: AnnotationTask) -> dict:
    """The UI-facing representation: payload plus an input control spec."""
    view = {
        "id": task.id,
        "kind": task.kind,
        "instructions": task.instructions,
        "examples": list(task.examples),
        "target": task.target,
        "relation": task.relation,
        "required_judgments": task.required_judgments,
        "control": CONTROL_SPECS[task.kind],
    }
    if task.target:
        sentences = []
        if "head" in task.target:
            sentences.append(task.target["head"])
        if "tail" in task.target:
            sentences.append(task.target["tail"])
        view["target_sentences"] = sentences
    return view
