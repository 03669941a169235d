"""Domain types and persistent storage for the event knowledge graph.

Events and triplets are keyed by normalized text, so deduplication is a
consequence of insertion. Mutations go through a single writer lock and
bump the graph version once per batch that actually changes content.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import unicodedata
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple

FORMAT_NAME = "phalm-kg"
FORMAT_VERSION = 1

SUBJECT_PLACEHOLDER = "X"

EVENT_SOURCES = ("crowd", "llm", "seed_file")
TRIPLET_SOURCES = ("crowd", "llm", "model")

# Pipeline order; equal rank means sibling outcomes of the same stage.
_STATUS_RANK = {
    "raw": 0,
    "syntactic_ok": 1,
    "judged_valid": 2,
    "judged_invalid": 2,
    "filter_pass": 3,
    "filter_fail": 3,
}

_WS_RUN = re.compile(r"\s+")
_TRAILING_PERIODS = "。."


class GraphError(Exception):
    """Invalid graph operation or malformed graph file."""


class Relation(Enum):
    """The four inference relations, with their fixed semantics."""

    XNEED = "xNeed"
    XEFFECT = "xEffect"
    XINTENT = "xIntent"
    XREACT = "xReact"

    @property
    def tail_kind(self) -> str:
        return "event" if self in (Relation.XNEED, Relation.XEFFECT) else "mental_state"

    @property
    def temporal_direction(self) -> str:
        return "before_head" if self in (Relation.XNEED, Relation.XINTENT) else "after_head"

    @property
    def inverse(self) -> "Relation":
        return _INVERSE[self]

    @classmethod
    def parse(cls, name: str) -> "Relation":
        try:
            return _BY_NAME[name]
        except KeyError:
            raise GraphError(f"unknown relation {name!r}") from None


_INVERSE = {
    Relation.XNEED: Relation.XEFFECT,
    Relation.XEFFECT: Relation.XNEED,
    Relation.XINTENT: Relation.XREACT,
    Relation.XREACT: Relation.XINTENT,
}
_BY_NAME = {r.value: r for r in Relation}

RELATIONS = tuple(Relation)


def normalize_text(raw: str) -> str:
    """Canonicalize a sentence: NFKC, whitespace collapse, trailing-period strip.

    Runs to a fixed point so the function is idempotent (stripping a period
    can expose trailing whitespace, and vice versa). Width variants are
    folded by NFKC, so dedup is width-insensitive.
    """
    text = raw
    while True:
        prev = text
        text = unicodedata.normalize("NFKC", text)
        text = _WS_RUN.sub(" ", text).strip()
        text = text.rstrip(_TRAILING_PERIODS).rstrip()
        if text == prev:
            return text


def _short_hash(*parts: str) -> str:
    digest = hashlib.sha1("\x1f".join(parts).encode("utf-8")).hexdigest()
    return digest[:12]


@dataclass
class Event:
    """An event sentence with a literal subject placeholder."""

    id: str
    text: str
    source: str

    def __post_init__(self) -> None:
        if not self.text:
            raise GraphError("event text must be non-empty")
        if SUBJECT_PLACEHOLDER not in self.text:
            raise GraphError(f"event text must contain the subject placeholder: {self.text!r}")
        if self.source not in EVENT_SOURCES:
            raise GraphError(f"unknown event source {self.source!r}")


@dataclass
class Triplet:
    """One (head, relation, tail) edge with its pipeline lifecycle state."""

    id: str
    head: str
    relation: Relation
    tail: str
    source: str
    status: str = "raw"
    filter_score: float | None = None
    judgments: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.source not in TRIPLET_SOURCES:
            raise GraphError(f"unknown triplet source {self.source!r}")
        if self.status not in _STATUS_RANK:
            raise GraphError(f"unknown status {self.status!r}")
        if self.filter_score is not None and not 0.0 <= self.filter_score <= 1.0:
            raise GraphError(f"filter_score out of range: {self.filter_score}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation.value, self.tail)

    def advance_status(self, new_status: str) -> bool:
        """Move status forward along the pipeline; returns whether it changed.

        Re-applying the current status is a no-op (so stages can be rerun);
        moving backwards or sideways within a stage raises.
        """
        if new_status not in _STATUS_RANK:
            raise GraphError(f"unknown status {new_status!r}")
        if new_status == self.status:
            return False
        if _STATUS_RANK[new_status] <= _STATUS_RANK[self.status]:
            raise GraphError(
                f"status may only move forward: {self.status} -> {new_status} ({self.id})"
            )
        self.status = new_status
        return True


class AddOutcome(NamedTuple):
    inserted: bool
    triplet: Triplet


class KnowledgeGraph:
    """Named, versioned collection of events and triplets.

    Single-writer, many-reader: mutations are serialized through one lock,
    `snapshot()` hands out an independent copy safe to read anywhere.
    """

    def __init__(self, name: str = "graph", version: int = 0) -> None:
        self.name = name
        self.version = version
        self._events: dict[str, Event] = {}  # normalized text -> Event
        self._triplets: dict[tuple[str, str, str], Triplet] = {}
        self._lock = threading.RLock()
        self._batch_depth = 0
        self._batch_fingerprint: str | None = None

    # -- accessors ---------------------------------------------------------

    def events(self) -> list[Event]:
        with self._lock:
            return list(self._events.values())

    def triplets(self, relation: Relation | None = None, status: str | None = None) -> list[Triplet]:
        with self._lock:
            out = list(self._triplets.values())
        if relation is not None:
            out = [t for t in out if t.relation is relation]
        if status is not None:
            out = [t for t in out if t.status == status]
        return out

    def get_event(self, text: str) -> Event | None:
        return self._events.get(normalize_text(text))

    def get_triplet(self, head: str, relation: Relation, tail: str) -> Triplet | None:
        return self._triplets.get((normalize_text(head), relation.value, normalize_text(tail)))

    def __len__(self) -> int:
        return len(self._triplets)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.version == other.version
            and self._events == other._events
            and self._triplets == other._triplets
        )

    # -- mutation ----------------------------------------------------------

    @contextmanager
    def batch(self):
        """Group mutations; the version bumps once iff content changed."""
        with self._lock:
            self._batch_depth += 1
            if self._batch_depth == 1:
                self._batch_fingerprint = self._fingerprint()
            try:
                yield self
            finally:
                self._batch_depth -= 1
                if self._batch_depth == 0:
                    if self._fingerprint() != self._batch_fingerprint:
                        self.version += 1
                    self._batch_fingerprint = None

    def add_event(self, text: str, source: str) -> tuple[bool, Event]:
        norm = normalize_text(text)
        if not norm:
            raise GraphError("event text empty after normalization")
        with self.batch():
            existing = self._events.get(norm)
            if existing is not None:
                return False, existing
            event = Event(id="ev-" + _short_hash(norm), text=norm, source=source)
            self._events[norm] = event
            return True, event

    def add_triplet(self, head: str, relation: Relation, tail: str, source: str,
                    status: str = "raw") -> AddOutcome:
        """Insert unless the normalized (head, relation, tail) key exists.

        The head is auto-registered as an event when absent.
        """
        h = normalize_text(head)
        t = normalize_text(tail)
        if not h:
            raise GraphError("triplet head empty after normalization")
        if not t:
            raise GraphError("triplet tail empty after normalization")
        key = (h, relation.value, t)
        with self.batch():
            existing = self._triplets.get(key)
            if existing is not None:
                return AddOutcome(False, existing)
            if h not in self._events:
                event_source = source if source in EVENT_SOURCES else "crowd"
                self.add_event(h, event_source)
            triplet = Triplet(
                id="tr-" + _short_hash(*key),
                head=h,
                relation=relation,
                tail=t,
                source=source,
                status=status,
            )
            self._triplets[key] = triplet
            return AddOutcome(True, triplet)

    def set_status(self, triplet: Triplet, status: str) -> bool:
        with self.batch():
            return triplet.advance_status(status)

    def set_filter_score(self, triplet: Triplet, score: float) -> None:
        if not 0.0 <= score <= 1.0:
            raise GraphError(f"filter_score out of range: {score}")
        with self.batch():
            triplet.filter_score = score

    def attach_judgments(self, triplet: Triplet, judgment_ids: Iterable[str]) -> None:
        with self.batch():
            for jid in judgment_ids:
                if jid not in triplet.judgments:
                    triplet.judgments.append(jid)

    def snapshot(self) -> "KnowledgeGraph":
        """Independent copy; safe to hand across threads."""
        with self._lock:
            copy = KnowledgeGraph(self.name, self.version)
            copy._events = {k: replace(v) for k, v in self._events.items()}
            copy._triplets = {
                k: replace(v, judgments=list(v.judgments)) for k, v in self._triplets.items()
            }
            return copy

    # -- persistence -------------------------------------------------------

    def _event_record(self, event: Event) -> dict:
        return {"kind": "event", "id": event.id, "text": event.text, "source": event.source}

    def _triplet_record(self, t: Triplet) -> dict:
        record = {
            "kind": "triplet",
            "id": t.id,
            "head": t.head,
            "relation": t.relation.value,
            "tail": t.tail,
            "source": t.source,
            "status": t.status,
        }
        if t.filter_score is not None:
            record["filter_score"] = t.filter_score
        if t.judgments:
            record["judgments"] = list(t.judgments)
        return record

    def _records(self) -> list[dict]:
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "name": self.name,
            "graph_version": self.version,
        }
        records = [header]
        records.extend(self._event_record(e) for e in sorted(self._events.values(), key=lambda e: e.id))
        records.extend(self._triplet_record(t) for t in sorted(self._triplets.values(), key=lambda t: t.id))
        return records

    def _fingerprint(self) -> str:
        payload = "\n".join(
            json.dumps(r, ensure_ascii=False, sort_keys=True) for r in self._records()[1:]
        )
        return hashlib.sha1(payload.encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        with self._lock:
            lines = [json.dumps(r, ensure_ascii=False) for r in self._records()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    graph.save(path)


def load_graph(path: str | Path) -> KnowledgeGraph:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise GraphError(f"{path}: empty graph file")

    def parse(lineno: int, line: str) -> dict:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}:{lineno}: malformed record: {exc}") from None
        if not isinstance(record, dict):
            raise GraphError(f"{path}:{lineno}: record is not an object")
        return record

    header = parse(1, lines[0])
    if header.get("format") != FORMAT_NAME:
        raise GraphError(f"{path}:1: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise GraphError(
            f"{path}:1: unsupported format version {header.get('version')!r}"
            f" (expected {FORMAT_VERSION})"
        )

    graph = KnowledgeGraph(header.get("name", "graph"), int(header.get("graph_version", 0)))
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        record = parse(lineno, line)
        kind = record.get("kind")
        try:
            if kind == "event":
                event = Event(id=record["id"], text=record["text"], source=record["source"])
                graph._events[event.text] = event
            elif kind == "triplet":
                triplet = Triplet(
                    id=record["id"],
                    head=record["head"],
                    relation=Relation.parse(record["relation"]),
                    tail=record["tail"],
                    source=record["source"],
                    status=record["status"],
                    filter_score=record.get("filter_score"),
                    judgments=list(record.get("judgments", [])),
                )
                if triplet.head not in graph._events:
                    raise GraphError(f"triplet head not among events: {triplet.head!r}")
                graph._triplets[triplet.key] = triplet
            else:
                raise GraphError(f"unknown record kind {kind!r}")
        except KeyError as exc:
            raise GraphError(f"{path}:{lineno}: missing field {exc}") from None
        except GraphError as exc:
            raise GraphError(f"{path}:{lineno}: {exc}") from None
    return graph
