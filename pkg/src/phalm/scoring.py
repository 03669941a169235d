"""Validity scoring and threshold gating for triplets.

Scorers share one contract: a batch of (head, relation, tail) items in, one
probability in [0, 1] per item out, positionally aligned. Three
implementations cover the deployment spectrum: a remote HTTP scorer (the
trained filter service), a lexical baseline for hermetic runs, and a
constant scorer for plumbing tests.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import httpx

from .graph import KnowledgeGraph, Relation, Triplet

ScoreItem = tuple[str, str, str]  # (head, relation name, tail)


class ScoringError(Exception):
    pass


class ScorerProtocolError(ScoringError):
    """The remote scorer broke the wire contract."""


class Scorer(Protocol):
    def score_batch(self, items: Sequence[ScoreItem]) -> list[float]: ...


@dataclass(frozen=True)
class ConstantScorer:
    value: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ScoringError(f"constant score out of range: {self.value}")

    def score_batch(self, items: Sequence[ScoreItem]) -> list[float]:
        return [self.value] * len(items)


def _char_bigrams(text: str) -> frozenset[str]:
    if len(text) < 2:
        return frozenset(text)
    return frozenset(text[i:i + 2] for i in range(len(text) - 1))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


class LexicalOverlapScorer:
    """Direction-aware nearest-neighbor overlap against a reference graph.

    A candidate scores high when some reference triplet of the same relation
    has a similar head *in head position* and a similar tail *in tail
    position* (character-bigram Jaccard). Swapped or mismatched candidates
    lose the orientation match, which is the whole signal: this is a
    hermetic stand-in for the trained filter, not a calibrated model.
    """

    def __init__(self, reference: KnowledgeGraph | Iterable[Triplet]):
        triplets = reference.triplets() if isinstance(reference, KnowledgeGraph) else list(reference)
        self._by_relation: dict[str, list[tuple[frozenset[str], frozenset[str]]]] = {}
        for t in triplets:
            self._by_relation.setdefault(t.relation.value, []).append(
                (_char_bigrams(t.head), _char_bigrams(t.tail))
            )

    def score_one(self, head: str, relation: str, tail: str) -> float:
        references = self._by_relation.get(relation)
        if not references:
            return 0.5  # nothing to compare against: uninformative
        h, t = _char_bigrams(head), _char_bigrams(tail)
        return max(_jaccard(h, rh) * _jaccard(t, rt) for rh, rt in references)

    def score_batch(self, items: Sequence[ScoreItem]) -> list[float]:
        return [self.score_one(*item) for item in items]


class RemoteHttpScorer:
    """POST /score {items: [{head, relation, tail}]} -> {scores: [... aligned]}."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        max_attempts: int = 3,
        backoff_seconds: float = 0.5,
        client: httpx.Client | None = None,
        sleep=time.sleep,
    ):
        self._endpoint = endpoint
        self._max_attempts = max_attempts
        self._backoff = backoff_seconds
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def score_batch(self, items: Sequence[ScoreItem]) -> list[float]:
        payload = {"items": [{"head": h, "relation": r, "tail": t} for h, r, t in items]}
        last_error: Exception | None = None
        for attempt in range(1, self._max_attempts + 1):
            try:
                response = self._client.post(self._endpoint, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt < self._max_attempts:
                    self._sleep(self._backoff * 2 ** (attempt - 1))
                continue
            if response.status_code >= 500:
                last_error = ScoringError(f"scorer HTTP {response.status_code}")
                if attempt < self._max_attempts:
                    self._sleep(self._backoff * 2 ** (attempt - 1))
                continue
            if response.status_code != 200:
                raise ScorerProtocolError(
                    f"scorer HTTP {response.status_code}: {response.text[:200]}"
                )
            try:
                scores = response.json()["scores"]
            except (ValueError, KeyError) as exc:
                raise ScorerProtocolError(f"malformed scorer response: {exc}") from None
            if not isinstance(scores, list) or len(scores) != len(items):
                raise ScorerProtocolError(
                    f"scorer returned {len(scores) if isinstance(scores, list) else '?'} "
                    f"scores for {len(items)} items"
                )
            for s in scores:
                if not isinstance(s, (int, float)) or not 0.0 <= s <= 1.0:
                    raise ScorerProtocolError(f"score outside [0,1]: {s!r}")
            return [float(s) for s in scores]
        raise ScoringError(f"scorer unreachable after {self._max_attempts} attempts: {last_error}")


def score_triplets(
    triplets: Sequence[Triplet],
    scorer: Scorer,
    batch_size: int = 64,
) -> list[float | Exception]:
    """Assign filter_score to each triplet; batch order is preserved.

    A failing batch surfaces as per-item errors for its members without
    aborting the rest.
    """
    if batch_size < 1:
        raise ScoringError("batch_size must be >= 1")
    results: list[float | Exception] = []
    for start in range(0, len(triplets), batch_size):
        chunk = triplets[start:start + batch_size]
        items = [(t.head, t.relation.value, t.tail) for t in chunk]
        try:
            scores = scorer.score_batch(items)
        except Exception as exc:
            results.extend([exc] * len(chunk))
            continue
        if len(scores) != len(chunk):
            raise ScorerProtocolError("scorer output not aligned with batch")
        for t, score in zip(chunk, scores):
            if not 0.0 <= score <= 1.0:
                raise ScorerProtocolError(f"score outside [0,1]: {score}")
            t.filter_score = score
            results.append(score)
    return results


def filter_by_threshold(
    triplets: Sequence[Triplet],
    threshold: float,
    update_status: bool = True,
) -> tuple[list[Triplet], list[Triplet]]:
    """Partition scored triplets at the threshold: pass = score >= threshold.

    The threshold is clamped into [0, 1], so anything above 1 keeps only
    perfect scores. Unscored triplets are an error.
    """
    unscored = [t.id for t in triplets if t.filter_score is None]
    if unscored:
        raise ScoringError(f"{len(unscored)} unscored triplets (e.g. {unscored[0]})")
    tau = min(max(threshold, 0.0), 1.0)
    passed = [t for t in triplets if t.filter_score >= tau]
    failed = [t for t in triplets if t.filter_score < tau]
    if update_status:
        for t in passed:
            t.advance_status("filter_pass")
        for t in failed:
            t.advance_status("filter_fail")
    return passed, failed


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    passed_count: int
    valid_ratio: float | None = None


def sweep_thresholds(
    triplets: Sequence[Triplet],
    grid: Sequence[float],
    labels: Sequence[bool] | None = None,
) -> list[SweepPoint]:
    """Pass counts (and valid ratios, when labels are given) per threshold.

    The grid must be sorted ascending. valid_ratio is None when nothing
    passes.
    """
    if list(grid) != sorted(grid):
        raise ScoringError("threshold grid must be sorted ascending")
    if labels is not None and len(labels) != len(triplets):
        raise ScoringError("labels must align with triplets")
    unscored = [t.id for t in triplets if t.filter_score is None]
    if unscored:
        raise ScoringError(f"{len(unscored)} unscored triplets (e.g. {unscored[0]})")

    points = []
    for tau in grid:
        passed_idx = [i for i, t in enumerate(triplets) if t.filter_score >= tau]
        ratio = None
        if labels is not None and passed_idx:
            ratio = sum(1 for i in passed_idx if labels[i]) / len(passed_idx)
        points.append(SweepPoint(threshold=tau, passed_count=len(passed_idx), valid_ratio=ratio))
    return points


def default_sweep_grid(step: float = 0.05) -> list[float]:
    n = round(1.0 / step)
    return [round(i * step, 10) for i in range(n + 1)]


def write_sweep(points: Sequence[SweepPoint], path) -> None:
    from pathlib import Path

    lines = ["threshold\tpassed_count\tvalid_ratio"]
    for p in points:
        ratio = "" if p.valid_ratio is None else f"{p.valid_ratio:.6f}"
        lines.append(f"{p.threshold:.4f}\t{p.passed_count}\t{ratio}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    variance = sum((v - mean) ** 2 for v in values) / len(values)  # population
    return mean, math.sqrt(variance)


def conditional_stats(
    triplets: Sequence[Triplet],
    labels: Sequence[bool],
) -> dict[str, dict]:
    """Per-relation score mean/std conditioned on the human label.

    difference = mean(valid) - mean(invalid); entries are absent when a
    label class is empty for the relation.
    """
    if len(labels) != len(triplets):
        raise ScoringError("labels must align with triplets")
    unscored = [t.id for t in triplets if t.filter_score is None]
    if unscored:
        raise ScoringError(f"{len(unscored)} unscored triplets (e.g. {unscored[0]})")

    grouped: dict[str, dict[bool, list[float]]] = {}
    for t, label in zip(triplets, labels):
        grouped.setdefault(t.relation.value, {True: [], False: []})[label].append(t.filter_score)

    stats: dict[str, dict] = {}
    for relation in (r.value for r in Relation):
        if relation not in grouped:
            continue
        valid_scores = grouped[relation][True]
        invalid_scores = grouped[relation][False]
        entry: dict = {"valid": None, "invalid": None, "difference": None}
        if valid_scores:
            mean, std = _mean_std(valid_scores)
            entry["valid"] = {"mean": mean, "std": std, "count": len(valid_scores)}
        if invalid_scores:
            mean, std = _mean_std(invalid_scores)
            entry["invalid"] = {"mean": mean, "std": std, "count": len(invalid_scores)}
        if valid_scores and invalid_scores:
            entry["difference"] = entry["valid"]["mean"] - entry["invalid"]["mean"]
        stats[relation] = entry
    return stats
