"""Pseudo-negative construction for filter training.

Positives are the judged triplets of the seed graph, taken as valid wholesale.
Negatives are synthesized three ways: swapping head and tail (wrong temporal
order, event pairs only), crossing heads and tails of two triplets (context
mismatch), and substituting the tail of the inverse relation under the same
head. Everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .graph import KnowledgeGraph, Relation, Triplet

TYPE1_SWAP = "type1_swap"
TYPE2_MISMATCH = "type2_mismatch"
TYPE3_INVERSE = "type3_inverse"
NEGATIVE_TYPES = (TYPE1_SWAP, TYPE2_MISMATCH, TYPE3_INVERSE)

LABEL_VALID = "valid"
LABEL_INVALID = "invalid"


class NegativeSamplingError(Exception):
    pass


@dataclass(frozen=True)
class FilterExample:
    head: str
    relation: Relation
    tail: str
    label: str
    negative_type: str | None = None
    origin_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if (self.label == LABEL_VALID) != (self.negative_type is None):
            raise NegativeSamplingError("label=valid iff negative_type is absent")
        expected = 1 if self.negative_type in (None, TYPE1_SWAP) else 2
        if len(self.origin_ids) != expected:
            raise NegativeSamplingError(
                f"{self.negative_type or LABEL_VALID} examples need {expected} origin id(s)"
            )

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation.value, self.tail)

    def record(self) -> dict:
        rec: dict = {
            "head": self.head,
            "relation": self.relation.value,
            "tail": self.tail,
            "label": self.label,
        }
        if self.negative_type is not None:
            rec["negative_type"] = self.negative_type
        rec["origin_ids"] = list(self.origin_ids)
        return rec


def positive_example(triplet: Triplet) -> FilterExample:
    return FilterExample(
        head=triplet.head,
        relation=triplet.relation,
        tail=triplet.tail,
        label=LABEL_VALID,
        origin_ids=(triplet.id,),
    )


def type1_swap(triplet: Triplet) -> FilterExample:
    """Swap head and tail: breaks the time series. Event-pair relations only."""
    if triplet.relation.tail_kind != "event":
        raise NegativeSamplingError(
            f"{triplet.relation.value} infers a mental state; swapping needs an event pair"
        )
    return FilterExample(
        head=triplet.tail,
        relation=triplet.relation,
        tail=triplet.head,
        label=LABEL_INVALID,
        negative_type=TYPE1_SWAP,
        origin_ids=(triplet.id,),
    )


def type2_mismatch(t1: Triplet, t2: Triplet, rng: random.Random) -> FilterExample:
    """Cross the tails of two same-relation triplets with different heads."""
    if t1.relation is not t2.relation:
        raise NegativeSamplingError("mismatch sampling needs a shared relation")
    if t1.head == t2.head:
        raise NegativeSamplingError("mismatch sampling needs distinct heads")
    keep_first_head = rng.random() < 0.5
    head = t1.head if keep_first_head else t2.head
    tail = t2.tail if keep_first_head else t1.tail
    return FilterExample(
        head=head,
        relation=t1.relation,
        tail=tail,
        label=LABEL_INVALID,
        negative_type=TYPE2_MISMATCH,
        origin_ids=(t1.id, t2.id),
    )


def type3_inverse(t_fwd: Triplet, t_inv: Triplet) -> FilterExample:
    """Borrow the inverse relation's tail under the same head."""
    if t_fwd.head != t_inv.head:
        raise NegativeSamplingError("inverse sampling needs a shared head")
    if t_inv.relation is not t_fwd.relation.inverse:
        raise NegativeSamplingError(
            f"{t_inv.relation.value} is not the inverse of {t_fwd.relation.value}"
        )
    return FilterExample(
        head=t_fwd.head,
        relation=t_fwd.relation,
        tail=t_inv.tail,
        label=LABEL_INVALID,
        negative_type=TYPE3_INVERSE,
        origin_ids=(t_fwd.id, t_inv.id),
    )


def _resolve_mix(
    mix: Mapping[str, int | float] | None,
    relation: Relation,
    n_positives: int,
) -> dict[str, int]:
    """Turn the configured mix into absolute per-type counts.

    Ints are absolute counts, floats are fractions of the positive count.
    Default: as many negatives as positives, split evenly across the types
    applicable to the relation.
    """
    applicable = [TYPE2_MISMATCH, TYPE3_INVERSE]
    if relation.tail_kind == "event":
        applicable.insert(0, TYPE1_SWAP)

    if mix is None:
        counts = {t: n_positives // len(applicable) for t in applicable}
        for i in range(n_positives - sum(counts.values())):
            counts[applicable[i % len(applicable)]] += 1
        return counts

    counts = {}
    for negative_type, value in mix.items():
        if negative_type not in NEGATIVE_TYPES:
            raise NegativeSamplingError(f"unknown negative type {negative_type!r}")
        count = value if isinstance(value, int) else round(value * n_positives)
        if count < 0:
            raise NegativeSamplingError(f"negative count for {negative_type} must be >= 0")
        if count > 0:
            counts[negative_type] = count
    inapplicable = [t for t in counts if t not in applicable]
    if inapplicable:
        raise NegativeSamplingError(
            f"{', '.join(inapplicable)} not applicable to {relation.value}; "
            f"feasible types: {', '.join(applicable)}"
        )
    return counts


def _sample_pool(
    pool: list[FilterExample],
    count: int,
    taken_keys: set[tuple[str, str, str]],
    rng: random.Random,
    negative_type: str,
    relation: Relation,
    feasible_note: str,
) -> list[FilterExample]:
    candidates = [ex for ex in pool if ex.key not in taken_keys]
    # Candidates may repeat a key (two origins producing the same text); keep one each.
    unique: dict[tuple[str, str, str], FilterExample] = {}
    for ex in candidates:
        unique.setdefault(ex.key, ex)
    candidates = list(unique.values())
    if count > len(candidates):
        raise NegativeSamplingError(
            f"{relation.value}: requested {count} {negative_type} negatives but only "
            f"{len(candidates)} are constructible; {feasible_note}"
        )
    chosen = rng.sample(candidates, count)
    for ex in chosen:
        taken_keys.add(ex.key)
    return chosen


def build_training_set(
    graph: KnowledgeGraph,
    mix: Mapping[str, int | float] | None = None,
    seed: int = 0,
) -> dict[str, list[FilterExample]]:
    """Per-relation training examples: all positives plus the requested negatives.

    Negatives whose key collides with any positive are discarded and redrawn;
    the output order is shuffled deterministically from the seed.
    """
    all_triplets = graph.triplets()
    not_judged = [t.id for t in all_triplets if t.status != "judged_valid"]
    if not_judged:
        raise NegativeSamplingError(
            f"training graph must contain only judged_valid triplets "
            f"({len(not_judged)} others, e.g. {not_judged[0]})"
        )
    positive_keys = {t.key for t in all_triplets}
    by_relation: dict[Relation, list[Triplet]] = {r: [] for r in Relation}
    for t in all_triplets:
        by_relation[t.relation].append(t)

    output: dict[str, list[FilterExample]] = {}
    for relation in Relation:
        positives = sorted(by_relation[relation], key=lambda t: t.id)
        if not positives:
            continue
        rng = random.Random(f"{seed}:{relation.value}")
        counts = _resolve_mix(mix, relation, len(positives))
        examples = [positive_example(t) for t in positives]
        taken: set[tuple[str, str, str]] = set(positive_keys)

        if TYPE1_SWAP in counts:
            pool = [type1_swap(t) for t in positives]
            examples.extend(_sample_pool(
                pool, counts[TYPE1_SWAP], taken, rng, TYPE1_SWAP, relation,
                f"pool is one swap per positive ({len(positives)})",
            ))

        if TYPE3_INVERSE in counts:
            inverse_by_head: dict[str, list[Triplet]] = {}
            for t in sorted(by_relation[relation.inverse], key=lambda t: t.id):
                inverse_by_head.setdefault(t.head, []).append(t)
            pool = [
                type3_inverse(t_fwd, t_inv)
                for t_fwd in positives
                for t_inv in inverse_by_head.get(t_fwd.head, [])
            ]
            examples.extend(_sample_pool(
                pool, counts[TYPE3_INVERSE], taken, rng, TYPE3_INVERSE, relation,
                f"pool is head-sharing pairs with {relation.inverse.value}",
            ))

        if TYPE2_MISMATCH in counts:
            requested = counts[TYPE2_MISMATCH]
            drawn: list[FilterExample] = []
            attempts = 0
            max_attempts = max(200, requested * 50)
            while len(drawn) < requested:
                attempts += 1
                if attempts > max_attempts:
                    raise NegativeSamplingError(
                        f"{relation.value}: could not draw {requested} {TYPE2_MISMATCH} "
                        f"negatives from {len(positives)} positives (drew {len(drawn)})"
                    )
                if len(positives) < 2:
                    raise NegativeSamplingError(
                        f"{relation.value}: {TYPE2_MISMATCH} needs at least two positives"
                    )
                t1, t2 = rng.sample(positives, 2)
                if t1.head == t2.head:
                    continue
                candidate = type2_mismatch(t1, t2, rng)
                if candidate.key in taken:
                    continue
                taken.add(candidate.key)
                drawn.append(candidate)
            examples.extend(drawn)

        rng.shuffle(examples)
        output[relation.value] = examples
    return output


def write_training_set(examples: Sequence[FilterExample], path: str | Path) -> None:
    """Line-delimited export consumed by the filter trainer."""
    lines = [json.dumps(ex.record(), ensure_ascii=False) for ex in examples]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_training_set(path: str | Path) -> list[FilterExample]:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            examples.append(FilterExample(
                head=rec["head"],
                relation=Relation.parse(rec["relation"]),
                tail=rec["tail"],
                label=rec["label"],
                negative_type=rec.get("negative_type"),
                origin_ids=tuple(rec.get("origin_ids", ())),
            ))
        except (json.JSONDecodeError, KeyError) as exc:
            raise NegativeSamplingError(f"{path}:{lineno}: bad record: {exc}") from None
    return examples
