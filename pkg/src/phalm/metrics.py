"""Evaluation metrics: acceptance rate, mean point, BLEU, corpus statistics,
and Pearson correlations.

Likelihood judgments use the four levels never=0 / sometimes=1 / often=2 /
always=3. An inference is accepted when the raters choosing above "never"
outnumber those choosing "never". BLEU defaults to character n-grams (no
tokenizer dependency; the corpus is Japanese) with a configurable tokenizer
and an optional whitespace mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

LEVEL_NEVER = 0
LEVEL_SOMETIMES = 1
LEVEL_OFTEN = 2
LEVEL_ALWAYS = 3
LIKELIHOOD_LEVELS = (LEVEL_NEVER, LEVEL_SOMETIMES, LEVEL_OFTEN, LEVEL_ALWAYS)


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class LikelihoodJudgment:
    inference_id: str
    worker_id: str
    level: int

    def __post_init__(self) -> None:
        if self.level not in LIKELIHOOD_LEVELS:
            raise MetricsError(f"likelihood level out of range: {self.level}")


def group_judgments(judgments: Sequence[LikelihoodJudgment]) -> dict[str, list[int]]:
    grouped: dict[str, list[int]] = {}
    for j in judgments:
        grouped.setdefault(j.inference_id, []).append(j.level)
    return grouped


def is_accepted(levels: Sequence[int]) -> bool:
    above_never = sum(1 for level in levels if level > LEVEL_NEVER)
    return above_never > len(levels) - above_never


def acceptance_rate(by_inference: Mapping[str, Sequence[int]]) -> float:
    """Fraction of inferences where above-"never" raters outnumber "never"."""
    if not by_inference:
        raise MetricsError("acceptance rate is undefined on an empty set")
    for inference_id, levels in by_inference.items():
        if len(levels) % 2 == 0:
            raise MetricsError(f"inference {inference_id} has an even rater count")
    accepted = sum(1 for levels in by_inference.values() if is_accepted(levels))
    return accepted / len(by_inference)


def mean_point(by_inference: Mapping[str, Sequence[int]]) -> float:
    """Mean level over all judgments of all inferences."""
    levels = [level for levels in by_inference.values() for level in levels]
    if not levels:
        raise MetricsError("mean point needs at least one judgment")
    return sum(levels) / len(levels)


# -- BLEU ---------------------------------------------------------------------

def char_tokenize(text: str) -> list[str]:
    return list(text)


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def _ngram_counts(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i:i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def bleu(
    candidates: Sequence[str],
    references: Sequence[str],
    max_n: int = 4,
    tokenize: Callable[[str], list[str]] = char_tokenize,
    mode: str = "corpus",
    smoothing: bool = False,
) -> float:
    """Clipped n-gram precision BLEU with brevity penalty.

    Corpus mode pools counts over all pairs; sentence mode averages per-pair
    scores. Orders whose candidate n-gram total is zero everywhere are
    dropped (effective order, which matters for one-character outputs); a
    zero precision yields zero overall unless add-one smoothing (orders > 1)
    is enabled.
    """
    if len(candidates) != len(references):
        raise MetricsError(
            f"candidates and references are misaligned ({len(candidates)} vs {len(references)})"
        )
    if not candidates:
        raise MetricsError("BLEU needs at least one pair")
    if mode not in ("corpus", "sentence"):
        raise MetricsError(f"unknown BLEU mode {mode!r}")

    if mode == "sentence":
        scores = [
            bleu([c], [r], max_n=max_n, tokenize=tokenize, smoothing=smoothing)
            for c, r in zip(candidates, references)
        ]
        return sum(scores) / len(scores)

    matched = [0] * (max_n + 1)
    total = [0] * (max_n + 1)
    candidate_length = 0
    reference_length = 0
    for candidate, reference in zip(candidates, references):
        cand_tokens = tokenize(candidate)
        ref_tokens = tokenize(reference)
        candidate_length += len(cand_tokens)
        reference_length += len(ref_tokens)
        for n in range(1, max_n + 1):
            cand_counts = _ngram_counts(cand_tokens, n)
            ref_counts = _ngram_counts(ref_tokens, n)
            total[n] += max(len(cand_tokens) - n + 1, 0)
            matched[n] += sum(min(count, ref_counts.get(gram, 0))
                              for gram, count in cand_counts.items())

    orders = [n for n in range(1, max_n + 1) if total[n] > 0]
    if not orders or candidate_length == 0:
        return 0.0

    log_sum = 0.0
    for n in orders:
        if smoothing and n > 1:
            precision = (matched[n] + 1) / (total[n] + 1)
        else:
            if matched[n] == 0:
                return 0.0
            precision = matched[n] / total[n]
        log_sum += math.log(precision)
    geometric_mean = math.exp(log_sum / len(orders))

    if candidate_length >= reference_length:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1.0 - reference_length / candidate_length)
    return brevity_penalty * geometric_mean


# -- corpus statistics --------------------------------------------------------

def corpus_stats(
    outputs: Sequence[str],
    tokenize: Callable[[str], list[str]] = whitespace_tokenize,
) -> dict:
    """Mean token count and distinct-token count across outputs."""
    if not outputs:
        raise MetricsError("corpus stats need at least one output")
    token_lists = [tokenize(text) for text in outputs]
    unique = set()
    for tokens in token_lists:
        unique.update(tokens)
    return {
        "avg_output_length": sum(len(t) for t in token_lists) / len(token_lists),
        "unique_word_count": len(unique),
    }


class SimilarityScorer(Protocol):
    """Embedding-similarity slot: (candidate, reference) -> [0, 1].

    No default implementation ships here; plug in a contextual-embedding
    scorer to populate the similarity column of the correlation report.
    """

    def __call__(self, candidate: str, reference: str) -> float: ...


# -- correlations -------------------------------------------------------------

def pearson_r(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Pearson correlation; None when either series has zero variance."""
    if len(x) != len(y):
        raise MetricsError("series lengths differ")
    if len(x) < 2:
        raise MetricsError("correlation needs at least two points")
    n = len(x)
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    var_x = sum((v - mean_x) ** 2 for v in x)
    var_y = sum((v - mean_y) ** 2 for v in y)
    if var_x == 0.0 or var_y == 0.0:
        return None
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    return cov / math.sqrt(var_x * var_y)


def pearson_matrix(series: Mapping[str, Sequence[float]]) -> dict[str, dict[str, float | None]]:
    """Symmetric correlation matrix; degenerate (zero-variance) entries are None."""
    names = list(series)
    lengths = {len(series[name]) for name in names}
    if len(lengths) > 1:
        raise MetricsError(f"series lengths differ: {sorted(lengths)}")
    matrix: dict[str, dict[str, float | None]] = {a: {} for a in names}
    for i, a in enumerate(names):
        for b in names[i:]:
            if a == b:
                value = 1.0 if pearson_r(series[a], series[a]) is not None else None
            else:
                value = pearson_r(series[a], series[b])
            matrix[a][b] = value
            matrix[b][a] = value
    return matrix


# -- report -------------------------------------------------------------------

@dataclass
class MetricsReport:
    acceptance_rate: float
    mean_point: float
    bleu: float
    avg_output_length: float
    unique_word_count: int
    correlations: dict[str, dict[str, float | None]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.acceptance_rate <= 1.0:
            raise MetricsError(f"acceptance rate out of range: {self.acceptance_rate}")
        if not 0.0 <= self.mean_point <= 3.0:
            raise MetricsError(f"mean point out of range: {self.mean_point}")

    def record(self) -> dict:
        return {
            "acceptance_rate": self.acceptance_rate,
            "mean_point": self.mean_point,
            "bleu": self.bleu,
            "avg_output_length": self.avg_output_length,
            "unique_word_count": self.unique_word_count,
            "correlations": self.correlations,
        }


def mp_histogram(by_inference: Mapping[str, Sequence[int]], bins: int = 7) -> list[dict]:
    """Inference counts per mean-point bin over [0, 3]; plot-ready rows."""
    if bins < 1:
        raise MetricsError("histogram needs at least one bin")
    width = 3.0 / bins
    counts = [0] * bins
    for levels in by_inference.values():
        mp = sum(levels) / len(levels)
        index = min(int(mp / width), bins - 1)
        counts[index] += 1
    return [
        {"bin_low": round(i * width, 6), "bin_high": round((i + 1) * width, 6), "count": counts[i]}
        for i in range(bins)
    ]
