"""Rule-based syntactic validity checks for events and inference tails.

The production method used a full Japanese parser for these checks; here the
analyzer is an interface with a dependency-free rule implementation so the
suite runs hermetically. A parser-backed analyzer can be plugged in via the
same protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .graph import Relation, SUBJECT_PLACEHOLDER

CHECK_SUBJECT = "subject_not_placeholder"
CHECK_SINGLE_SENTENCE = "not_single_sentence"
CHECK_PRESENT_TENSE = "not_present_tense"


@dataclass(frozen=True)
class SyntacticVerdict:
    ok: bool
    failed_checks: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        assert self.ok == (not self.failed_checks)


@dataclass(frozen=True)
class RuleConfig:
    """Japanese defaults; all lists are swappable configuration."""

    subject_markers: tuple[str, ...] = ("が", "は", "も")
    sentence_final: tuple[str, ...] = ("。", "!", "?")
    past_tense_suffixes: tuple[str, ...] = ("た", "だ")
    placeholder: str = SUBJECT_PLACEHOLDER


class SyntacticAnalyzer(Protocol):
    def check_event(self, text: str) -> SyntacticVerdict: ...

    def check_tail(self, text: str, relation: Relation) -> SyntacticVerdict: ...


@dataclass
class RuleBasedAnalyzer:
    config: RuleConfig = field(default_factory=RuleConfig)

    def _has_placeholder_subject(self, text: str) -> bool:
        return any(self.config.placeholder + m in text for m in self.config.subject_markers)

    def _is_single_sentence(self, text: str) -> bool:
        # One sentence-final mark is tolerated at the very end.
        body = text[:-1] if text and text[-1] in self.config.sentence_final else text
        return not any(mark in body for mark in self.config.sentence_final)

    def _is_present_tense(self, text: str) -> bool:
        return not text.endswith(self.config.past_tense_suffixes)

    def check_event(self, text: str) -> SyntacticVerdict:
        failed = []
        if not self._has_placeholder_subject(text):
            failed.append(CHECK_SUBJECT)
        if not self._is_single_sentence(text):
            failed.append(CHECK_SINGLE_SENTENCE)
        if not self._is_present_tense(text):
            failed.append(CHECK_PRESENT_TENSE)
        return SyntacticVerdict(ok=not failed, failed_checks=tuple(failed))

    def check_tail(self, text: str, relation: Relation) -> SyntacticVerdict:
        # Mental-state tails are often subjectless ("きれいになる"),
        # so the placeholder check only applies to event tails.
        if relation.tail_kind == "event":
            return self.check_event(text)
        failed = []
        if not self._is_single_sentence(text):
            failed.append(CHECK_SINGLE_SENTENCE)
        if not self._is_present_tense(text):
            failed.append(CHECK_PRESENT_TENSE)
        return SyntacticVerdict(ok=not failed, failed_checks=tuple(failed))


def filter_batch(
    items: Sequence[tuple[str, Relation | None]],
    analyzer: SyntacticAnalyzer | None = None,
) -> tuple[list[tuple[str, Relation | None]], list[tuple[tuple[str, Relation | None], SyntacticVerdict]]]:
    """Partition (text, relation?) items into kept and rejected, order-preserving.

    Items with relation None are checked as events, others as tails.
    """
    analyzer = analyzer or RuleBasedAnalyzer()
    kept: list[tuple[str, Relation | None]] = []
    rejected: list[tuple[tuple[str, Relation | None], SyntacticVerdict]] = []
    for item in items:
        text, relation = item
        verdict = analyzer.check_event(text) if relation is None else analyzer.check_tail(text, relation)
        if verdict.ok:
            kept.append(item)
        else:
            rejected.append((item, verdict))
    return kept, rejected
