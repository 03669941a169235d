import random

from phalm.graph import Relation, normalize_text
from phalm.syntax import (
    CHECK_PRESENT_TENSE,
    CHECK_SINGLE_SENTENCE,
    CHECK_SUBJECT,
    RuleBasedAnalyzer,
    filter_batch,
)

analyzer = RuleBasedAnalyzer()


class TestCheckEvent:
    def test_valid_event(self):
        assert analyzer.check_event("Xが顔を洗う").ok

    def test_two_sentences_rejected(self):
        verdict = analyzer.check_event(normalize_text("Xが顔を洗った。Xが寝る"))
        assert not verdict.ok
        assert CHECK_SINGLE_SENTENCE in verdict.failed_checks

    def test_missing_placeholder_subject(self):
        verdict = analyzer.check_event("さっぱりした")
        assert not verdict.ok
        assert CHECK_SUBJECT in verdict.failed_checks

    def test_past_tense_rejected(self):
        verdict = analyzer.check_event("Xが顔を洗った")
        assert not verdict.ok
        assert CHECK_PRESENT_TENSE in verdict.failed_checks

    def test_trailing_final_mark_tolerated(self):
        assert analyzer.check_event("Xが顔を洗う!").ok

    def test_placeholder_needs_subject_marker(self):
        verdict = analyzer.check_event("友達がXを殴る")
        assert CHECK_SUBJECT in verdict.failed_checks

    def test_deterministic(self):
        for text in ("Xが顔を洗う", "さっぱりした", "Xが寝た。Xが起きる"):
            assert analyzer.check_event(text) == analyzer.check_event(text)


class TestCheckTail:
    def test_event_tail_with_subject(self):
        assert analyzer.check_tail("Xが水道で水を出す", Relation.XNEED).ok

    def test_mental_state_tail_without_subject(self):
        assert analyzer.check_tail("きれいになる", Relation.XREACT).ok

    def test_event_relation_requires_subject(self):
        verdict = analyzer.check_tail("きれいになる", Relation.XNEED)
        assert not verdict.ok
        assert CHECK_SUBJECT in verdict.failed_checks

    def test_mental_state_still_checks_sentence_count(self):
        verdict = analyzer.check_tail(normalize_text("きれいになる。うれしい"), Relation.XREACT)
        assert CHECK_SINGLE_SENTENCE in verdict.failed_checks


class TestFilterBatch:
    def test_all_valid_batch(self):
        items = [("Xが顔を洗う", None), ("Xが水道で水を出す", Relation.XNEED)]
        kept, rejected = filter_batch(items)
        assert kept == items
        assert rejected == []

    def test_repeated_invalid_item(self):
        items = [("さっぱりした", None)] * 4
        kept, rejected = filter_batch(items)
        assert kept == []
        assert len(rejected) == 4
        verdicts = {v for _, v in rejected}
        assert len(verdicts) == 1

    def test_partition_preserves_counts(self):
        items = [("Xが顔を洗う", None), ("さっぱりした", None), ("Xが寝る", None)]
        kept, rejected = filter_batch(items)
        assert len(kept) + len(rejected) == len(items)

    def test_partition_stable_under_permutation(self):
        rng = random.Random(5)
        texts = ["Xが顔を洗う", "さっぱりした", "Xが寝た", "Xが朝食を作る", "Xが顔を洗った。Xが寝る"]
        items = [(rng.choice(texts), rng.choice([None, Relation.XNEED, Relation.XREACT]))
                 for _ in range(60)]
        kept, rejected = filter_batch(items)
        shuffled = items[:]
        rng.shuffle(shuffled)
        kept2, rejected2 = filter_batch(shuffled)
        assert sorted(map(repr, kept)) == sorted(map(repr, kept2))
        assert len(rejected) == len(rejected2)

    def test_filtering_kept_items_keeps_everything(self):
        rng = random.Random(7)
        texts = ["Xが顔を洗う", "さっぱりした", "Xは本を読む", "Xが笑った"]
        items = [(rng.choice(texts), None) for _ in range(40)]
        kept, _ = filter_batch(items)
        kept_again, rejected_again = filter_batch(kept)
        assert kept_again == kept
        assert rejected_again == []
