import random

import pytest

from phalm.graph import KnowledgeGraph, Relation, Triplet
from phalm.negatives import (
    LABEL_INVALID,
    LABEL_VALID,
    TYPE1_SWAP,
    TYPE2_MISMATCH,
    TYPE3_INVERSE,
    FilterExample,
    NegativeSamplingError,
    build_training_set,
    load_training_set,
    type1_swap,
    type2_mismatch,
    type3_inverse,
    write_training_set,
)
from helpers import build_seed_graph


def triplet(head, relation, tail, tid=None):
    tid = tid or f"tr-{abs(hash((head, relation.value, tail))) % 10**10:010d}"
    return Triplet(id=tid, head=head, relation=relation, tail=tail,
                   source="crowd", status="judged_valid")


class TestType1Swap:
    def test_swaps_head_and_tail(self):
        t = triplet("Xが顔を洗う", Relation.XNEED, "Xが水道で水を出す")
        example = type1_swap(t)
        assert example.head == "Xが水道で水を出す"
        assert example.tail == "Xが顔を洗う"
        assert example.relation is Relation.XNEED
        assert example.label == LABEL_INVALID
        assert example.negative_type == TYPE1_SWAP
        assert example.origin_ids == (t.id,)

    def test_mental_state_relation_rejected(self):
        t = triplet("Xが顔を洗う", Relation.XINTENT, "スッキリしたい")
        with pytest.raises(NegativeSamplingError):
            type1_swap(t)

    def test_swap_is_an_involution_on_texts(self):
        t = triplet("Xが顔を洗う", Relation.XEFFECT, "Xがタオルを使う")
        once = type1_swap(t)
        twice = type1_swap(triplet(once.head, once.relation, once.tail, tid=t.id))
        assert (twice.head, twice.relation, twice.tail) == (t.head, t.relation, t.tail)


class TestType2Mismatch:
    def test_crosses_head_and_tail(self):
        t1 = triplet("h1", Relation.XNEED, "t1")
        t2 = triplet("h2", Relation.XNEED, "t2")
        rng = random.Random(0)
        example = type2_mismatch(t1, t2, rng)
        assert (example.head, example.tail) in {("h1", "t2"), ("h2", "t1")}
        assert example.negative_type == TYPE2_MISMATCH
        assert set(example.origin_ids) == {t1.id, t2.id}

    def test_equal_heads_rejected(self):
        t1 = triplet("h", Relation.XNEED, "t1")
        t2 = triplet("h", Relation.XNEED, "t2")
        with pytest.raises(NegativeSamplingError):
            type2_mismatch(t1, t2, random.Random(0))

    def test_mismatched_relations_rejected(self):
        t1 = triplet("h1", Relation.XNEED, "t1")
        t2 = triplet("h2", Relation.XEFFECT, "t2")
        with pytest.raises(NegativeSamplingError):
            type2_mismatch(t1, t2, random.Random(0))

    def test_samples_avoid_positive_keys(self):
        rng = random.Random(41)
        graph = build_seed_graph(rng, n_triplets=200)
        positives = {t.key for t in graph.triplets()}
        training = build_training_set(graph, mix={TYPE2_MISMATCH: 250}, seed=17)
        drawn = [ex for examples in training.values() for ex in examples
                 if ex.negative_type == TYPE2_MISMATCH]
        assert len(drawn) == 4 * 250
        assert all(ex.key not in positives for ex in drawn)


class TestType3Inverse:
    def test_xintent_xreact_pair(self):
        fwd = triplet("Xが顔を洗う", Relation.XINTENT, "スッキリしたい")
        inv = triplet("Xが顔を洗う", Relation.XREACT, "きれいになる")
        example = type3_inverse(fwd, inv)
        assert example.head == "Xが顔を洗う"
        assert example.relation is Relation.XINTENT
        assert example.tail == "きれいになる"
        assert example.negative_type == TYPE3_INVERSE

    def test_xneed_xeffect_pair(self):
        fwd = triplet("Xが顔を洗う", Relation.XNEED, "Xが水道で水を出す")
        inv = triplet("Xが顔を洗う", Relation.XEFFECT, "Xがタオルを使う")
        example = type3_inverse(fwd, inv)
        assert example.relation is Relation.XNEED
        assert example.tail == "Xがタオルを使う"

    def test_different_heads_rejected(self):
        fwd = triplet("h1", Relation.XINTENT, "t")
        inv = triplet("h2", Relation.XREACT, "t2")
        with pytest.raises(NegativeSamplingError):
            type3_inverse(fwd, inv)

    def test_non_inverse_relations_rejected(self):
        fwd = triplet("h", Relation.XINTENT, "t")
        other = triplet("h", Relation.XNEED, "t2")
        with pytest.raises(NegativeSamplingError):
            type3_inverse(fwd, other)


class TestBuildTrainingSet:
    def test_totals_are_positives_plus_requested_negatives(self):
        rng = random.Random(13)
        graph = build_seed_graph(rng, n_triplets=400)
        training = build_training_set(graph, seed=3)
        for relation in Relation:
            examples = training[relation.value]
            positives = [e for e in examples if e.label == LABEL_VALID]
            negatives = [e for e in examples if e.label == LABEL_INVALID]
            assert len(positives) == len(graph.triplets(relation=relation))
            assert len(negatives) == len(positives)

    def test_type1_only_for_mental_state_errors(self):
        rng = random.Random(13)
        graph = build_seed_graph(rng, n_triplets=80)
        with pytest.raises(NegativeSamplingError, match="feasible"):
            build_training_set(graph, mix={TYPE1_SWAP: 5}, seed=3)

    def test_same_seed_reproduces_exactly(self):
        rng = random.Random(29)
        graph = build_seed_graph(rng, n_triplets=240)
        first = build_training_set(graph, seed=11)
        second = build_training_set(graph, seed=11)
        assert first == second

    def test_different_seed_changes_draws(self):
        rng = random.Random(29)
        graph = build_seed_graph(rng, n_triplets=240)
        a = build_training_set(graph, seed=1)
        b = build_training_set(graph, seed=2)
        assert a != b

    def test_unjudged_graph_rejected(self):
        graph = KnowledgeGraph()
        graph.add_triplet("Xが寝る", Relation.XNEED, "Xが布団に入る", "crowd", status="raw")
        with pytest.raises(NegativeSamplingError, match="judged_valid"):
            build_training_set(graph)

    def test_infeasible_type1_count_errors(self):
        graph = KnowledgeGraph()
        with graph.batch():
            for i in range(3):
                out = graph.add_triplet(f"Xが{i}を読む", Relation.XNEED, f"Xが{i}を開く", "crowd")
                out.triplet.status = "judged_valid"
        with pytest.raises(NegativeSamplingError, match="requested 10"):
            build_training_set(graph, mix={TYPE1_SWAP: 10})

    def test_ratio_mix(self):
        rng = random.Random(5)
        graph = build_seed_graph(rng, n_triplets=160)
        training = build_training_set(graph, mix={TYPE2_MISMATCH: 0.5}, seed=7)
        for relation in Relation:
            examples = training[relation.value]
            n_pos = len([e for e in examples if e.label == LABEL_VALID])
            n_neg = len([e for e in examples if e.label == LABEL_INVALID])
            assert n_neg == round(0.5 * n_pos)

    def test_every_type1_example_is_event_kind(self):
        rng = random.Random(19)
        graph = build_seed_graph(rng, n_triplets=320)
        training = build_training_set(graph, seed=23)
        for examples in training.values():
            for ex in examples:
                if ex.negative_type == TYPE1_SWAP:
                    assert ex.relation.tail_kind == "event"

    def test_type3_examples_share_heads_across_inverse_pairs(self):
        rng = random.Random(19)
        graph = build_seed_graph(rng, n_triplets=320)
        by_id = {t.id: t for t in graph.triplets()}
        training = build_training_set(graph, seed=23)
        for examples in training.values():
            for ex in examples:
                if ex.negative_type == TYPE3_INVERSE:
                    fwd, inv = (by_id[i] for i in ex.origin_ids)
                    assert fwd.head == inv.head == ex.head
                    assert inv.relation is fwd.relation.inverse


class TestExport:
    def test_round_trip(self, tmp_path):
        rng = random.Random(7)
        graph = build_seed_graph(rng, n_triplets=60)
        training = build_training_set(graph, seed=5)
        flat = [ex for examples in training.values() for ex in examples]
        path = tmp_path / "train.jsonl"
        write_training_set(flat, path)
        assert load_training_set(path) == flat

    def test_records_carry_contract_fields(self, tmp_path):
        ex = FilterExample(head="h", relation=Relation.XNEED, tail="t",
                           label=LABEL_VALID, origin_ids=("tr-1",))
        path = tmp_path / "train.jsonl"
        write_training_set([ex], path)
        import json
        rec = json.loads(path.read_text(encoding="utf-8"))
        assert rec == {"head": "h", "relation": "xNeed", "tail": "t",
                       "label": "valid", "origin_ids": ["tr-1"]}
