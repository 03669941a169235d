import itertools
import random

import pytest

from phalm.crowd import (
    JUDGE_CONTINGENCY,
    JUDGE_TIME_INTERVAL,
    JUDGE_VALIDITY,
    SUBMIT_ACCEPTED,
    SUBMIT_DOMAIN_ERROR,
    SUBMIT_DUPLICATE_WORKER,
    SUBMIT_TASK_COMPLETE,
    WRITE_EVENT,
    WRITE_INFERENCE,
    CrowdError,
    CrowdStore,
    TaskClosed,
    TaskNotFound,
    fleiss_kappa,
    task_view,
)
from phalm.graph import Relation

EVENT_POOL = [f"Xが{i}番目の行動をする" for i in range(14)]


def reference_fleiss_kappa(matrix):
    """Direct transcription of the published formula, kept independent of
    the implementation under test."""
    N = len(matrix)
    k = len(matrix[0])
    n = sum(matrix[0])
    p_j = [sum(row[j] for row in matrix) / (N * n) for j in range(k)]
    P_i = [(sum(x * x for x in row) - n) / (n * (n - 1)) for row in matrix]
    P_bar = sum(P_i) / N
    P_e = sum(p * p for p in p_j)
    if P_e >= 1.0:
        return None
    return (P_bar - P_e) / (1 - P_e)


class TestCreateTasks:
    def test_judge_tasks_one_per_target(self):
        store = CrowdStore()
        targets = [(f"Xが{i}を読む", Relation.XNEED, f"Xが{i}を開く") for i in range(504)]
        tasks = store.create_tasks(JUDGE_VALIDITY, targets)
        assert len(tasks) == 504
        assert all(t.required_judgments == 3 for t in tasks)
        assert all(t.target is not None for t in tasks)

    def test_write_task_pool_too_small(self):
        store = CrowdStore()
        with pytest.raises(CrowdError, match=">= 10"):
            store.create_tasks(WRITE_EVENT, 3, example_pool=EVENT_POOL[:9])

    def test_same_seed_same_examples(self):
        a = CrowdStore().create_tasks(WRITE_EVENT, 5, example_pool=EVENT_POOL, seed=4)
        b = CrowdStore().create_tasks(WRITE_EVENT, 5, example_pool=EVENT_POOL, seed=4)
        assert [t.examples for t in a] == [t.examples for t in b]

    def test_write_tasks_carry_exactly_ten_examples(self):
        store = CrowdStore()
        tasks = store.create_tasks(WRITE_INFERENCE, [("Xが寝る", Relation.XNEED)],
                                   example_pool=EVENT_POOL, seed=1)
        assert len(tasks[0].examples) == 10

    def test_even_validity_judges_rejected(self):
        store = CrowdStore()
        with pytest.raises(CrowdError, match="odd"):
            store.create_tasks(JUDGE_VALIDITY, [("h", Relation.XNEED, "t")],
                               required_judgments=4)


class TestSubmitJudgment:
    def _validity_task(self, store):
        return store.create_tasks(JUDGE_VALIDITY, [("Xが寝る", Relation.XNEED, "Xが布団に入る")])[0]

    def test_third_judgment_completes(self):
        store = CrowdStore()
        task = self._validity_task(store)
        assert store.submit_judgment(task.id, "w1", "accept") == SUBMIT_ACCEPTED
        assert store.submit_judgment(task.id, "w2", "reject") == SUBMIT_ACCEPTED
        assert store.submit_judgment(task.id, "w3", "accept") == SUBMIT_TASK_COMPLETE
        assert task.complete

    def test_duplicate_worker(self):
        store = CrowdStore()
        task = self._validity_task(store)
        store.submit_judgment(task.id, "w1", "accept")
        assert store.submit_judgment(task.id, "w1", "reject") == SUBMIT_DUPLICATE_WORKER

    def test_ordinal_out_of_domain(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_TIME_INTERVAL, [("h", Relation.XEFFECT, "t")])[0]
        assert store.submit_judgment(task.id, "w1", 5) == SUBMIT_DOMAIN_ERROR
        assert store.submit_judgment(task.id, "w1", 4) == SUBMIT_ACCEPTED

    def test_boolean_is_not_an_ordinal(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_CONTINGENCY, [("h", Relation.XEFFECT, "t")])[0]
        assert store.submit_judgment(task.id, "w1", True) == SUBMIT_DOMAIN_ERROR

    def test_closed_task_rejected(self):
        store = CrowdStore()
        task = self._validity_task(store)
        for w in ("w1", "w2", "w3"):
            store.submit_judgment(task.id, w, "accept")
        with pytest.raises(TaskClosed):
            store.submit_judgment(task.id, "w4", "accept")

    def test_unknown_task(self):
        with pytest.raises(TaskNotFound):
            CrowdStore().submit_judgment("t999999", "w1", "accept")

    def test_empty_write_value_is_domain_error(self):
        store = CrowdStore()
        task = store.create_tasks(WRITE_EVENT, 1, example_pool=EVENT_POOL)[0]
        assert store.submit_judgment(task.id, "w1", "  ") == SUBMIT_DOMAIN_ERROR

    def test_pending_count_tracks_open_tasks(self):
        store = CrowdStore()
        tasks = store.create_tasks(
            JUDGE_VALIDITY, [(f"Xが{i}を読む", Relation.XNEED, "t") for i in range(4)])
        assert store.pending_count(JUDGE_VALIDITY) == 4
        for worker in ("w1", "w2", "w3"):
            store.submit_judgment(tasks[0].id, worker, "accept")
        assert store.pending_count(JUDGE_VALIDITY) == 3
        assert store.pending_count() == 3

    def test_next_open_task_skips_judged_and_complete(self):
        store = CrowdStore()
        t1 = self._validity_task(store)
        t2 = store.create_tasks(JUDGE_VALIDITY, [("Xが走る", Relation.XNEED, "Xが靴を履く")])[0]
        store.submit_judgment(t1.id, "w1", "accept")
        assert store.next_open_task(JUDGE_VALIDITY, "w1").id == t2.id
        assert store.next_open_task(JUDGE_VALIDITY, "w9").id == t1.id


class TestAggregateMajority:
    def _judged_task(self, store, values):
        task = store.create_tasks(JUDGE_VALIDITY, [("h", Relation.XNEED, "t")],
                                  required_judgments=len(values))[0]
        for i, value in enumerate(values):
            store.submit_judgment(task.id, f"w{i}", value)
        return task

    def test_two_accepts_win(self):
        store = CrowdStore()
        task = self._judged_task(store, ["accept", "accept", "reject"])
        assert store.aggregate_majority(task.id) == "valid"

    def test_all_rejects(self):
        store = CrowdStore()
        task = self._judged_task(store, ["reject", "reject", "reject"])
        assert store.aggregate_majority(task.id) == "invalid"

    def test_permutation_invariant(self):
        for values in itertools.permutations(["accept", "accept", "reject"]):
            store = CrowdStore()
            task = self._judged_task(store, list(values))
            assert store.aggregate_majority(task.id) == "valid"

    def test_incomplete_task_rejected(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_VALIDITY, [("h", Relation.XNEED, "t")])[0]
        store.submit_judgment(task.id, "w1", "accept")
        with pytest.raises(CrowdError, match="not complete"):
            store.aggregate_majority(task.id)

    def test_table1_fixture_reconstruction(self):
        # 402 of 504 instances accepted by majority -> 79.76%.
        store = CrowdStore()
        targets = [(f"Xが{i}を読む", Relation.XNEED, f"Xが{i}を開く") for i in range(504)]
        tasks = store.create_tasks(JUDGE_VALIDITY, targets)
        for i, task in enumerate(tasks):
            votes = ["accept", "accept", "reject"] if i < 402 else ["reject", "reject", "accept"]
            for w, vote in enumerate(votes):
                store.submit_judgment(task.id, f"w{w}", vote)
        outcomes = [store.aggregate_majority(t.id) for t in tasks]
        valid = sum(1 for o in outcomes if o == "valid")
        assert valid == 402
        assert round(100 * valid / len(outcomes), 2) == 79.76
        report = store.validity_report()["xNeed"]
        assert (report["instances"], report["valid"], report["valid_pct"]) == (504, 402, 79.76)


class TestAggregateMedian:
    def _ordinal_task(self, store, values, kind=JUDGE_CONTINGENCY):
        task = store.create_tasks(kind, [("h", Relation.XEFFECT, "t")],
                                  required_judgments=len(values))[0]
        for i, value in enumerate(values):
            store.submit_judgment(task.id, f"w{i}", value)
        return task

    def test_middle_value(self):
        store = CrowdStore()
        assert store.aggregate_median(self._ordinal_task(store, [0, 2, 2]).id) == 2

    def test_unanimous(self):
        store = CrowdStore()
        assert store.aggregate_median(self._ordinal_task(store, [1, 1, 1]).id) == 1

    def test_wrong_kind_rejected(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_VALIDITY, [("h", Relation.XNEED, "t")])[0]
        for w in ("w1", "w2", "w3"):
            store.submit_judgment(task.id, w, "accept")
        with pytest.raises(CrowdError):
            store.aggregate_median(task.id)

    def test_matches_sort_middle_oracle(self):
        rng = random.Random(53)
        for i in range(1000):
            values = [rng.randint(0, 4) for _ in range(3)]
            store = CrowdStore()
            task = self._ordinal_task(store, values, kind=JUDGE_TIME_INTERVAL)
            assert store.aggregate_median(task.id) == sorted(values)[1]


class TestFleissKappa:
    def test_unanimous_mixed_marginals_is_exactly_one(self):
        matrix = [[3, 0], [0, 3], [3, 0], [0, 3], [3, 0]]
        assert fleiss_kappa(matrix) == 1.0

    def test_hand_matrix_matches_reference(self):
        matrix = [[2, 1], [1, 2], [3, 0], [0, 3]]
        assert abs(fleiss_kappa(matrix) - reference_fleiss_kappa(matrix)) < 1e-9
        assert abs(fleiss_kappa(matrix) - 1 / 3) < 1e-12

    def test_degenerate_single_category(self):
        assert fleiss_kappa([[3, 0], [3, 0]]) is None

    def test_random_matrices_match_reference(self):
        rng = random.Random(59)
        for _ in range(200):
            n_items = rng.randint(5, 50)
            matrix = []
            for _ in range(n_items):
                a = rng.randint(0, 3)
                matrix.append([a, 3 - a])
            expected = reference_fleiss_kappa(matrix)
            actual = fleiss_kappa(matrix)
            if expected is None:
                assert actual is None
            else:
                assert abs(actual - expected) < 1e-9

    def test_invariant_under_item_reorder_and_category_relabel(self):
        rng = random.Random(61)
        matrix = [[rng.randint(0, 3), 0] for _ in range(12)]
        for row in matrix:
            row[1] = 3 - row[0]
        base = fleiss_kappa(matrix)
        shuffled = matrix[:]
        rng.shuffle(shuffled)
        relabeled = [[row[1], row[0]] for row in matrix]
        assert fleiss_kappa(shuffled) == pytest.approx(base, abs=1e-12)
        assert fleiss_kappa(relabeled) == pytest.approx(base, abs=1e-12)

    def test_uneven_rater_counts_rejected(self):
        with pytest.raises(CrowdError):
            fleiss_kappa([[2, 1], [2, 2]])

    def test_single_rater_rejected(self):
        with pytest.raises(CrowdError):
            fleiss_kappa([[1, 0], [0, 1]])


class TestAgreementReport:
    def test_unanimous_accepts_flag_degenerate(self):
        store = CrowdStore()
        tasks = store.create_tasks(
            JUDGE_VALIDITY, [(f"Xが{i}を読む", Relation.XNEED, "t") for i in range(5)])
        for task in tasks:
            for w in ("w1", "w2", "w3"):
                store.submit_judgment(task.id, w, "accept")
        report = store.agreement_report("xNeed")
        assert report.degenerate
        assert report.n_items == 5
        assert report.n_raters == 3

    def test_report_kappa_matches_direct_formula(self):
        rng = random.Random(67)
        store = CrowdStore()
        tasks = store.create_tasks(
            JUDGE_VALIDITY, [(f"Xが{i}を読む", Relation.XREACT, "t") for i in range(30)])
        matrix = []
        for task in tasks:
            accepts = rng.randint(0, 3)
            matrix.append([accepts, 3 - accepts])
            votes = ["accept"] * accepts + ["reject"] * (3 - accepts)
            for w, vote in enumerate(votes):
                store.submit_judgment(task.id, f"w{w}", vote)
        report = store.agreement_report("xReact")
        assert report.kappa == pytest.approx(reference_fleiss_kappa(matrix), abs=1e-9)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        store = CrowdStore(clock=lambda: 1000.0)
        tasks = store.create_tasks(WRITE_EVENT, 2, example_pool=EVENT_POOL, seed=9)
        store.submit_judgment(tasks[0].id, "w1", "Xが散歩する")
        path = tmp_path / "store.jsonl"
        store.save(path)
        loaded = CrowdStore.load(path)
        assert [t.id for t in loaded.tasks()] == [t.id for t in store.tasks()]
        assert loaded.judgments_for(tasks[0].id) == store.judgments_for(tasks[0].id)
        assert loaded.tasks()[0].examples == store.tasks()[0].examples

    def test_counter_continuity_after_load(self, tmp_path):
        store = CrowdStore()
        store.create_tasks(WRITE_EVENT, 2, example_pool=EVENT_POOL)
        path = tmp_path / "store.jsonl"
        store.save(path)
        loaded = CrowdStore.load(path)
        new = loaded.create_tasks(WRITE_EVENT, 1, example_pool=EVENT_POOL)
        assert new[0].id == "t000003"


class TestTaskView:
    def test_contingency_labels_ride_with_payload(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_CONTINGENCY, [("h", Relation.XEFFECT, "t")])[0]
        view = task_view(task)
        labels = [o["label"] for o in view["control"]["options"]]
        assert labels == ["must happen", "likely to happen", "does not happen"]
        assert view["target_sentences"] == ["h", "t"]

    def test_time_interval_has_five_levels(self):
        store = CrowdStore()
        task = store.create_tasks(JUDGE_TIME_INTERVAL, [("h", Relation.XEFFECT, "t")])[0]
        options = task_view(task)["control"]["options"]
        assert [o["value"] for o in options] == [0, 1, 2, 3, 4]

    def test_write_view_carries_ten_examples(self):
        store = CrowdStore()
        task = store.create_tasks(WRITE_EVENT, 1, example_pool=EVENT_POOL, seed=2)[0]
        view = task_view(task)
        assert len(view["examples"]) == 10
        assert view["control"] == {"type": "free_text"}
