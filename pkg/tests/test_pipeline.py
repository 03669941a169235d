import json
from pathlib import Path

import pytest

from phalm.cli import main as cli_main
from phalm.config import ConfigError, load_config
from phalm.graph import load_graph
from phalm.pipeline import (
    PipelineRuntime,
    StageError,
    run_full_pipeline,
    stage_evaluate,
    stage_expand_events,
    stage_expand_inferences,
    stage_export,
    stage_filter,
    stage_seed_collect,
    stage_seed_judge,
    stage_train_filter_export,
)

SMALL_CONFIG = {
    "events_to_generate": 30,
    "inferences_per_event_call": 2,
    "seed_events_to_collect": 20,
    "inference_writers_per_event": 3,
    "shot_count": 10,
    "threshold": 0.5,
    "sweep_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
    "deterministic_clock": True,
    "backend": {"kind": "mock_seeded", "seed": 7, "parallelism": 4},
    "scorer": {"kind": "lexical_baseline"},
    "annotators": {"workers": 5, "seed": 3, "accept_rate": 0.85},
    "export": {"test_size": 10, "pronoun_mode": "random_pronoun"},
    "evaluate": {"synthesize_with_seed": 99},
}


def write_config(tmp_path: Path, overrides: dict | None = None) -> Path:
    data = dict(SMALL_CONFIG)
    if overrides:
        data.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


@pytest.fixture()
def runtime(tmp_path):
    return PipelineRuntime(load_config(write_config(tmp_path)))


class TestSeedCollect:
    def test_bundled_fixture_events(self, runtime):
        record = stage_seed_collect(runtime)
        graph = load_graph(runtime.config.seed_graph)
        crowd_events = [e for e in graph.events() if e.source == "crowd"]
        # 20 scripted responses with 3 duplicates -> 17 events stored.
        assert len(crowd_events) == 17
        assert record.counts["kept"] >= 17
        assert record.counts["in"] == sum(
            v for k, v in record.counts.items() if k != "in")

    def test_rerun_is_noop(self, runtime):
        first = stage_seed_collect(runtime)
        second = stage_seed_collect(runtime)
        assert second.input_version == second.output_version == first.output_version

    def test_inferences_collected_for_all_relations(self, runtime):
        stage_seed_collect(runtime)
        graph = load_graph(runtime.config.seed_graph)
        for relation_name in ("xNeed", "xEffect", "xIntent", "xReact"):
            from phalm.graph import Relation
            assert len(graph.triplets(relation=Relation.parse(relation_name))) > 0


class TestSeedJudge:
    def test_statuses_and_report(self, runtime):
        stage_seed_collect(runtime)
        record = stage_seed_judge(runtime)
        graph = load_graph(runtime.config.seed_graph)
        judged = graph.triplets(status="judged_valid") + graph.triplets(status="judged_invalid")
        syntactic = graph.triplets(status="syntactic_ok")
        assert judged and not syntactic
        assert record.counts["in"] == len(judged)
        report = (runtime.config.reports / "validity_report.tsv").read_text(encoding="utf-8")
        assert report.startswith("relation\tinstances\tvalid\tvalid_pct\tkappa")
        assert "xNeed" in report

    def test_judged_triplets_carry_judgment_ids(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        graph = load_graph(runtime.config.seed_graph)
        judged = graph.triplets(status="judged_valid")
        assert all(len(t.judgments) == 3 for t in judged)

    def test_rerun_is_noop(self, runtime):
        stage_seed_collect(runtime)
        first = stage_seed_judge(runtime)
        second = stage_seed_judge(runtime)
        assert second.counts["in"] == 0
        assert second.output_version == first.output_version

    def test_unanimous_accepts_mark_kappa_degenerate(self, tmp_path):
        config_path = write_config(tmp_path, {
            "annotators": {"workers": 5, "seed": 3, "accept_rate": 1.0}})
        runtime = PipelineRuntime(load_config(config_path))
        stage_seed_collect(runtime)
        record = stage_seed_judge(runtime)
        assert record.counts["judged_invalid"] == 0
        report = (runtime.config.reports / "validity_report.tsv").read_text(encoding="utf-8")
        assert "degenerate" in report


class TestExpansion:
    def test_expand_events_dedups_and_gates(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        record = stage_expand_events(runtime)
        assert record.counts["in"] == 30
        expansion = load_graph(runtime.config.expansion_graph)
        events = [e for e in expansion.events() if e.source == "llm"]
        assert len(events) == record.counts["kept"] > 0
        seed = load_graph(runtime.config.seed_graph)
        seed_texts = {e.text for e in seed.events()}
        assert not seed_texts & {e.text for e in events}

    def test_expand_inferences_extracts_tails(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        stage_expand_events(runtime)
        record = stage_expand_inferences(runtime)
        expansion = load_graph(runtime.config.expansion_graph)
        n_events = len([e for e in expansion.events() if e.source == "llm"])
        assert record.counts["in"] == n_events * 4 * 2  # relations x calls
        assert len(expansion.triplets(status="syntactic_ok")) == record.counts["kept"] > 0

    def test_expansion_reruns_are_noops(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        first_events = stage_expand_events(runtime)
        again_events = stage_expand_events(runtime)
        assert again_events.output_version == first_events.output_version
        first_inf = stage_expand_inferences(runtime)
        again_inf = stage_expand_inferences(runtime)
        assert again_inf.output_version == first_inf.output_version
        assert again_inf.counts["kept"] == 0

    def test_missing_seed_events_is_stage_error(self, runtime):
        with pytest.raises(StageError):
            stage_expand_events(runtime)

    def test_fresh_shot_completions_counted_unparseable(self, tmp_path):
        # A backend that always restarts a full shot instead of continuing
        # at the tail slot: extraction must fail and be counted, not stored.
        config_path = write_config(tmp_path, {
            "backend": {"kind": "mock_fixture",
                        "default_completion": "Xが寝るためには、Xが布団に入る必要がある。"},
            "events_to_generate": 5,
            "inferences_per_event_call": 1,
            "relations": ["xNeed"],
        })
        runtime = PipelineRuntime(load_config(config_path))
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        stage_expand_events(runtime)
        expansion = load_graph(runtime.config.expansion_graph)
        n_events = len([e for e in expansion.events() if e.source == "llm"])
        assert n_events > 0
        record = stage_expand_inferences(runtime)
        assert record.counts["unparseable"] == n_events
        assert record.counts["kept"] == 0


class TestFilterStage:
    def _through_expansion(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        stage_expand_events(runtime)
        stage_expand_inferences(runtime)

    def test_training_export_contract(self, runtime):
        self._through_expansion(runtime)
        record = stage_train_filter_export(runtime)
        path = runtime.config.reports / "filter_train.jsonl"
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines()]
        assert len(records) == record.counts["in"]
        labels = {r["label"] for r in records}
        assert labels == {"valid", "invalid"}
        assert all({"head", "relation", "tail", "label", "origin_ids"} <= set(r) for r in records)

    def test_threshold_partitions_and_sweep_written(self, runtime):
        self._through_expansion(runtime)
        record = stage_filter(runtime)
        expansion = load_graph(runtime.config.expansion_graph)
        passed = expansion.triplets(status="filter_pass")
        failed = expansion.triplets(status="filter_fail")
        assert len(passed) == record.counts["kept"]
        assert len(failed) == record.counts["filter_fail"]
        assert not expansion.triplets(status="syntactic_ok")
        sweep = (runtime.config.reports / "sweep.tsv").read_text(encoding="utf-8").splitlines()
        assert sweep[0] == "threshold\tpassed_count\tvalid_ratio"
        counts = [int(line.split("\t")[1]) for line in sweep[1:]]
        assert counts == sorted(counts, reverse=True)

    def test_filter_without_threshold_or_grid_rejected(self, tmp_path):
        config_path = write_config(tmp_path, {"threshold": None, "sweep_grid": None})
        runtime = PipelineRuntime(load_config(config_path))
        with pytest.raises(StageError):
            stage_filter(runtime)


class TestExportAndEvaluate:
    def _through_filter(self, runtime):
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        stage_expand_events(runtime)
        stage_expand_inferences(runtime)
        stage_filter(runtime)

    def test_split_sizes_and_round_trip(self, runtime):
        self._through_filter(runtime)
        record = stage_export(runtime)
        assert record.counts["test_split"] == 10
        assert record.counts["in"] == record.counts["kept"] + 10
        from phalm.prompts import parse_decoder_line
        decoder_lines = [
            json.loads(line)["decoder_input"]
            for line in (runtime.config.exports / "train_decoder_only.jsonl")
            .read_text(encoding="utf-8").splitlines()
        ]
        assert len(decoder_lines) == record.counts["kept"]
        for line in decoder_lines:
            head, relation, tail = parse_decoder_line(line)
            assert head and tail

    def test_same_seed_same_split(self, runtime, tmp_path):
        self._through_filter(runtime)
        stage_export(runtime)
        first = (runtime.config.exports / "test_triplets.jsonl").read_bytes()
        stage_export(runtime)
        assert (runtime.config.exports / "test_triplets.jsonl").read_bytes() == first

    def test_graph_smaller_than_test_size_rejected(self, tmp_path):
        config_path = write_config(tmp_path, {"export": {"test_size": 10_000}})
        runtime = PipelineRuntime(load_config(config_path))
        stage_seed_collect(runtime)
        stage_seed_judge(runtime)
        with pytest.raises(StageError, match="test_size"):
            stage_export(runtime)

    def test_evaluate_produces_full_report(self, runtime):
        self._through_filter(runtime)
        stage_export(runtime)
        stage_evaluate(runtime)
        report = json.loads(
            (runtime.config.reports / "metrics_report.json").read_text(encoding="utf-8"))
        assert set(report) == {"acceptance_rate", "mean_point", "bleu",
                               "avg_output_length", "unique_word_count", "correlations"}
        assert 0.0 <= report["acceptance_rate"] <= 1.0
        assert 0.0 <= report["mean_point"] <= 3.0
        assert (runtime.config.reports / "mp_histogram.tsv").exists()

    def test_evaluate_missing_inputs_lists_them(self, tmp_path):
        config_path = write_config(tmp_path, {"evaluate": {}})
        runtime = PipelineRuntime(load_config(config_path))
        with pytest.raises(StageError, match="outputs_path"):
            stage_evaluate(runtime)

    def test_pluggable_similarity_joins_correlations(self, runtime):
        self._through_filter(runtime)
        stage_export(runtime)

        def char_overlap(candidate, reference):
            a, b = set(candidate), set(reference)
            return len(a & b) / len(a | b) if a | b else 1.0

        stage_evaluate(runtime, similarity=char_overlap)
        report = json.loads(
            (runtime.config.reports / "metrics_report.json").read_text(encoding="utf-8"))
        assert "similarity" in report["correlations"]
        assert set(report["correlations"]["similarity"]) == {"AR", "MP", "BLEU", "similarity"}


class TestFullRun:
    def test_full_pipeline_and_ordinal_reports(self, runtime):
        records = run_full_pipeline(runtime)
        assert [r.stage for r in records] == [
            "seed-collect", "seed-judge", "expand-events", "expand-inferences",
            "train-filter-export", "filter", "compare-xeffect", "export", "evaluate"]
        reports = runtime.config.reports
        assert (reports / "contingency_distribution.tsv").exists()
        assert (reports / "time_interval_distribution.tsv").exists()
        lines = (reports / "contingency_distribution.tsv").read_text(
            encoding="utf-8").splitlines()
        assert lines[0] == "level\tcrowd\tllm"
        assert len(lines) == 4  # 3 contingency levels

    def test_seed_filter_ablation_switch(self, tmp_path):
        on_dir = tmp_path / "on"
        off_dir = tmp_path / "off"
        results = {}
        for label, directory in (("on", on_dir), ("off", off_dir)):
            directory.mkdir()
            runtime = PipelineRuntime(load_config(write_config(directory)))
            stage_seed_collect(runtime)
            stage_seed_judge(runtime)
            stage_expand_events(runtime)
            results[label] = stage_expand_inferences(runtime, seed_filter=label)
        # The unfiltered pool includes judged-invalid shots, so the prompt
        # streams (and thus the generations) genuinely differ.
        assert results["on"].counts["in"] == results["off"].counts["in"]
        assert results["on"].counts["kept"] != results["off"].counts["kept"] or \
            results["on"].counts["deduped"] != results["off"].counts["deduped"]


class TestCli:
    def test_run_and_exit_codes(self, tmp_path, capsys):
        config_path = write_config(tmp_path)
        assert cli_main(["--config", str(config_path), "run"]) == 0
        out = capsys.readouterr().out
        assert "[seed-collect]" in out and "[evaluate]" in out

    def test_bad_config_is_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{"shot_count": 0}', encoding="utf-8")
        assert cli_main(["--config", str(path), "seed-collect"]) == 2

    def test_missing_config_is_exit_2(self, tmp_path):
        assert cli_main(["--config", str(tmp_path / "none.json"), "run"]) == 2

    def test_stage_order_violation_is_exit_2(self, tmp_path):
        config_path = write_config(tmp_path)
        assert cli_main(["--config", str(config_path), "expand-events"]) == 2


class TestConfig:
    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"no_such_key": 1}', encoding="utf-8")
        with pytest.raises(ConfigError, match="no_such_key"):
            load_config(path)

    def test_defaults_match_generation_scale(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{}", encoding="utf-8")
        config = load_config(path)
        assert config.events_to_generate == 10_000
        assert config.inferences_per_event_call == 10
        assert config.shot_count == 10
        assert config.export.test_size == 150

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        path = write_config(tmp_path)
        config = load_config(path)
        assert config.seed_graph == tmp_path / "seed_graph.jsonl"
