from __future__ import annotations

import json
from datetime import date

import pytest

from cgmquery.benchgen import (
    BenchmarkItem,
    GenerationError,
    builtin_templates,
    category_counts,
    emit_benchmark,
    generate_ground_truth,
    instantiate_templates,
    load_benchmark,
    load_templates,
)
from cgmquery.data import SynthesisSpec, synthesize_series
from cgmquery.sandbox import ToolCall
from cgmquery.store import DataStore
from cgmquery.toolkit import build_cgm_registry


@pytest.fixture(scope="module")
def subjects():
    out = {}
    for i, sid in enumerate(["P1", "P2"]):
        series = synthesize_series(SynthesisSpec(
            days=21, seed=100 + i, rate_minutes=5, base_level=118.0,
            variability=30.0, missing_sample_rate=0.05,
            subject_id=sid,
        ))
        out[sid] = DataStore(series=series)
    return out


@pytest.fixture(scope="module")
def registry():
    return build_cgm_registry()


MIX = {"template": 0.5, "direct": 0.2, "proxy": 0.15, "unanswerable": 0.15}


class TestCategoryCounts:
    def test_published_proportions_at_418(self):
        # overall composition 2470/798/399/513 of 4180, scaled to 418
        mix = {
            "template": 2470 / 4180,
            "direct": 798 / 4180,
            "proxy": 399 / 4180,
            "unanswerable": 513 / 4180,
        }
        counts = category_counts(mix, 418)
        assert counts == {
            "template": 247, "direct": 80, "proxy": 40, "unanswerable": 51,
        }
        assert sum(counts.values()) == 418

    def test_sums_to_n(self):
        for n in (1, 7, 50, 333):
            counts = category_counts(MIX, n)
            assert sum(counts.values()) == n

    def test_bad_mix_rejected(self):
        with pytest.raises(GenerationError):
            category_counts({"template": 0.5}, 10)
        with pytest.raises(GenerationError):
            category_counts({"template": 0.9, "nonsense": 0.1}, 10)


class TestTemplates:
    def test_builtin_invariants(self):
        templates = builtin_templates()
        assert len(templates) >= 20
        for t in templates:
            empty = len(t.procedure) == 0
            assert (t.category == "unanswerable") == empty

    def test_template_file_round_trip(self, tmp_path):
        doc = [{
            "id": "custom-mean",
            "category": "template",
            "pattern": "What was my average glucose on {date_a}?",
            "parameters": [{"name": "date_a", "kind": "date"}],
            "procedure": [{"name": "find_avg_std_gv_BG",
                           "arguments": {"dates": ["{date_a}"]}}],
            "required_features": ["mean_glucose"],
        }]
        path = tmp_path / "templates.json"
        path.write_text(json.dumps(doc))
        loaded = load_templates(path)
        assert loaded[0].id == "custom-mean"
        assert loaded[0].procedure[0]["name"] == "find_avg_std_gv_BG"


class TestInstantiation:
    def test_deterministic_under_seed(self, subjects, registry):
        a = instantiate_templates(builtin_templates(), subjects,
                                  {"template": 1.0}, 10, seed=3, registry=registry)
        b = instantiate_templates(builtin_templates(), subjects,
                                  {"template": 1.0}, 10, seed=3, registry=registry)
        assert [x.to_dict() for x in a] == [y.to_dict() for y in b]
        c = instantiate_templates(builtin_templates(), subjects,
                                  {"template": 1.0}, 10, seed=4, registry=registry)
        assert [x.to_dict() for x in a] != [z.to_dict() for z in c]

    def test_category_partition_and_flags(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 40,
                                      seed=11, registry=registry)
        assert len(items) == 40
        for item in items:
            assert item.category in ("template", "direct", "proxy", "unanswerable")
            assert item.is_answerable == (item.category != "unanswerable")
            assert item.is_answerable == bool(item.procedure)
            if not item.is_answerable:
                assert item.ground_truth == {}

    def test_dates_within_subject_span(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 40,
                                      seed=5, registry=registry)
        for item in items:
            store = subjects[item.subject_id]
            days = store.series.dates()
            first, last = days[0], days[-1]
            for call in item.procedure:
                for key in ("dates", "group_a", "group_b"):
                    for d in call.arguments.get(key, []) or []:
                        assert first <= date.fromisoformat(d) <= last
                for key in ("start_date", "end_date"):
                    if key in call.arguments:
                        assert first <= date.fromisoformat(call.arguments[key]) <= last

    def test_reference_date_after_span(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 12,
                                      seed=2, registry=registry)
        for item in items:
            last = subjects[item.subject_id].series.dates()[-1]
            assert item.reference_date > last
            assert item.reference_datetime.date() == item.reference_date

    def test_unanswerable_mentions_out_of_scope_modalities(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects,
                                      {"unanswerable": 1.0}, 7, seed=9,
                                      registry=registry)
        text = " ".join(item.question.lower() for item in items)
        assert "insulin" in text
        assert "sleep" in text

    def test_ground_truth_idempotent(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 20,
                                      seed=7, registry=registry)
        for item in items:
            if not item.procedure:
                continue
            regenerated = generate_ground_truth(
                item.procedure, subjects[item.subject_id], registry
            )
            assert json.dumps(regenerated, sort_keys=True) == json.dumps(
                item.ground_truth, sort_keys=True
            )

    def test_short_span_subject_fits_disjoint_periods(self, registry):
        # a 10-day span must still accommodate the two-period comparison
        short = DataStore(series=synthesize_series(SynthesisSpec(
            days=10, seed=77, rate_minutes=5, base_level=115.0,
            variability=20.0, subject_id="S",
        )))
        compare = [t for t in builtin_templates() if t.id == "tpl-compare-periods"]
        for seed in range(12):
            items = instantiate_templates(
                compare, {"S": short}, {"template": 1.0}, 4, seed=seed,
                registry=registry,
            )
            for item in items:
                args = item.procedure[0].arguments
                assert not (set(args["group_a"]) & set(args["group_b"]))

    def test_procedures_dispatchable_closure(self, subjects, registry):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 30,
                                      seed=13, registry=registry)
        for item in items:
            for call in item.procedure:
                assert call.name in registry


class TestGroundTruth:
    def test_tir_on_constant_fixture(self, registry):
        series = synthesize_series(SynthesisSpec(
            days=1, seed=1, rate_minutes=5, base_level=100.0, subject_id="const",
        ))
        store = DataStore(series=series)
        payload = generate_ground_truth(
            [ToolCall("extract_features_json", {"dates": ["2024-01-01"]})],
            store, registry,
        )
        assert payload["2024-01-01"]["tir_pct"] == 100.0
        assert payload["2024-01-01"]["weartime_pct"] == 100.0

    def test_comparison_fields_present(self, subjects, registry):
        payload = generate_ground_truth(
            [ToolCall("compute_difference_ratio", {
                "feature": "mean_glucose",
                "group_a": ["2024-01-01", "2024-01-02"],
                "group_b": ["2024-01-03", "2024-01-04"],
            })],
            subjects["P1"], registry,
        )
        block = next(iter(payload.values()))
        for key in ("absolute_difference", "ratio", "higher_group"):
            assert key in block

    def test_dispatch_failure_is_loud(self, subjects, registry):
        with pytest.raises(Exception):
            generate_ground_truth(
                [ToolCall("no_such_tool", {})], subjects["P1"], registry
            )


class TestEmitLoad:
    def test_round_trip(self, subjects, registry, tmp_path):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 15,
                                      seed=21, registry=registry)
        path = tmp_path / "bench.jsonl"
        emit_benchmark(items, path)
        header, loaded = load_benchmark(path)
        assert header["count"] == 15
        assert [x.to_dict() for x in loaded] == [y.to_dict() for y in items]

    def test_line_count_is_items_plus_header(self, subjects, registry, tmp_path):
        items = instantiate_templates(builtin_templates(), subjects, MIX, 12,
                                      seed=1, registry=registry)
        path = tmp_path / "bench.jsonl"
        emit_benchmark(items, path)
        assert len(path.read_text().strip().splitlines()) == 13

    def test_empty_benchmark_is_header_only(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        emit_benchmark([], path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1
        header, items = load_benchmark(path)
        assert items == [] and header["count"] == 0

    def test_regeneration_byte_identical(self, subjects, registry, tmp_path):
        for run in ("a", "b"):
            items = instantiate_templates(builtin_templates(), subjects, MIX,
                                          25, seed=33, registry=registry)
            emit_benchmark(items, tmp_path / f"bench_{run}.jsonl")
        assert (tmp_path / "bench_a.jsonl").read_bytes() == (
            tmp_path / "bench_b.jsonl"
        ).read_bytes()
