from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cgmquery.cli import main
from cgmquery.data import SynthesisSpec, save_cgm_csv, synthesize_series


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def data_dir(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    for i, sid in enumerate(["P1", "P2"]):
        series = synthesize_series(SynthesisSpec(
            days=14, seed=300 + i, rate_minutes=5, base_level=121.0,
            variability=26.0, missing_sample_rate=0.02, subject_id=sid,
        ))
        save_cgm_csv(series, d / f"{sid}.csv")
    return d


def make_ask_script(tmp_path) -> Path:
    q = "What was my TIR on 2024-01-02?"
    refined = "What are my TIR and CGM weartime on the following dates: 2024-01-02?"
    rules = [
        {"match": ["clarification checker"], "replies": [
            {"needs_clarification": False, "clarification_question": None}]},
        {"match": ["query refiner", q], "replies": [
            {"is_answerable": True, "refined_question": refined, "rationale": ""}]},
        {"match": ["task router", refined], "replies": [
            {"date_list": ["2024-01-02"], "question_list": [refined]}]},
        {"match": ["analytical executor", refined], "replies": [
            {"action": "tool_call", "name": "extract_features_json",
             "arguments": {"dates": ["2024-01-02"]}},
            {"echo_merged_results": True}]},
        {"match": ["response generator", q], "replies": [
            {"final_response": "On 2024-01-02 your TIR is shown above.",
             "cited_period": "2024-01-02"}]},
    ]
    path = tmp_path / "script.json"
    path.write_text(json.dumps(rules))
    return path


class TestIngest:
    def test_valid_file_summary(self, runner, tmp_path):
        series = synthesize_series(SynthesisSpec(
            days=3, seed=5, rate_minutes=5, base_level=115.0, subject_id="x",
        ))
        csv_path = tmp_path / "export.csv"
        save_cgm_csv(series, csv_path)
        out_dir = tmp_path / "store"
        result = runner.invoke(main, [
            "ingest", "--csv", str(csv_path), "--subject", "S1",
            "--data-dir", str(out_dir),
        ])
        assert result.exit_code == 0, result.output
        assert "sampling rate:   5 min" in result.output
        assert (out_dir / "S1.csv").exists()

    def test_zero_row_file_fails(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,glucose_mg_dl\nnot-a-date,xyz\n")
        result = runner.invoke(main, [
            "ingest", "--csv", str(bad), "--subject", "S1",
            "--data-dir", str(tmp_path / "store"),
        ])
        assert result.exit_code != 0

    def test_reingest_warns_and_overwrites(self, runner, tmp_path):
        series = synthesize_series(SynthesisSpec(
            days=1, seed=5, rate_minutes=5, base_level=100.0, subject_id="x",
        ))
        csv_path = tmp_path / "export.csv"
        save_cgm_csv(series, csv_path)
        out_dir = tmp_path / "store"
        args = ["ingest", "--csv", str(csv_path), "--subject", "S1",
                "--data-dir", str(out_dir)]
        assert runner.invoke(main, args).exit_code == 0
        second = runner.invoke(main, args)
        assert second.exit_code == 0
        assert "overwriting" in second.output


class TestAsk:
    def test_scripted_answer_matches_golden(self, runner, data_dir, tmp_path):
        script = make_ask_script(tmp_path)
        trace_out = tmp_path / "trace.jsonl"
        result = runner.invoke(main, [
            "ask", "What was my TIR on 2024-01-02?",
            "--data-dir", str(data_dir), "--subject", "P1",
            "--backend", "scripted", "--script", str(script),
            "--trace-out", str(trace_out),
        ])
        assert result.exit_code == 0, result.output
        assert "On 2024-01-02 your TIR is shown above." in result.output
        assert "[period analyzed: 2024-01-02]" in result.output
        assert trace_out.exists()

    def test_ablation_trace_has_no_refine_record(self, runner, data_dir, tmp_path):
        q = "What was my TIR on 2024-01-02?"
        prefixed = "User Question: " + q
        rules = [
            {"match": ["task router", prefixed], "replies": [
                {"date_list": [], "question_list": [prefixed]}]},
            {"match": ["analytical executor", prefixed], "replies": [
                {"action": "tool_call", "name": "extract_features_json",
                 "arguments": {"dates": ["2024-01-02"]}},
                {"echo_merged_results": True}]},
            {"match": ["response generator", q], "replies": [
                {"final_response": "Numbers above.", "cited_period": "2024-01-02"}]},
        ]
        script = tmp_path / "ablation.json"
        script.write_text(json.dumps(rules))
        trace_out = tmp_path / "trace.jsonl"
        result = runner.invoke(main, [
            "ask", q, "--data-dir", str(data_dir), "--subject", "P1",
            "--backend", "scripted", "--script", str(script),
            "--no-input-processor", "--trace-out", str(trace_out),
        ])
        assert result.exit_code == 0, result.output
        record = json.loads(trace_out.read_text().splitlines()[1])
        assert "refine" not in record["layer_latencies"]

    def test_interactive_prompts_once(self, runner, data_dir, tmp_path):
        q = "How was my glucose around dawn?"
        refined = (
            "What are my mean glucose and CGM weartime for the time range "
            "2024-01-03 04:00 to 2024-01-03 06:00?"
        )
        rules = [
            {"match": ["clarification checker", q], "replies": [
                {"needs_clarification": True,
                 "clarification_question": "Which time range is dawn for you?"}]},
            {"match": ["query refiner", q], "replies": [
                {"is_answerable": True, "refined_question": refined,
                 "rationale": ""}]},
            {"match": ["task router", refined], "replies": [
                {"date_list": [], "question_list": [refined]}]},
            {"match": ["analytical executor", refined], "replies": [
                {"action": "tool_call", "name": "extract_features_json",
                 "arguments": {"start_datetime": "2024-01-03 04:00",
                               "end_datetime": "2024-01-03 06:00"}},
                {"echo_merged_results": True}]},
            {"match": ["response generator", q], "replies": [
                {"final_response": "Dawn numbers above.",
                 "cited_period": "2024-01-03 04:00-06:00"}]},
        ]
        script = tmp_path / "interactive.json"
        script.write_text(json.dumps(rules))
        result = runner.invoke(main, [
            "ask", q, "--data-dir", str(data_dir), "--subject", "P1",
            "--backend", "scripted", "--script", str(script), "--interactive",
            "--trace-out", str(tmp_path / "t.jsonl"),
        ], input="4 AM to 6 AM on 2024-01-03\n")
        assert result.exit_code == 0, result.output
        assert "Which time range is dawn for you?" in result.output
        assert "Dawn numbers above." in result.output


class TestBenchCommands:
    def test_generate_run_eval_round_trip(self, runner, data_dir, tmp_path):
        bench = tmp_path / "bench.jsonl"
        result = runner.invoke(main, [
            "bench-generate", "--data-dir", str(data_dir), "-n", "20",
            "--mix", "template=0.5,direct=0.2,proxy=0.15,unanswerable=0.15",
            "--seed", "9", "--out", str(bench),
        ])
        assert result.exit_code == 0, result.output
        assert bench.exists()

        trace = tmp_path / "trace.jsonl"
        result = runner.invoke(main, [
            "bench-run", "--benchmark", str(bench), "--data-dir", str(data_dir),
            "--backend", "aligned", "--out", str(trace),
        ])
        assert result.exit_code == 0, result.output
        assert "0 failed" in result.output

        report_path = tmp_path / "report.json"
        result = runner.invoke(main, [
            "eval", "--benchmark", str(bench), "--trace", str(trace),
            "--layer", "all", "--readability", "--latency",
            "--out", str(report_path),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads(report_path.read_text())
        assert report["layer2"]["value_accuracy"] == 1.0
        assert report["layer1"]["accuracy"] == 1.0

    def test_generate_deterministic(self, runner, data_dir, tmp_path):
        out_a = tmp_path / "a.jsonl"
        out_b = tmp_path / "b.jsonl"
        for out in (out_a, out_b):
            result = runner.invoke(main, [
                "bench-generate", "--data-dir", str(data_dir), "-n", "12",
                "--seed", "4", "--out", str(out),
            ])
            assert result.exit_code == 0, result.output
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_jobs_flag_keeps_item_order(self, runner, data_dir, tmp_path):
        bench = tmp_path / "bench.jsonl"
        runner.invoke(main, [
            "bench-generate", "--data-dir", str(data_dir), "-n", "12",
            "--seed", "4", "--out", str(bench),
        ])
        trace = tmp_path / "trace.jsonl"
        result = runner.invoke(main, [
            "bench-run", "--benchmark", str(bench), "--data-dir", str(data_dir),
            "--jobs", "4", "--out", str(trace),
        ])
        assert result.exit_code == 0, result.output
        lines = trace.read_text().splitlines()[1:]
        ids = [json.loads(line)["item_id"] for line in lines]
        assert ids == sorted(ids)

    def test_eval_id_mismatch_fails(self, runner, data_dir, tmp_path):
        bench_a = tmp_path / "a.jsonl"
        bench_b = tmp_path / "b.jsonl"
        runner.invoke(main, ["bench-generate", "--data-dir", str(data_dir),
                             "-n", "8", "--seed", "1", "--out", str(bench_a)])
        runner.invoke(main, ["bench-generate", "--data-dir", str(data_dir),
                             "-n", "4", "--seed", "2", "--out", str(bench_b)])
        trace = tmp_path / "trace.jsonl"
        runner.invoke(main, ["bench-run", "--benchmark", str(bench_b),
                             "--data-dir", str(data_dir), "--out", str(trace)])
        result = runner.invoke(main, [
            "eval", "--benchmark", str(bench_a), "--trace", str(trace),
        ])
        assert result.exit_code != 0


class TestSynth:
    def test_creates_subject(self, runner, tmp_path):
        out_dir = tmp_path / "store"
        result = runner.invoke(main, [
            "synth", "--data-dir", str(out_dir), "--subject", "demo",
            "--days", "3", "--seed", "11",
        ])
        assert result.exit_code == 0, result.output
        assert (out_dir / "demo.csv").exists()
