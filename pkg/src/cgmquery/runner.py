"""Benchmark runs and their evaluation.

``run_benchmark`` pushes every item through the full pipeline and records a
per-item trace (payload, refinement, tool calls, prompts, latencies);
``evaluate_records`` scores a trace against its benchmark layer by layer.
Traces are written to disk so evaluation is a separate pass and judges can
be swapped without rerunning the agent.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .agent.pipeline import Pipeline, PipelineConfig, UserQuery
from .agent.scripts import aligned_backend_for_item
from .benchgen import BenchmarkItem
from .evaluator import (
    CallMatchReport,
    latency_stats,
    layer1_metrics,
    layer2_metrics,
    match_calls,
    readability,
)
from .sandbox import ToolRegistry
from .store import DataStore
from .toolkit import build_cgm_registry

TRACE_KIND = "cgm-qa-trace"


def run_benchmark(
    items: Sequence[BenchmarkItem],
    subjects: dict[str, DataStore],
    backend_factory: Callable[[BenchmarkItem], Any] | None = None,
    registry: ToolRegistry | None = None,
    jobs: int = 1,
    use_input_processor: bool = True,
    prompts_dir: str | Path | None = None,
) -> list[dict[str, Any]]:
    """Run every item through the pipeline; per-item failures are recorded
    in the trace and the run continues. Output order is item order."""
    if registry is None:
        registry = build_cgm_registry()
    if backend_factory is None:
        backend_factory = aligned_backend_for_item

    def run_one(item: BenchmarkItem) -> dict[str, Any]:
        record: dict[str, Any] = {
            "item_id": item.item_id,
            "subject_id": item.subject_id,
            "category": item.category,
            "question": item.question,
        }
        try:
            pipeline = Pipeline(PipelineConfig(
                backend=backend_factory(item),
                registry=registry,
                data=subjects[item.subject_id],
                use_input_processor=use_input_processor,
                prompts_dir=prompts_dir,
            ))
            query = UserQuery(
                text=item.question,
                reference_date=item.reference_date,
                reference_datetime=item.reference_datetime,
            )
            response, trace = pipeline.answer(query)
            record.update(trace.to_record())
            record["response_text"] = response.text
            record["cited_period"] = response.cited_period
            record["is_refusal"] = response.is_refusal
        except Exception as exc:  # per-item failure must not kill the run
            record.setdefault("payload", None)
            record.setdefault("predicted_answerable", None)
            record.setdefault("backend_calls", 0)
            record.setdefault("latency_seconds", 0.0)
            record.setdefault("prompts", [])
            record.setdefault("tool_calls", [])
            record["error"] = f"{type(exc).__name__}: {exc}"
        return record

    if jobs <= 1:
        return [run_one(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_one, items))


def write_trace(records: Sequence[dict[str, Any]], path: str | Path) -> None:
    path = Path(path)
    header = {"kind": TRACE_KIND, "schema_version": 1, "count": len(records)}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_trace(path: str | Path) -> list[dict[str, Any]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [line for line in lines if line.strip()]
    if not lines:
        raise ValueError(f"empty trace file: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != TRACE_KIND:
        raise ValueError(f"not a trace file: {path}")
    return [json.loads(line) for line in lines[1:]]


def evaluate_records(
    items: Sequence[BenchmarkItem],
    records: Sequence[dict[str, Any]],
    layers: Iterable[str] = ("1", "2"),
    include_readability: bool = False,
    include_latency: bool = False,
) -> dict[str, Any]:
    """Score a run against its benchmark. Items and records align by id."""
    by_id = {r["item_id"]: r for r in records}
    missing = [item.item_id for item in items if item.item_id not in by_id]
    if missing:
        raise ValueError(f"trace is missing items: {missing[:5]}...")
    report: dict[str, Any] = {"n_items": len(items)}
    layers = set(layers)

    if "1" in layers:
        labels = [item.is_answerable for item in items]
        predictions = [
            bool(by_id[item.item_id].get("predicted_answerable"))
            for item in items
        ]
        report["layer1"] = layer1_metrics(labels, predictions).as_dict()

    if "2" in layers:
        match_reports: list[CallMatchReport] = []
        bypass_violations: list[str] = []
        for item in items:
            record = by_id[item.item_id]
            if not item.is_answerable:
                if record.get("tool_calls"):
                    bypass_violations.append(item.item_id)
                continue
            match_reports.append(match_calls(
                item.ground_truth,
                record.get("payload"),
                item.required_features or None,
            ))
        if match_reports:
            report["layer2"] = layer2_metrics(match_reports).as_dict()
        report["unanswerable_bypass_violations"] = bypass_violations

    if include_readability:
        texts = [
            by_id[item.item_id].get("response_text", "") for item in items
        ]
        texts = [t for t in texts if t]
        if texts:
            report["readability"] = readability(texts).as_dict()

    if include_latency:
        report["latency"] = latency_stats(
            [by_id[item.item_id] for item in items]
        ).as_dict()

    return report


def format_report(report: dict[str, Any]) -> str:
    """Human-readable metric table for standard output."""
    lines = [f"items: {report.get('n_items')}"]
    if "layer1" in report:
        m = report["layer1"]
        lines.append(
            "layer1 (feasibility): "
            f"acc={m['accuracy']:.4f} p={m['precision']:.4f} "
            f"r={m['recall']:.4f} f1={m['f1']:.4f} (n={m['n']})"
        )
    if "layer2" in report:
        m = report["layer2"]
        lines.append(
            "layer2 (tool calls):  "
            f"p={m['precision']:.4f} r={m['recall']:.4f} f1={m['f1']:.4f} "
            f"value_acc={m['value_accuracy']:.4f} (n={m['n']})"
        )
    if "unanswerable_bypass_violations" in report:
        v = report["unanswerable_bypass_violations"]
        lines.append(f"unanswerable items that ran tools: {len(v)}")
    if "readability" in report:
        m = report["readability"]
        lines.append(
            "readability: "
            f"avg_words={m['avg_words']:.1f} "
            f"fre={m['flesch_reading_ease']:.1f} "
            f"fk_grade={m['flesch_kincaid_grade']:.1f} (n={m['n']})"
        )
    if "latency" in report:
        m = report["latency"]
        lines.append(
            "latency: "
            f"mean={m['mean_seconds']:.3f}s median={m['median_seconds']:.3f}s "
            f"p95={m['p95_seconds']:.3f}s "
            f"backend_calls={m['mean_backend_calls']:.1f} (n={m['n']})"
        )
    return "\n".join(lines)
