"""Operator entry point: ingestion, ad-hoc questions, benchmark generation,
agent runs, evaluation, and serving."""
from __future__ import annotations

import json
import sys
from datetime import datetime
from pathlib import Path

import click

from .agent.backends import HttpBackend, ScriptedBackend
from .agent.pipeline import Pipeline, PipelineConfig, PipelineError, UserQuery
from .benchgen import (
    DEFAULT_MIX,
    builtin_templates,
    emit_benchmark,
    instantiate_templates,
    load_benchmark,
    load_templates,
)
from .data import (
    DataError,
    SynthesisSpec,
    estimate_sampling_rate,
    load_cgm_csv,
    synthesize_series,
)
from .runner import (
    evaluate_records,
    format_report,
    load_trace,
    run_benchmark,
    write_trace,
)
from .store import SubjectDirectory
from .toolkit import build_cgm_registry


@click.group()
def main() -> None:
    """Privacy-preserving question answering over CGM data."""


def _fail(message: str) -> None:
    raise click.ClickException(message)


def _make_backend(backend: str, script: str | None):
    if backend == "scripted":
        if not script:
            _fail("--backend scripted requires --script FILE")
        return ScriptedBackend.from_file(script)
    if backend == "http":
        return HttpBackend()
    _fail(f"unknown backend {backend!r} (expected scripted or http)")


@main.command()
@click.option("--csv", "csv_path", required=True, type=click.Path(exists=True))
@click.option("--subject", "subject_id", required=True)
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--timestamp-col", default="timestamp", show_default=True)
@click.option("--glucose-col", default="glucose_mg_dl", show_default=True)
def ingest(csv_path, subject_id, data_dir, timestamp_col, glucose_col) -> None:
    """Validate a CGM CSV and store it in canonical form."""
    directory = SubjectDirectory(data_dir)
    try:
        series = load_cgm_csv(
            csv_path,
            subject_id=subject_id,
            timestamp_col=timestamp_col,
            glucose_col=glucose_col,
        )
    except DataError as exc:
        _fail(str(exc))
    if directory.series_path(subject_id).exists():
        click.echo(f"warning: overwriting existing subject {subject_id!r}", err=True)
    directory.save(series)
    rate = estimate_sampling_rate(series)
    days = series.dates()
    span_days = (days[-1] - days[0]).days + 1
    expected = span_days * 1440.0 / rate
    missing_pct = max(0.0, 100.0 * (1.0 - len(series) / expected))
    click.echo(f"subject:         {subject_id}")
    click.echo(f"rows:            {len(series)} (dropped {series.dropped_rows})")
    click.echo(f"span:            {days[0]} .. {days[-1]} ({span_days} days)")
    click.echo(f"sampling rate:   {rate:g} min")
    click.echo(f"missing samples: {missing_pct:.1f}%")


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--subject", "subject_id", default="demo")
@click.option("--days", default=14, show_default=True)
@click.option("--rate", default=5, show_default=True)
@click.option("--base", default=120.0, show_default=True)
@click.option("--variability", default=28.0, show_default=True)
@click.option("--missing-rate", default=0.03, show_default=True)
@click.option("--seed", default=7, show_default=True)
def synth(data_dir, subject_id, days, rate, base, variability, missing_rate, seed) -> None:
    """Create a deterministic synthetic subject (desk-scale demo data)."""
    series = synthesize_series(SynthesisSpec(
        days=days, seed=seed, rate_minutes=rate, base_level=base,
        variability=variability, missing_sample_rate=missing_rate,
        subject_id=subject_id,
    ))
    path = SubjectDirectory(data_dir).save(series)
    click.echo(f"wrote {len(series)} readings to {path}")


@main.command()
@click.argument("question")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--subject", "subject_id", required=True)
@click.option("--backend", default="scripted", show_default=True)
@click.option("--script", type=click.Path(exists=True))
@click.option("--interactive", is_flag=True,
              help="Ask one clarification question on ambiguity.")
@click.option("--no-input-processor", is_flag=True,
              help="Ablation: feed the raw question straight to the analysis layers.")
@click.option("--trace-out", type=click.Path(), default="ask_trace.jsonl",
              show_default=True)
def ask(question, data_dir, subject_id, backend, script, interactive,
        no_input_processor, trace_out) -> None:
    """Run one question through the pipeline and print the answer."""
    directory = SubjectDirectory(data_dir)
    try:
        store = directory.load(subject_id)
    except DataError as exc:
        _fail(str(exc))
    pipeline = Pipeline(PipelineConfig(
        backend=_make_backend(backend, script),
        registry=build_cgm_registry(),
        data=store,
        interactive=interactive,
        use_input_processor=not no_input_processor,
    ))
    last_day = store.series.dates()[-1]
    from datetime import time, timedelta

    ref_date = last_day + timedelta(days=1)
    query = UserQuery(
        text=question,
        reference_date=ref_date,
        reference_datetime=datetime.combine(ref_date, time(9, 0)),
    )

    def clarifier(agent_question: str) -> str:
        return click.prompt(agent_question)

    try:
        response, trace = pipeline.answer(
            query, clarifier=clarifier if interactive else None
        )
    except PipelineError as exc:
        _fail(f"pipeline failed in layer {exc.layer}: {exc}")
    write_trace([{
        "item_id": "ask",
        "subject_id": subject_id,
        "question": question,
        **trace.to_record(),
        "response_text": response.text,
        "cited_period": response.cited_period,
        "is_refusal": response.is_refusal,
    }], trace_out)
    click.echo(response.text)
    if response.cited_period:
        click.echo(f"[period analyzed: {response.cited_period}]")
    click.echo(f"[trace written to {trace_out}]")


def _parse_mix(raw: str | None) -> dict[str, float]:
    if not raw:
        return dict(DEFAULT_MIX)
    mix = {}
    for part in raw.split(","):
        name, _, value = part.partition("=")
        mix[name.strip()] = float(value)
    return mix


@main.command("bench-generate")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--subjects", "subject_list", default=None,
              help="Comma-separated subject ids (default: all in data dir).")
@click.option("--templates", "templates_path", type=click.Path(exists=True))
@click.option("-n", "count", default=100, show_default=True)
@click.option("--mix", default=None,
              help='e.g. "template=0.6,direct=0.2,proxy=0.1,unanswerable=0.1"')
@click.option("--seed", default=7, show_default=True)
@click.option("--out", required=True, type=click.Path())
def bench_generate(data_dir, subject_list, templates_path, count, mix, seed, out) -> None:
    """Generate a benchmark with execution-derived ground truth."""
    directory = SubjectDirectory(data_dir)
    ids = subject_list.split(",") if subject_list else directory.subjects()
    if not ids:
        _fail(f"no subjects found in {data_dir}")
    subjects = {sid: directory.load(sid) for sid in ids}
    templates = builtin_templates()
    if templates_path:
        templates.extend(load_templates(templates_path))
    try:
        items = instantiate_templates(
            templates, subjects, _parse_mix(mix), count, seed
        )
    except Exception as exc:
        _fail(str(exc))
    emit_benchmark(items, out)
    by_cat: dict[str, int] = {}
    for item in items:
        by_cat[item.category] = by_cat.get(item.category, 0) + 1
    click.echo(f"wrote {len(items)} items to {out} ({json.dumps(by_cat, sort_keys=True)})")


@main.command("bench-run")
@click.option("--benchmark", required=True, type=click.Path(exists=True))
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--backend", default="aligned", show_default=True,
              help="aligned | scripted | http")
@click.option("--script", type=click.Path(exists=True))
@click.option("--jobs", default=1, show_default=True)
@click.option("--no-input-processor", is_flag=True)
@click.option("--out", required=True, type=click.Path())
def bench_run(benchmark, data_dir, backend, script, jobs, no_input_processor, out) -> None:
    """Run every benchmark item through the pipeline; write the trace."""
    _, items = load_benchmark(benchmark)
    directory = SubjectDirectory(data_dir)
    subjects = {sid: directory.load(sid) for sid in
                sorted({item.subject_id for item in items})}
    if backend == "aligned":
        factory = None  # runner default: benchmark-aligned scripts
    else:
        shared = _make_backend(backend, script)
        factory = lambda item: shared  # noqa: E731
    records = run_benchmark(
        items, subjects, backend_factory=factory, jobs=jobs,
        use_input_processor=not no_input_processor,
    )
    write_trace(records, out)
    failed = [r["item_id"] for r in records if r.get("error")]
    click.echo(f"ran {len(records)} items; {len(failed)} failed; trace: {out}")
    if failed:
        click.echo(f"failed items: {failed[:10]}")


@main.command("eval")
@click.option("--benchmark", required=True, type=click.Path(exists=True))
@click.option("--trace", required=True, type=click.Path(exists=True))
@click.option("--layer", default="all", show_default=True,
              type=click.Choice(["1", "2", "all"]))
@click.option("--readability", "with_readability", is_flag=True)
@click.option("--latency", "with_latency", is_flag=True)
@click.option("--out", type=click.Path())
def eval_cmd(benchmark, trace, layer, with_readability, with_latency, out) -> None:
    """Score a run trace against its benchmark."""
    _, items = load_benchmark(benchmark)
    records = load_trace(trace)
    layers = ("1", "2") if layer == "all" else (layer,)
    try:
        report = evaluate_records(
            items, records, layers=layers,
            include_readability=with_readability,
            include_latency=with_latency,
        )
    except ValueError as exc:
        _fail(str(exc))
    click.echo(format_report(report))
    if out:
        Path(out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        click.echo(f"report written to {out}")


@main.command()
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--backend", default="scripted", show_default=True)
@click.option("--script", type=click.Path(exists=True))
@click.option("--static-dir", type=click.Path(),
              help="Directory with the built chat UI (served at /).")
@click.option("--no-interactive", is_flag=True,
              help="Disable the clarification round.")
def serve(data_dir, host, port, backend, script, static_dir, no_interactive) -> None:
    """Serve the local chat API (loopback by default)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    directory = SubjectDirectory(data_dir)
    ids = directory.subjects()
    if not ids:
        _fail(f"no subjects found in {data_dir}")
    stores = {sid: directory.load(sid) for sid in ids}
    app = create_app(ServiceConfig(
        stores=stores,
        backend_factory=lambda: _make_backend(backend, script),
        interactive=not no_interactive,
        static_dir=static_dir,
    ))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
