"""Per-day (or per-window) clinical glycemic metrics.

Conventions fixed for reproducible ground truth:

* TIR boundaries are inclusive (low <= v <= high); hypo/hyper events use
  strict inequalities (v < low, v > high).
* Standard deviation is the population form (ddof=0).
* Estimated A1c uses the ADAG linear fit (mean + 46.7) / 28.7 and GMI uses
  3.31 + 0.02392 * mean; both constants are module-level and documented.
* Missing data is encoded as the -1 sentinel, never an exception; a whole
  feature is either valid or -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime

from .data import (
    DataError,
    DateSelection,
    GlucoseSeries,
    WEARTIME_SUFFICIENT_PCT,
    compute_weartime,
    estimate_sampling_rate,
)

NO_DATA = -1.0

# Estimated A1c (ADAG): a1c = (mean + A1C_OFFSET) / A1C_SCALE
A1C_OFFSET = 46.7
A1C_SCALE = 28.7
# Glucose management indicator: gmi = GMI_INTERCEPT + GMI_SLOPE * mean
GMI_INTERCEPT = 3.31
GMI_SLOPE = 0.02392

DEFAULT_EVENT_MIN_DURATION = 15.0  # minutes


@dataclass(frozen=True)
class RangeThresholds:
    """Target range bounds in mg/dL (clinical default 70-180)."""

    low: float = 70.0
    high: float = 180.0

    def __post_init__(self) -> None:
        if not (0 < self.low < self.high):
            raise DataError(f"invalid thresholds: {self.low}..{self.high}")


#: Canonical feature vocabulary; the exact on-wire key set of a daily record.
FEATURE_KEYS = (
    "tir_pct",
    "tbr_pct",
    "tar_pct",
    "tir_minutes",
    "tbr_minutes",
    "tar_minutes",
    "mean_glucose",
    "std_glucose",
    "cv_pct",
    "est_a1c_pct",
    "gmi_pct",
    "min_glucose",
    "max_glucose",
    "hypo_events",
    "hyper_events",
    "weartime_pct",
    "weartime_sufficient",
)


@dataclass
class DailyFeatureRecord:
    """Aggregated clinical metrics for one date (or window).

    This is the unit exchanged across the privacy boundary: a flat mapping
    of snake_case feature names to numbers, with -1 for features that have
    no data. Booleans serialize as 1/0.
    """

    date_key: str
    tir_pct: float = NO_DATA
    tbr_pct: float = NO_DATA
    tar_pct: float = NO_DATA
    tir_minutes: float = NO_DATA
    tbr_minutes: float = NO_DATA
    tar_minutes: float = NO_DATA
    mean_glucose: float = NO_DATA
    std_glucose: float = NO_DATA
    cv_pct: float = NO_DATA
    est_a1c_pct: float = NO_DATA
    gmi_pct: float = NO_DATA
    min_glucose: float = NO_DATA
    max_glucose: float = NO_DATA
    hypo_events: float = NO_DATA
    hyper_events: float = NO_DATA
    weartime_pct: float = 0.0
    weartime_sufficient: bool = False

    @property
    def has_data(self) -> bool:
        return self.mean_glucose != NO_DATA

    def get(self, feature: str) -> float:
        if feature not in FEATURE_KEYS:
            raise KeyError(f"unknown feature: {feature!r}")
        value = getattr(self, feature)
        if isinstance(value, bool):
            return 1.0 if value else 0.0
        return float(value)

    def as_dict(self) -> dict[str, float]:
        """Flat payload form: snake_case keys, booleans as 1/0."""
        return {k: self.get(k) for k in FEATURE_KEYS}


@dataclass(frozen=True)
class RangeBreakdown:
    tir_pct: float
    tbr_pct: float
    tar_pct: float
    tir_minutes: float
    tbr_minutes: float
    tar_minutes: float


def time_in_ranges(
    series: GlucoseSeries,
    thresholds: RangeThresholds = RangeThresholds(),
    rate_minutes: float = 5.0,
) -> RangeBreakdown:
    """TIR/TBR/TAR as percent of readings plus duration (count x rate).

    Classification: TBR v < low; TIR low <= v <= high; TAR v > high. For a
    non-empty series the three percentages always sum to 100.
    """
    total = len(series)
    if total == 0:
        return RangeBreakdown(*(NO_DATA,) * 6)
    tbr = tir = tar = 0
    for r in series.readings:
        if r.value < thresholds.low:
            tbr += 1
        elif r.value > thresholds.high:
            tar += 1
        else:
            tir += 1
    return RangeBreakdown(
        tir_pct=100.0 * tir / total,
        tbr_pct=100.0 * tbr / total,
        tar_pct=100.0 * tar / total,
        tir_minutes=tir * rate_minutes,
        tbr_minutes=tbr * rate_minutes,
        tar_minutes=tar * rate_minutes,
    )


@dataclass(frozen=True)
class SummaryStats:
    mean_glucose: float
    std_glucose: float
    cv_pct: float
    est_a1c_pct: float
    gmi_pct: float


def summary_stats(series: GlucoseSeries) -> SummaryStats:
    """Mean, population SD, CV%, estimated A1c and GMI from mean glucose."""
    n = len(series)
    if n == 0:
        return SummaryStats(*(NO_DATA,) * 5)
    total = 0.0
    for r in series.readings:
        total += r.value
    mean = total / n
    sq = 0.0
    for r in series.readings:
        sq += (r.value - mean) ** 2
    std = math.sqrt(sq / n)
    cv = 100.0 * std / mean if mean > 0 else NO_DATA
    return SummaryStats(
        mean_glucose=mean,
        std_glucose=std,
        cv_pct=cv,
        est_a1c_pct=(mean + A1C_OFFSET) / A1C_SCALE,
        gmi_pct=GMI_INTERCEPT + GMI_SLOPE * mean,
    )


def min_max(series: GlucoseSeries) -> tuple[float, float]:
    """Absolute minimum and maximum glucose; (-1, -1) when empty."""
    if len(series) == 0:
        return (NO_DATA, NO_DATA)
    lo = hi = series.readings[0].value
    for r in series.readings[1:]:
        if r.value < lo:
            lo = r.value
        if r.value > hi:
            hi = r.value
    return (lo, hi)


@dataclass(frozen=True)
class EventSpan:
    start: datetime
    end: datetime
    extreme: float  # lowest value for hypo runs, highest for hyper runs


@dataclass(frozen=True)
class EventReport:
    hypo_events: int
    hyper_events: int
    hypo_spans: tuple[EventSpan, ...]
    hyper_spans: tuple[EventSpan, ...]


def detect_events(
    series: GlucoseSeries,
    thresholds: RangeThresholds = RangeThresholds(),
    rate_minutes: float = 5.0,
    min_duration: float = DEFAULT_EVENT_MIN_DURATION,
) -> EventReport:
    """Discrete hypo (< low) and hyper (> high) events.

    An event is a maximal run of consecutive beyond-threshold readings whose
    first-to-last span plus one sampling interval reaches ``min_duration``
    (so N consecutive samples represent N x rate minutes). A gap larger than
    2 x rate between consecutive beyond-threshold readings terminates the
    run, preventing phantom events across data holes.
    """
    if min_duration <= 0:
        raise DataError(f"min_duration must be positive: {min_duration}")
    hypo = _runs(series, lambda v: v < thresholds.low, rate_minutes,
                 min_duration, pick=min)
    hyper = _runs(series, lambda v: v > thresholds.high, rate_minutes,
                  min_duration, pick=max)
    return EventReport(
        hypo_events=len(hypo),
        hyper_events=len(hyper),
        hypo_spans=tuple(hypo),
        hyper_spans=tuple(hyper),
    )


def _runs(series, beyond, rate, min_duration, pick) -> list[EventSpan]:
    spans: list[EventSpan] = []
    run: list = []
    max_gap = 2 * rate

    def flush() -> None:
        if not run:
            return
        duration = (run[-1].timestamp - run[0].timestamp).total_seconds() / 60.0
        duration += rate
        if duration >= min_duration:
            spans.append(EventSpan(
                start=run[0].timestamp,
                end=run[-1].timestamp,
                extreme=pick(r.value for r in run),
            ))
        run.clear()

    for r in series.readings:
        if not beyond(r.value):
            flush()
            continue
        if run:
            gap = (r.timestamp - run[-1].timestamp).total_seconds() / 60.0
            if gap > max_gap:
                flush()
        run.append(r)
    flush()
    return spans


def extract_daily_features(
    series: GlucoseSeries,
    selection: DateSelection,
    thresholds: RangeThresholds = RangeThresholds(),
    rate_minutes: float | None = None,
) -> dict[str, DailyFeatureRecord]:
    """One DailyFeatureRecord per selection unit, composing all metrics.

    Units with zero readings get sentinel features with weartime 0. The
    sampling rate is taken from the series when not passed explicitly.
    """
    if rate_minutes is None:
        rate_minutes = estimate_sampling_rate(series)
    weartime = compute_weartime(series, selection, rate_minutes)
    out: dict[str, DailyFeatureRecord] = {}
    for unit in selection.units():
        chunk = series.slice(unit.start, unit.end)
        sub = GlucoseSeries(series.subject_id, chunk,
                            declared_interval=rate_minutes)
        wt = weartime[unit.key]
        if not chunk:
            out[unit.key] = DailyFeatureRecord(
                date_key=unit.key, weartime_pct=0.0, weartime_sufficient=False
            )
            continue
        ranges = time_in_ranges(sub, thresholds, rate_minutes)
        stats = summary_stats(sub)
        lo, hi = min_max(sub)
        events = detect_events(sub, thresholds, rate_minutes)
        out[unit.key] = DailyFeatureRecord(
            date_key=unit.key,
            tir_pct=ranges.tir_pct,
            tbr_pct=ranges.tbr_pct,
            tar_pct=ranges.tar_pct,
            tir_minutes=ranges.tir_minutes,
            tbr_minutes=ranges.tbr_minutes,
            tar_minutes=ranges.tar_minutes,
            mean_glucose=stats.mean_glucose,
            std_glucose=stats.std_glucose,
            cv_pct=stats.cv_pct,
            est_a1c_pct=stats.est_a1c_pct,
            gmi_pct=stats.gmi_pct,
            min_glucose=lo,
            max_glucose=hi,
            hypo_events=float(events.hypo_events),
            hyper_events=float(events.hyper_events),
            weartime_pct=wt.percent,
            weartime_sufficient=wt.sufficient,
        )
    return out


def sufficient(record: DailyFeatureRecord) -> bool:
    return record.weartime_pct >= WEARTIME_SUFFICIENT_PCT and record.has_data
