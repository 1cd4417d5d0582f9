"""CGM time-series ingestion, filtering, weartime, and synthetic data.

Timestamps are naive local wall-clock times throughout: the supported CGM
exports carry local clock times and no offset, so no timezone arithmetic is
performed. Duplicate timestamps on ingest keep the first occurrence.
"""
from __future__ import annotations

import csv
import math
import random
import statistics
from bisect import bisect_left
from dataclasses import dataclass, replace
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Iterable, Sequence

GLUCOSE_MIN_MG_DL = 0.0
GLUCOSE_MAX_MG_DL = 1000.0

#: Minimum weartime (percent of expected readings) for a day/window to count
#: as having sufficient data.
WEARTIME_SUFFICIENT_PCT = 70.0

DEFAULT_TIMESTAMP_COLUMN = "timestamp"
DEFAULT_GLUCOSE_COLUMN = "glucose_mg_dl"


class DataError(Exception):
    """Raised for unrecoverable ingestion/validation problems."""


@dataclass(frozen=True)
class GlucoseReading:
    """A single sensor reading: naive local timestamp + glucose in mg/dL."""

    timestamp: datetime
    value: float

    def __post_init__(self) -> None:
        if not (GLUCOSE_MIN_MG_DL < self.value < GLUCOSE_MAX_MG_DL):
            raise DataError(f"glucose value out of range: {self.value!r}")
        if not math.isfinite(self.value):
            raise DataError(f"glucose value not finite: {self.value!r}")


@dataclass(frozen=True)
class TimeWindow:
    """Absolute half-open datetime window [start, end)."""

    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise DataError(f"empty time window: {self.start} >= {self.end}")

    def contains(self, ts: datetime) -> bool:
        return self.start <= ts < self.end

    @property
    def minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


@dataclass(frozen=True)
class ClockWindow:
    """Intraday half-open clock window [start, end), e.g. 06:00-12:00."""

    start: time
    end: time

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise DataError(f"empty clock window: {self.start} >= {self.end}")

    @classmethod
    def parse(cls, text: str) -> "ClockWindow":
        """Parse 'HH:MM-HH:MM' (also accepts ' to ' as separator)."""
        raw = text.replace(" to ", "-").strip()
        parts = raw.split("-")
        if len(parts) != 2:
            raise DataError(f"cannot parse clock window: {text!r}")
        return cls(_parse_clock(parts[0]), _parse_clock(parts[1]))

    def __str__(self) -> str:
        return f"{self.start:%H:%M}-{self.end:%H:%M}"


def _parse_clock(text: str) -> time:
    text = text.strip()
    for fmt in ("%H:%M", "%H:%M:%S"):
        try:
            return datetime.strptime(text, fmt).time()
        except ValueError:
            continue
    raise DataError(f"cannot parse clock time: {text!r}")


@dataclass(frozen=True)
class GlucoseSeries:
    """Ordered glucose readings for one subject. Immutable and shareable.

    The only holder of raw per-reading data; everything that crosses the
    privacy boundary is an aggregate derived from it.
    """

    subject_id: str
    readings: tuple[GlucoseReading, ...]
    declared_interval: float | None = None  # minutes; overrides estimation
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        for prev, cur in zip(self.readings, self.readings[1:]):
            if cur.timestamp <= prev.timestamp:
                raise DataError(
                    f"readings not strictly increasing at {cur.timestamp}"
                )

    def __len__(self) -> int:
        return len(self.readings)

    @property
    def timestamps(self) -> tuple[datetime, ...]:
        return tuple(r.timestamp for r in self.readings)

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(r.value for r in self.readings)

    def dates(self) -> list[date]:
        """Distinct calendar dates with at least one reading, ascending."""
        seen: dict[date, None] = {}
        for r in self.readings:
            seen.setdefault(r.timestamp.date(), None)
        return list(seen)

    def slice(self, start: datetime, end: datetime) -> tuple[GlucoseReading, ...]:
        """Readings with start <= timestamp < end (binary search)."""
        stamps = [r.timestamp for r in self.readings]
        lo = bisect_left(stamps, start)
        hi = bisect_left(stamps, end)
        return self.readings[lo:hi]

    def value_at(self, ts: datetime) -> float | None:
        stamps = [r.timestamp for r in self.readings]
        i = bisect_left(stamps, ts)
        if i < len(stamps) and stamps[i] == ts:
            return self.readings[i].value
        return None


@dataclass(frozen=True)
class DateSelection:
    """Which dates (and optionally which part of each day) to analyze.

    Exactly one of `dates`, (`start`, `end`), `span`, or `groups` is set.
    An optional intraday `window` further restricts every selected date.
    Date lists are canonicalized to sorted unique order so that identical
    selections always produce identical result keys.
    """

    dates: tuple[date, ...] | None = None
    start: date | None = None
    end: date | None = None  # inclusive
    span: TimeWindow | None = None
    groups: tuple[tuple[str, tuple[date, ...]], ...] | None = None
    window: ClockWindow | None = None

    def __post_init__(self) -> None:
        forms = [
            self.dates is not None,
            self.start is not None or self.end is not None,
            self.span is not None,
            self.groups is not None,
        ]
        if sum(forms) != 1:
            raise DataError("selection must use exactly one form")
        if self.start is not None or self.end is not None:
            if self.start is None or self.end is None:
                raise DataError("date range needs both start and end")
            if self.start > self.end:
                raise DataError(f"empty date range: {self.start} > {self.end}")
        if self.dates is not None and not self.dates:
            raise DataError("empty explicit date list")
        if self.groups is not None:
            seen: set[date] = set()
            for label, days in self.groups:
                if not days:
                    raise DataError(f"empty date group: {label!r}")
                overlap = seen.intersection(days)
                if overlap:
                    raise DataError(f"date groups overlap on {sorted(overlap)}")
                seen.update(days)
        if self.span is not None and self.window is not None:
            raise DataError("span selection already fixes the clock bounds")

    # -- constructors -------------------------------------------------

    @classmethod
    def single(cls, day: date, window: ClockWindow | None = None) -> "DateSelection":
        return cls(dates=(day,), window=window)

    @classmethod
    def from_dates(
        cls, days: Iterable[date], window: ClockWindow | None = None
    ) -> "DateSelection":
        uniq = tuple(sorted(set(days)))
        return cls(dates=uniq, window=window)

    @classmethod
    def from_range(
        cls, start: date, end: date, window: ClockWindow | None = None
    ) -> "DateSelection":
        return cls(start=start, end=end, window=window)

    @classmethod
    def from_span(cls, start: datetime, end: datetime) -> "DateSelection":
        return cls(span=TimeWindow(start, end))

    @classmethod
    def from_groups(
        cls,
        groups: Sequence[tuple[str, Iterable[date]]],
        window: ClockWindow | None = None,
    ) -> "DateSelection":
        canon = tuple(
            (label, tuple(sorted(set(days)))) for label, days in groups
        )
        return cls(groups=canon, window=window)

    # -- views ---------------------------------------------------------

    def selected_dates(self) -> list[date]:
        if self.dates is not None:
            return list(self.dates)
        if self.start is not None and self.end is not None:
            n = (self.end - self.start).days + 1
            return [self.start + timedelta(days=i) for i in range(n)]
        if self.span is not None:
            first = self.span.start.date()
            last = (self.span.end - timedelta(microseconds=1)).date()
            n = (last - first).days + 1
            return [first + timedelta(days=i) for i in range(n)]
        assert self.groups is not None
        merged: set[date] = set()
        for _, days in self.groups:
            merged.update(days)
        return sorted(merged)

    def units(self) -> list["SelectionUnit"]:
        """Per-result analysis units: one per date, or one for a span."""
        if self.span is not None:
            return [SelectionUnit(_span_key(self.span.start, self.span.end),
                                  self.span.start, self.span.end)]
        out = []
        for day in self.selected_dates():
            if self.window is not None:
                s = datetime.combine(day, self.window.start)
                e = datetime.combine(day, self.window.end)
                out.append(SelectionUnit(_span_key(s, e), s, e))
            else:
                s = datetime.combine(day, time.min)
                out.append(SelectionUnit(day.isoformat(), s, s + timedelta(days=1)))
        return out

    def date_key(self) -> str:
        """Canonical string key for the whole selection.

        Single date -> "2024-01-01"; contiguous range ->
        "(2024-01-01, 2024-01-07)"; explicit list ->
        "['2024-01-01', '2024-01-03']"; spans use datetime-range form.
        An intraday window appends its clock range.
        """
        if self.span is not None:
            return _span_key(self.span.start, self.span.end)
        if self.groups is not None:
            keys = [
                DateSelection.from_dates(days, window=self.window).date_key()
                for _, days in self.groups
            ]
            return " vs ".join(keys)
        if self.dates is not None and len(self.dates) == 1:
            if self.window is not None:
                unit = self.units()[0]
                return unit.key
            return self.dates[0].isoformat()
        if self.start is not None and self.end is not None:
            base = f"({self.start.isoformat()}, {self.end.isoformat()})"
        else:
            assert self.dates is not None
            inner = ", ".join(f"'{d.isoformat()}'" for d in self.dates)
            base = f"[{inner}]"
        if self.window is not None:
            return f"{base} {self.window}"
        return base

    def matches(self, ts: datetime) -> bool:
        if self.span is not None:
            return self.span.contains(ts)
        if ts.date() not in set(self.selected_dates()):
            return False
        if self.window is not None:
            return self.window.start <= ts.time() < self.window.end
        return True


@dataclass(frozen=True)
class SelectionUnit:
    """One analyzable chunk: a result key plus absolute [start, end) bounds."""

    key: str
    start: datetime
    end: datetime

    @property
    def minutes(self) -> float:
        return (self.end - self.start).total_seconds() / 60.0


def _span_key(start: datetime, end: datetime) -> str:
    return f"({start:%Y-%m-%d %H:%M}, {end:%Y-%m-%d %H:%M})"


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def parse_timestamp(text: str) -> datetime | None:
    """Parse 'YYYY-MM-DD HH:MM[:SS]' or ISO-8601 without offset."""
    text = text.strip()
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        return None
    if ts.tzinfo is not None:
        return None
    return ts


def load_cgm_csv(
    path: str | Path,
    *,
    subject_id: str | None = None,
    timestamp_col: str = DEFAULT_TIMESTAMP_COLUMN,
    glucose_col: str = DEFAULT_GLUCOSE_COLUMN,
    declared_interval: float | None = None,
) -> GlucoseSeries:
    """Load a CGM export: one timestamp column, one glucose column (mg/dL).

    Rows with unparseable timestamps or out-of-range glucose are dropped and
    counted in ``dropped_rows``; duplicate timestamps keep the first
    occurrence; output is sorted ascending. Raises :class:`DataError` on a
    missing file, zero parseable rows, or an ambiguous column mapping.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        ts_col, bg_col = _resolve_columns(header, timestamp_col, glucose_col)
        rows: list[tuple[datetime, float]] = []
        dropped = 0
        for row in reader:
            ts = parse_timestamp(row.get(ts_col) or "")
            raw = (row.get(bg_col) or "").strip()
            try:
                value = float(raw)
            except ValueError:
                value = math.nan
            if ts is None or not math.isfinite(value) or not (
                GLUCOSE_MIN_MG_DL < value < GLUCOSE_MAX_MG_DL
            ):
                dropped += 1
                continue
            rows.append((ts, value))
    if not rows:
        raise DataError(f"no parseable CGM rows in {path}")
    rows.sort(key=lambda r: r[0])
    deduped: list[GlucoseReading] = []
    last: datetime | None = None
    for ts, value in rows:
        if last is not None and ts == last:
            dropped += 1  # duplicate timestamp: first occurrence wins
            continue
        deduped.append(GlucoseReading(ts, value))
        last = ts
    return GlucoseSeries(
        subject_id=subject_id or path.stem,
        readings=tuple(deduped),
        declared_interval=declared_interval,
        dropped_rows=dropped,
    )


def _resolve_columns(
    header: Sequence[str], timestamp_col: str, glucose_col: str
) -> tuple[str, str]:
    lowered = {h.lower().strip(): h for h in header}
    ts = lowered.get(timestamp_col.lower())
    bg = lowered.get(glucose_col.lower())
    if ts and bg:
        return ts, bg
    # Fall back to common column spellings before declaring ambiguity.
    ts_candidates = [h for k, h in lowered.items()
                     if k in ("timestamp", "time", "datetime", "date")]
    bg_candidates = [h for k, h in lowered.items()
                     if k in ("glucose_mg_dl", "glucose", "value", "bg", "glucose_value")]
    if ts is None and len(ts_candidates) == 1:
        ts = ts_candidates[0]
    if bg is None and len(bg_candidates) == 1:
        bg = bg_candidates[0]
    if ts is None or bg is None:
        raise DataError(
            f"cannot map columns from header {list(header)!r}; "
            "pass explicit timestamp/glucose column names"
        )
    return ts, bg


def save_cgm_csv(series: GlucoseSeries, path: str | Path) -> None:
    """Write the canonical two-column CSV form (round-trips via load)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([DEFAULT_TIMESTAMP_COLUMN, DEFAULT_GLUCOSE_COLUMN])
        for r in series.readings:
            writer.writerow([r.timestamp.strftime("%Y-%m-%d %H:%M:%S"),
                             f"{r.value:g}"])


# ---------------------------------------------------------------------------
# Sampling rate, filtering, weartime
# ---------------------------------------------------------------------------

def estimate_sampling_rate(series: GlucoseSeries) -> float:
    """Device sampling interval in minutes.

    A declared interval on the series wins; otherwise the median of positive
    inter-reading gaps rounded to the nearest minute (robust to isolated
    missing samples).
    """
    if series.declared_interval is not None:
        return float(series.declared_interval)
    if len(series) < 2:
        raise DataError("need at least 2 readings to estimate sampling rate")
    gaps = [
        (b.timestamp - a.timestamp).total_seconds() / 60.0
        for a, b in zip(series.readings, series.readings[1:])
    ]
    gaps = [g for g in gaps if g > 0]
    return float(round(statistics.median(gaps)))


def filter_series(series: GlucoseSeries, selection: DateSelection) -> GlucoseSeries:
    """Project the series onto a selection. Empty output is a valid state."""
    kept: list[GlucoseReading] = []
    for unit in selection.units():
        kept.extend(series.slice(unit.start, unit.end))
    kept.sort(key=lambda r: r.timestamp)
    # Units never overlap for valid selections, but dedupe defensively.
    unique: list[GlucoseReading] = []
    for r in kept:
        if unique and unique[-1].timestamp == r.timestamp:
            continue
        unique.append(r)
    return replace(series, readings=tuple(unique), dropped_rows=0)


@dataclass(frozen=True)
class WeartimeResult:
    key: str
    observed: int
    expected: float
    percent: float
    sufficient: bool


def compute_weartime(
    series: GlucoseSeries,
    selection: DateSelection,
    rate_minutes: float,
) -> dict[str, WeartimeResult]:
    """Percent of the ideal reading grid actually present, per unit.

    expected = window duration / rate (the ideal grid, not the observed
    span); percent clamped to [0, 100]; sufficiency flag at >= 70%.
    """
    if rate_minutes <= 0:
        raise DataError(f"sampling rate must be positive: {rate_minutes}")
    out: dict[str, WeartimeResult] = {}
    for unit in selection.units():
        observed = len(series.slice(unit.start, unit.end))
        expected = unit.minutes / rate_minutes
        pct = 100.0 * observed / expected if expected > 0 else 0.0
        pct = min(100.0, max(0.0, pct))
        out[unit.key] = WeartimeResult(
            key=unit.key,
            observed=observed,
            expected=expected,
            percent=pct,
            sufficient=pct >= WEARTIME_SUFFICIENT_PCT,
        )
    return out


# ---------------------------------------------------------------------------
# Synthetic series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthesisSpec:
    """Parameters for deterministic synthetic CGM data (desk-scale stand-in
    for real exports)."""

    days: int
    seed: int
    rate_minutes: int = 5
    start_date: date = date(2024, 1, 1)
    base_level: float = 120.0
    variability: float = 0.0
    missing_days: tuple[int, ...] = ()      # 0-based offsets with no data
    missing_sample_rate: float = 0.0        # fraction of each day's grid
    subject_id: str = "synthetic"


def synthesize_series(spec: SynthesisSpec) -> GlucoseSeries:
    """Deterministic synthetic series: seeded, bounded to [40, 400] mg/dL.

    The per-day number of dropped samples is ``round(rate * slots)``, so the
    realized missing-sample rate matches the requested one within one sample.
    """
    if spec.days <= 0:
        raise DataError(f"days must be positive: {spec.days}")
    if spec.rate_minutes <= 0:
        raise DataError(f"rate must be positive: {spec.rate_minutes}")
    if not (0.0 <= spec.missing_sample_rate < 1.0):
        raise DataError(f"missing_sample_rate out of [0, 1): {spec.missing_sample_rate}")
    rng = random.Random(spec.seed)
    slots_per_day = 1440 // spec.rate_minutes
    missing = set(spec.missing_days)
    readings: list[GlucoseReading] = []
    for day_idx in range(spec.days):
        day = spec.start_date + timedelta(days=day_idx)
        # Draw the day's noise regardless of gaps so missing-day choices do
        # not shift later days' values.
        phase = rng.uniform(0, 2 * math.pi)
        noise = [rng.gauss(0.0, spec.variability * 0.35) for _ in range(slots_per_day)]
        n_drop = round(spec.missing_sample_rate * slots_per_day)
        dropped = set(rng.sample(range(slots_per_day), n_drop)) if n_drop else set()
        if day_idx in missing:
            continue
        for slot in range(slots_per_day):
            if slot in dropped:
                continue
            minute = slot * spec.rate_minutes
            wave = spec.variability * math.sin(2 * math.pi * minute / 1440.0 + phase)
            value = spec.base_level + wave + noise[slot]
            value = min(400.0, max(40.0, value))
            ts = datetime.combine(day, time.min) + timedelta(minutes=minute)
            readings.append(GlucoseReading(ts, round(value, 1)))
    return GlucoseSeries(
        subject_id=spec.subject_id,
        readings=tuple(readings),
        declared_interval=float(spec.rate_minutes),
    )
