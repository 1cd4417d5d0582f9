"""Cross-day analytics: conditional averages, counting, extrema, group
comparison, excursion detection, and 24-hour trend profiles."""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from datetime import datetime

from .data import DataError, DateSelection, GlucoseSeries
from .metrics import (
    FEATURE_KEYS,
    NO_DATA,
    DailyFeatureRecord,
    RangeThresholds,
    sufficient,
)

DEFAULT_SPEED_THRESHOLD = 2.0   # mg/dL per minute
DEFAULT_EXCURSION_WINDOW = 15.0  # minutes

COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    "==": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


def _check_feature(feature: str) -> None:
    if feature not in FEATURE_KEYS:
        raise KeyError(f"unknown feature: {feature!r}")


def _valid_values(
    records: dict[str, DailyFeatureRecord], feature: str
) -> list[tuple[str, float]]:
    """(key, value) pairs with non-sentinel values, key-sorted."""
    out = []
    for key in sorted(records):
        rec = records[key]
        value = rec.get(feature)
        if value == NO_DATA:
            continue
        out.append((key, value))
    return out


@dataclass(frozen=True)
class AggregateResult:
    """A feature averaged over all days with data and, separately, over days
    with sufficient (>= 70%) weartime."""

    days_all: int
    avg_all: float
    days_sufficient_weartime: int
    avg_sufficient_weartime: float


def average_over_days(
    records: dict[str, DailyFeatureRecord], feature: str
) -> AggregateResult:
    _check_feature(feature)
    # Sentinel-valued or no-data days are excluded from both strata.
    all_pairs = [(k, v) for k, v in _valid_values(records, feature)
                 if records[k].has_data]
    suff_pairs = [(k, v) for k, v in all_pairs if sufficient(records[k])]
    return AggregateResult(
        days_all=len(all_pairs),
        avg_all=_mean([v for _, v in all_pairs]),
        days_sufficient_weartime=len(suff_pairs),
        avg_sufficient_weartime=_mean([v for _, v in suff_pairs]),
    )


def _mean(values: list[float]) -> float:
    if not values:
        return NO_DATA
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def count_days_satisfying(
    records: dict[str, DailyFeatureRecord],
    feature: str,
    comparator: str,
    threshold: float,
) -> int:
    """Days whose (non-sentinel) feature value satisfies the predicate."""
    _check_feature(feature)
    if comparator not in COMPARATORS:
        raise DataError(f"unknown comparator: {comparator!r}")
    op = COMPARATORS[comparator]
    return sum(
        1 for _, v in _valid_values(records, feature) if op(v, threshold)
    )


def feature_extremum(
    records: dict[str, DailyFeatureRecord], feature: str, mode: str
) -> tuple[str, float]:
    """(date_key, value) of the min or max; ties go to the earliest key."""
    _check_feature(feature)
    if mode not in ("min", "max"):
        raise DataError(f"mode must be 'min' or 'max', got {mode!r}")
    pairs = _valid_values(records, feature)
    if not pairs:
        raise DataError(f"no non-sentinel values for {feature!r}")
    best_key, best = pairs[0]
    for key, value in pairs[1:]:
        if (mode == "min" and value < best) or (mode == "max" and value > best):
            best_key, best = key, value
    return best_key, best


@dataclass(frozen=True)
class GroupComparison:
    avg_a: float
    avg_b: float
    absolute_difference: float
    ratio: float  # NO_DATA when avg_b == 0
    higher_group: str  # "A" | "B" | "tie"


def compare_groups(
    records: dict[str, DailyFeatureRecord],
    feature: str,
    group_a: set[str],
    group_b: set[str],
    *,
    sufficient_only: bool = False,
) -> GroupComparison:
    """Compare a feature's per-group day averages.

    Groups are disjoint sets of record keys; each needs at least one
    non-sentinel day. By default the all-data stratum feeds the averages;
    pass ``sufficient_only`` to restrict to good-weartime days.
    """
    _check_feature(feature)
    overlap = group_a & group_b
    if overlap:
        raise DataError(f"groups overlap on {sorted(overlap)}")

    def group_mean(keys: set[str], label: str) -> float:
        vals = []
        for key, value in _valid_values(records, feature):
            if key not in keys:
                continue
            if sufficient_only and not sufficient(records[key]):
                continue
            vals.append(value)
        if not vals:
            raise DataError(f"group {label} has no usable days")
        return _mean(vals)

    avg_a = group_mean(group_a, "A")
    avg_b = group_mean(group_b, "B")
    diff = abs(avg_a - avg_b)
    ratio = avg_a / avg_b if avg_b != 0 else NO_DATA
    if avg_a > avg_b:
        higher = "A"
    elif avg_b > avg_a:
        higher = "B"
    else:
        higher = "tie"
    return GroupComparison(avg_a, avg_b, diff, ratio, higher)


# ---------------------------------------------------------------------------
# Excursions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Excursion:
    """A rapid rise or fall.

    ``magnitude`` is the signed glucose change over the excursion span and
    ``speed`` the signed rate of the steepest qualifying window inside it.
    For a single-window excursion speed == magnitude / duration; merged
    multi-window excursions keep the steepest window's speed instead.
    """

    start: datetime
    end: datetime
    magnitude: float  # mg/dL, signed
    speed: float      # mg/dL per minute, signed
    direction: str    # "rise" | "fall"


def excursion_windows(
    series: GlucoseSeries,
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD,
    window_minutes: float = DEFAULT_EXCURSION_WINDOW,
) -> list[tuple[datetime, datetime, float, float]]:
    """All qualifying window placements, pre-merge.

    A placement pairs two readings exactly ``window_minutes`` apart;
    magnitude = v(end) - v(start), speed = magnitude / window; it qualifies
    when |speed| strictly exceeds the threshold.
    """
    if speed_threshold <= 0:
        raise DataError(f"speed threshold must be positive: {speed_threshold}")
    if window_minutes <= 0:
        raise DataError(f"window must be positive: {window_minutes}")
    stamps = list(series.timestamps)
    values = list(series.values)
    out = []
    j = 0
    for i, start_ts in enumerate(stamps):
        target = start_ts + _minutes(window_minutes)
        if j < i + 1:
            j = i + 1
        while j < len(stamps) and stamps[j] < target:
            j += 1
        if j < len(stamps) and stamps[j] == target:
            magnitude = values[j] - values[i]
            speed = magnitude / window_minutes
            if abs(speed) > speed_threshold:
                out.append((start_ts, stamps[j], magnitude, speed))
    return out


def _minutes(m: float):
    from datetime import timedelta

    return timedelta(minutes=m)


def detect_excursions(
    series: GlucoseSeries,
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD,
    window_minutes: float = DEFAULT_EXCURSION_WINDOW,
) -> list[Excursion]:
    """Qualifying windows merged into excursions.

    Same-direction windows that overlap or abut chain into one excursion
    spanning their union; the union's endpoints give the reported magnitude
    and the steepest member window gives the reported speed.
    """
    windows = excursion_windows(series, speed_threshold, window_minutes)
    merged: list[Excursion] = []
    current: list[tuple[datetime, datetime, float, float]] = []

    def flush() -> None:
        if not current:
            return
        start = current[0][0]
        end = max(w[1] for w in current)
        v_start = series.value_at(start)
        v_end = series.value_at(end)
        assert v_start is not None and v_end is not None
        steepest = max(current, key=lambda w: abs(w[3]))
        merged.append(Excursion(
            start=start,
            end=end,
            magnitude=v_end - v_start,
            speed=steepest[3],
            direction="rise" if steepest[3] > 0 else "fall",
        ))
        current.clear()

    for w in windows:
        if current:
            same_dir = (w[3] > 0) == (current[-1][3] > 0)
            touching = w[0] <= max(x[1] for x in current)
            if not (same_dir and touching):
                flush()
        current.append(w)
    flush()
    return merged


# ---------------------------------------------------------------------------
# Daily trend profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrendBin:
    clock_minutes: int  # bin start, minutes past midnight
    mean: float         # NO_DATA when the bin is empty
    std: float
    count: int

    @property
    def clock_label(self) -> str:
        return f"{self.clock_minutes // 60:02d}:{self.clock_minutes % 60:02d}"


@dataclass(frozen=True)
class TrendProfile:
    """Per-clock-bin mean/SD/count over the selected days, covering 24h."""

    bin_minutes: int
    bins: tuple[TrendBin, ...]

    def as_dicts(self) -> list[dict]:
        return [
            {
                "clock": b.clock_label,
                "mean": b.mean,
                "std": b.std,
                "count": b.count,
            }
            for b in self.bins
        ]


def daily_trend_profile(
    series: GlucoseSeries,
    selection: DateSelection,
    bin_minutes: int = 30,
) -> TrendProfile:
    """Group the selection's readings by clock-time bin (00:00 -> 24:00)."""
    if bin_minutes <= 0 or 1440 % bin_minutes != 0:
        raise DataError(f"bin size must divide 1440 minutes: {bin_minutes}")
    n_bins = 1440 // bin_minutes
    buckets: list[list[float]] = [[] for _ in range(n_bins)]
    for unit in selection.units():
        for r in series.slice(unit.start, unit.end):
            minute = r.timestamp.hour * 60 + r.timestamp.minute
            buckets[minute // bin_minutes].append(r.value)
    bins = []
    for idx, vals in enumerate(buckets):
        if vals:
            mean = _mean(vals)
            var = _mean([(v - mean) ** 2 for v in vals])
            bins.append(TrendBin(idx * bin_minutes, mean, math.sqrt(var), len(vals)))
        else:
            bins.append(TrendBin(idx * bin_minutes, NO_DATA, NO_DATA, 0))
    return TrendProfile(bin_minutes=bin_minutes, bins=tuple(bins))


# ---------------------------------------------------------------------------
# Deterministic SVG chart
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H = 860, 420
_M_LEFT, _M_RIGHT, _M_TOP, _M_BOT = 52, 16, 16, 36


def render_trend_svg(
    profile: TrendProfile,
    thresholds: RangeThresholds = RangeThresholds(),
) -> str:
    """Static 24-hour profile chart as an SVG document.

    Mean line with +/-1 SD band, horizontal lines at both range thresholds,
    hour-labeled x axis. Output is a pure function of its inputs, so
    identical profiles render byte-identically. Empty bins break the line.
    """
    if not profile.bins:
        raise DataError("empty trend profile")
    plot_w = _SVG_W - _M_LEFT - _M_RIGHT
    plot_h = _SVG_H - _M_TOP - _M_BOT
    tops = [b.mean + b.std for b in profile.bins if b.count > 0]
    bots = [b.mean - b.std for b in profile.bins if b.count > 0]
    y_max = max([thresholds.high + 40.0] + [t + 10.0 for t in tops])
    y_min = min([max(0.0, thresholds.low - 40.0)] + [b - 10.0 for b in bots])
    if y_max <= y_min:
        y_max = y_min + 1.0

    def x(minute: float) -> float:
        return _M_LEFT + plot_w * minute / 1440.0

    def y(value: float) -> float:
        return _M_TOP + plot_h * (y_max - value) / (y_max - y_min)

    def fmt(v: float) -> str:
        return f"{v:.2f}"

    # Contiguous runs of non-empty bins; each run is one line + one band.
    runs: list[list[TrendBin]] = []
    cur: list[TrendBin] = []
    for b in profile.bins:
        if b.count > 0:
            cur.append(b)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" '
        f'height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect x="0" y="0" width="{_SVG_W}" height="{_SVG_H}" fill="#ffffff"/>',
    ]
    half = profile.bin_minutes / 2.0
    for run in runs:
        if len(run) < 1:
            continue
        upper = " ".join(
            f"{fmt(x(b.clock_minutes + half))},{fmt(y(b.mean + b.std))}" for b in run
        )
        lower = " ".join(
            f"{fmt(x(b.clock_minutes + half))},{fmt(y(b.mean - b.std))}"
            for b in reversed(run)
        )
        parts.append(
            f'<polygon points="{upper} {lower}" fill="#8fd19e" '
            'fill-opacity="0.35" stroke="none"/>'
        )
    for level, label in ((thresholds.low, "low"), (thresholds.high, "high")):
        yy = fmt(y(level))
        parts.append(
            f'<line x1="{_M_LEFT}" y1="{yy}" x2="{_SVG_W - _M_RIGHT}" y2="{yy}" '
            f'stroke="#c0392b" stroke-width="1" stroke-dasharray="6,4" '
            f'data-threshold="{label}"/>'
        )
        parts.append(
            f'<text x="{_M_LEFT - 6}" y="{yy}" text-anchor="end" '
            f'font-size="11" fill="#c0392b" dominant-baseline="middle">'
            f"{level:g}</text>"
        )
    for run in runs:
        pts = " ".join(
            f"{fmt(x(b.clock_minutes + half))},{fmt(y(b.mean))}" for b in run
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="#1e8449" '
            'stroke-width="2"/>'
        )
    axis_y = _SVG_H - _M_BOT
    parts.append(
        f'<line x1="{_M_LEFT}" y1="{axis_y}" x2="{_SVG_W - _M_RIGHT}" '
        f'y2="{axis_y}" stroke="#333333" stroke-width="1"/>'
    )
    for hour in range(0, 25, 3):
        xx = fmt(x(hour * 60))
        parts.append(
            f'<line x1="{xx}" y1="{axis_y}" x2="{xx}" y2="{axis_y + 5}" '
            'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{xx}" y="{axis_y + 18}" text-anchor="middle" '
            f'font-size="11" fill="#333333">{hour:02d}:00</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
