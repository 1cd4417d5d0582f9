"""The CGM analytical toolkit exposed through the sandbox registry.

Fourteen tools: three for data processing and weartime, five for daily
clinical metrics, six for long-term aggregation and analysis. Executors are
pure functions over a :class:`~cgmquery.store.DataStore`; every result is an
aggregate keyed by the shared date-key vocabulary (single date,
"(start, end)" range, or "['...', '...']" list, with clock windows folded
into datetime-range keys).
"""
from __future__ import annotations

from datetime import date, datetime
from typing import Any, Sequence

from .aggregation import (
    DEFAULT_EXCURSION_WINDOW,
    DEFAULT_SPEED_THRESHOLD,
    average_over_days,
    compare_groups,
    count_days_satisfying,
    daily_trend_profile,
    detect_excursions,
    feature_extremum,
)
from .data import (
    ClockWindow,
    DataError,
    DateSelection,
    estimate_sampling_rate,
    filter_series,
)
from .features import known_daily_feature
from .metrics import (
    NO_DATA,
    RangeThresholds,
    extract_daily_features,
)
from .sandbox import (
    ModalityExecutor,
    ParamSpec,
    SchemaError,
    ToolRegistry,
    ToolSpec,
)
from .store import DataStore

CGM_TOOL_COUNT = 14

_SELECTION_PARAMS = (
    ParamSpec("dates", "date_list", description="explicit list of ISO dates"),
    ParamSpec("start_date", "date", description="inclusive range start"),
    ParamSpec("end_date", "date", description="inclusive range end"),
    ParamSpec("start_datetime", "datetime", description="absolute window start"),
    ParamSpec("end_datetime", "datetime", description="absolute window end (exclusive)"),
    ParamSpec("window", "clock_window", description="intraday HH:MM-HH:MM window"),
)


def selection_from_args(
    dates: Sequence[str] | None = None,
    start_date: str | None = None,
    end_date: str | None = None,
    start_datetime: str | None = None,
    end_datetime: str | None = None,
    window: str | None = None,
) -> DateSelection:
    """Build a DateSelection from wire-format tool arguments."""
    clock = ClockWindow.parse(window) if window else None
    if start_datetime or end_datetime:
        if not (start_datetime and end_datetime):
            raise SchemaError("need both start_datetime and end_datetime")
        if dates or start_date or end_date:
            raise SchemaError("datetime window excludes other date arguments")
        return DateSelection.from_span(
            datetime.fromisoformat(start_datetime),
            datetime.fromisoformat(end_datetime),
        )
    if dates:
        if start_date or end_date:
            raise SchemaError("pass either dates or a start/end range, not both")
        return DateSelection.from_dates(
            [date.fromisoformat(d) for d in dates], window=clock
        )
    if start_date or end_date:
        if not (start_date and end_date):
            raise SchemaError("need both start_date and end_date")
        return DateSelection.from_range(
            date.fromisoformat(start_date), date.fromisoformat(end_date), window=clock
        )
    raise SchemaError("no date selection given")


def _thresholds(low: float | None, high: float | None) -> RangeThresholds:
    base = RangeThresholds()
    return RangeThresholds(
        low=base.low if low is None else low,
        high=base.high if high is None else high,
    )


def _records(data: DataStore, selection: DateSelection, thresholds: RangeThresholds):
    return extract_daily_features(data.series, selection, thresholds)


def _project(records, fields: Sequence[str]) -> dict[str, Any]:
    return {
        key: {f: rec.get(f) for f in fields} for key, rec in records.items()
    }


# --- data processing & weartime -------------------------------------------

def _filter_cgm_csv(data: DataStore, **kwargs) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    payload: dict[str, Any] = {}
    for unit in selection.units():
        payload[unit.key] = {
            "n_readings": float(len(data.series.slice(unit.start, unit.end)))
        }
    return payload


def _estimate_rate(data: DataStore) -> dict[str, Any]:
    return {"all": {"sampling_rate_minutes": estimate_sampling_rate(data.series)}}


def _find_adherence(data: DataStore, **kwargs) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    return _project(records, ("weartime_pct", "weartime_sufficient"))


# --- daily clinical metrics ------------------------------------------------

def _find_bg_time_range(
    data: DataStore, low: float | None = None, high: float | None = None, **kwargs
) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, _thresholds(low, high))
    return _project(
        records,
        ("tir_pct", "tbr_pct", "tar_pct", "tir_minutes", "tbr_minutes", "tar_minutes"),
    )


def _find_avg_std(data: DataStore, **kwargs) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    return _project(
        records,
        ("mean_glucose", "std_glucose", "cv_pct", "est_a1c_pct", "gmi_pct"),
    )


def _find_min_max(data: DataStore, **kwargs) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    return _project(records, ("min_glucose", "max_glucose"))


def _find_events(
    data: DataStore,
    low: float | None = None,
    high: float | None = None,
    **kwargs,
) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, _thresholds(low, high))
    return _project(records, ("hypo_events", "hyper_events"))


def _extract_features(
    data: DataStore, low: float | None = None, high: float | None = None, **kwargs
) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, _thresholds(low, high))
    return {key: rec.as_dict() for key, rec in records.items()}


# --- long-term aggregation & analysis --------------------------------------

def _get_average(data: DataStore, feature: str, **kwargs) -> dict[str, Any]:
    canon = known_daily_feature(feature)
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    agg = average_over_days(records, canon)
    return {
        selection.date_key(): {
            "days_all": float(agg.days_all),
            f"avg_{canon}_all": agg.avg_all,
            "days_sufficient_weartime": float(agg.days_sufficient_weartime),
            f"avg_{canon}_sufficient_weartime": agg.avg_sufficient_weartime,
        }
    }


def _count_condition(
    data: DataStore, feature: str, comparator: str, threshold: float, **kwargs
) -> dict[str, Any]:
    canon = known_daily_feature(feature)
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    count = count_days_satisfying(records, canon, comparator, threshold)
    evaluated = sum(1 for rec in records.values() if rec.get(canon) != NO_DATA)
    return {
        selection.date_key(): {
            "days_satisfied": float(count),
            "days_evaluated": float(evaluated),
        }
    }


def _feature_range(
    data: DataStore, feature: str, mode: str = "both", **kwargs
) -> dict[str, Any]:
    canon = known_daily_feature(feature)
    selection = selection_from_args(**kwargs)
    records = _records(data, selection, RangeThresholds())
    if mode not in ("min", "max", "both"):
        raise SchemaError(f"mode must be min, max, or both: {mode!r}")
    payload: dict[str, Any] = {}
    if mode in ("min", "both"):
        key, value = feature_extremum(records, canon, "min")
        payload.setdefault(key, {})[f"min_{canon}"] = value
    if mode in ("max", "both"):
        key, value = feature_extremum(records, canon, "max")
        payload.setdefault(key, {})[f"max_{canon}"] = value
    return payload


_HIGHER_CODE = {"A": 1.0, "B": 2.0, "tie": 0.0}


def _difference_ratio(
    data: DataStore,
    feature: str,
    group_a: Sequence[str],
    group_b: Sequence[str],
    window: str | None = None,
    window_a: str | None = None,
    window_b: str | None = None,
    sufficient_only: bool = False,
) -> dict[str, Any]:
    canon = known_daily_feature(feature)
    sel_a = selection_from_args(dates=group_a, window=window_a or window)
    sel_b = selection_from_args(dates=group_b, window=window_b or window)
    records = _records(data, sel_a, RangeThresholds())
    records_b = _records(data, sel_b, RangeThresholds())
    keys_a = set(records)
    keys_b = set(records_b)
    records.update(records_b)
    cmp = compare_groups(
        records, canon, keys_a, keys_b, sufficient_only=sufficient_only
    )
    key = f"{sel_a.date_key()} vs {sel_b.date_key()}"
    return {
        key: {
            "avg_group_a": cmp.avg_a,
            "avg_group_b": cmp.avg_b,
            "absolute_difference": cmp.absolute_difference,
            "ratio": cmp.ratio,
            "higher_group": _HIGHER_CODE[cmp.higher_group],
        }
    }


def _excursions(
    data: DataStore,
    speed_threshold: float = DEFAULT_SPEED_THRESHOLD,
    window_minutes: float = DEFAULT_EXCURSION_WINDOW,
    **kwargs,
) -> dict[str, Any]:
    if any(kwargs.get(k) for k in
           ("dates", "start_date", "end_date", "start_datetime", "end_datetime", "window")):
        selection = selection_from_args(**kwargs)
        series = filter_series(data.series, selection)
        sel_key = selection.date_key()
    else:
        series = data.series
        sel_key = "all"
    found = detect_excursions(series, speed_threshold, window_minutes)
    payload: dict[str, Any] = {sel_key: {"excursion_count": float(len(found))}}
    for exc in found:
        key = f"({exc.start:%Y-%m-%d %H:%M:%S}, {exc.end:%Y-%m-%d %H:%M:%S})"
        payload[key] = {"magnitude": exc.magnitude, "speed": exc.speed}
    return payload


def _daily_trends(
    data: DataStore, bin_minutes: int = 30, **kwargs
) -> dict[str, Any]:
    selection = selection_from_args(**kwargs)
    profile = daily_trend_profile(data.series, selection, bin_minutes)
    return {
        b.clock_label: {
            "mean_glucose": b.mean,
            "std_glucose": b.std,
            "n_readings": float(b.count),
        }
        for b in profile.bins
    }


def build_cgm_registry() -> ToolRegistry:
    """The default registry: all fourteen CGM tools in catalog order."""
    registry = ToolRegistry()
    threshold_params = (
        ParamSpec("low", "number", description="low threshold mg/dL (default 70)"),
        ParamSpec("high", "number", description="high threshold mg/dL (default 180)"),
    )
    feature_param = ParamSpec(
        "feature", "string", required=True, description="daily feature name"
    )
    entries: list[tuple[ToolSpec, Any]] = [
        (
            ToolSpec(
                "filter_cgm_csv",
                "Filter the local CGM data by date list, date range, or time "
                "window; returns per-unit reading counts only.",
                _SELECTION_PARAMS,
            ),
            _filter_cgm_csv,
        ),
        (
            ToolSpec(
                "estimate_cgm_sampling_rate",
                "Infer the device sampling interval in minutes.",
                (),
            ),
            _estimate_rate,
        ),
        (
            ToolSpec(
                "find_adherence",
                "Percent of active wear time for full days or specific windows, "
                "with the >=70% sufficiency flag.",
                _SELECTION_PARAMS,
            ),
            _find_adherence,
        ),
        (
            ToolSpec(
                "find_BG_time_range",
                "Percentage and duration of time in/below/above the target "
                "range per selected day or window.",
                _SELECTION_PARAMS + threshold_params,
            ),
            _find_bg_time_range,
        ),
        (
            ToolSpec(
                "find_avg_std_gv_BG",
                "Mean glucose, standard deviation, CV, estimated A1c, and GMI "
                "per selected day or window.",
                _SELECTION_PARAMS,
            ),
            _find_avg_std,
        ),
        (
            ToolSpec(
                "find_BG_min_max",
                "Absolute minimum and maximum glucose per selected day or window.",
                _SELECTION_PARAMS,
            ),
            _find_min_max,
        ),
        (
            ToolSpec(
                "find_hypo_hyper_events",
                "Counts of sustained (15+ minute) hypoglycemia and "
                "hyperglycemia events per selected day or window.",
                _SELECTION_PARAMS + threshold_params,
            ),
            _find_events,
        ),
        (
            ToolSpec(
                "extract_features_json",
                "All daily metrics (ranges, stats, extremes, events, weartime) "
                "as one flat record per selected day or window.",
                _SELECTION_PARAMS + threshold_params,
            ),
            _extract_features,
        ),
        (
            ToolSpec(
                "get_average",
                "Average a daily feature across the selection; reports the "
                "all-data and good-weartime strata with their day counts.",
                (feature_param,) + _SELECTION_PARAMS,
            ),
            _get_average,
        ),
        (
            ToolSpec(
                "count_satisfied_condition",
                "Count selected days whose feature value satisfies "
                "comparator+threshold.",
                (
                    feature_param,
                    ParamSpec("comparator", "string", required=True,
                              description="< <= = >= >"),
                    ParamSpec("threshold", "number", required=True),
                )
                + _SELECTION_PARAMS,
            ),
            _count_condition,
        ),
        (
            ToolSpec(
                "feature_range",
                "Find which selected day has the lowest/highest value of a "
                "feature.",
                (feature_param, ParamSpec("mode", "string", description="min, max, or both"))
                + _SELECTION_PARAMS,
            ),
            _feature_range,
        ),
        (
            ToolSpec(
                "compute_difference_ratio",
                "Compare a feature between two groups of dates (optionally "
                "windowed): group averages, absolute difference, ratio, and "
                "which group is higher (1=A, 2=B, 0=tie).",
                (
                    feature_param,
                    ParamSpec("group_a", "date_list", required=True),
                    ParamSpec("group_b", "date_list", required=True),
                    ParamSpec("window", "clock_window"),
                    ParamSpec("window_a", "clock_window"),
                    ParamSpec("window_b", "clock_window"),
                    ParamSpec("sufficient_only", "boolean"),
                ),
            ),
            _difference_ratio,
        ),
        (
            ToolSpec(
                "calculate_blood_glucose_excursion",
                "Detect rapid glucose rises/falls beyond a speed threshold; "
                "reports each excursion's span, magnitude, and speed.",
                (
                    ParamSpec("speed_threshold", "number",
                              description="mg/dL per minute, default 2.0"),
                    ParamSpec("window_minutes", "number", description="default 15"),
                )
                + _SELECTION_PARAMS,
            ),
            _excursions,
        ),
        (
            ToolSpec(
                "plot_daily_trends",
                "24-hour aggregate profile: per clock bin, the mean and SD of "
                "glucose over the selected days.",
                (ParamSpec("bin_minutes", "integer", description="must divide 1440"),)
                + _SELECTION_PARAMS,
            ),
            _daily_trends,
        ),
    ]
    for spec, fn in entries:
        registry.register(spec, fn)
    return registry


# --- additional modalities --------------------------------------------------

def _modality_records(data: DataStore, modality: str):
    if modality not in data.modalities:
        raise DataError(f"no {modality} data loaded for {data.subject_id!r}")
    return data.modalities[modality]


def _daily_total(modality: str, feature_name: str):
    def executor(data: DataStore, **kwargs) -> dict[str, Any]:
        records = _modality_records(data, modality)
        selection = selection_from_args(**kwargs)
        payload: dict[str, Any] = {}
        for unit in selection.units():
            total = 0.0
            count = 0
            for rec in records:
                if unit.start <= rec.timestamp < unit.end:
                    total += rec.amount
                    count += 1
            payload[unit.key] = {feature_name: total, "n_entries": float(count)}
        return payload

    return executor


def _post_intake_response(modality: str, feature_name: str):
    def executor(
        data: DataStore, horizon_minutes: float = 120.0, **kwargs
    ) -> dict[str, Any]:
        from datetime import timedelta

        records = _modality_records(data, modality)
        selection = selection_from_args(**kwargs)
        payload: dict[str, Any] = {}
        for unit in selection.units():
            deltas = []
            for rec in records:
                if not (unit.start <= rec.timestamp < unit.end):
                    continue
                before = data.series.slice(
                    rec.timestamp - timedelta(minutes=30), rec.timestamp + timedelta(minutes=1)
                )
                after = data.series.slice(
                    rec.timestamp + timedelta(minutes=horizon_minutes - 15),
                    rec.timestamp + timedelta(minutes=horizon_minutes + 15),
                )
                if before and after:
                    deltas.append(after[0].value - before[-1].value)
            if deltas:
                total = 0.0
                for d in deltas:
                    total += d
                payload[unit.key] = {
                    feature_name: total / len(deltas),
                    "n_entries": float(len(deltas)),
                }
            else:
                payload[unit.key] = {feature_name: NO_DATA, "n_entries": 0.0}
        return payload

    return executor


def build_insulin_executor() -> ModalityExecutor:
    horizon = ParamSpec("horizon_minutes", "number",
                        description="minutes after dose, default 120")
    return ModalityExecutor(
        modality="insulin",
        tools=(
            (
                ToolSpec("daily_insulin_total",
                         "Total insulin units per selected day.",
                         _SELECTION_PARAMS),
                _daily_total("insulin", "insulin_total_units"),
            ),
            (
                ToolSpec("post_dose_glucose_response",
                         "Average glucose change in the hours after insulin "
                         "doses on the selected days.",
                         (horizon,) + _SELECTION_PARAMS),
                _post_intake_response("insulin", "avg_glucose_delta"),
            ),
        ),
    )


def build_carbohydrate_executor() -> ModalityExecutor:
    horizon = ParamSpec("horizon_minutes", "number",
                        description="minutes after intake, default 120")
    return ModalityExecutor(
        modality="carbohydrate",
        tools=(
            (
                ToolSpec("daily_carb_total",
                         "Total carbohydrate grams per selected day.",
                         _SELECTION_PARAMS),
                _daily_total("carbohydrate", "carb_total_grams"),
            ),
            (
                ToolSpec("post_intake_glucose_response",
                         "Average glucose change in the hours after "
                         "carbohydrate intake on the selected days.",
                         (horizon,) + _SELECTION_PARAMS),
                _post_intake_response("carbohydrate", "avg_glucose_delta"),
            ),
        ),
    )
