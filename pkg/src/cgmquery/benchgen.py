"""Question factory and execution-derived ground truth.

Templates carry a text pattern, parameter domains, and a reference tool
procedure; instantiating one draws parameters from a subject's recorded
span and executes the procedure in the sandbox, so every answer is the
output of deterministic program execution rather than annotation.

The built-in library covers four categories: synthetic template questions,
directly answerable user-style questions, proxy questions (unobserved
behavior approximated through time windows), and unanswerable questions
whose procedures are empty by construction. It is extensible through a
JSON template file.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import Any, Sequence

from .data import DataError
from .sandbox import ToolCall, ToolRegistry, merge_payloads
from .store import DataStore
from .toolkit import build_cgm_registry

CATEGORIES = ("template", "direct", "proxy", "unanswerable")

#: Published benchmark composition (2470/798/399/513 of 4180), as the
#: default generation mix.
DEFAULT_MIX = {
    "template": 2470 / 4180,
    "direct": 798 / 4180,
    "proxy": 399 / 4180,
    "unanswerable": 513 / 4180,
}

BENCHMARK_KIND = "cgm-qa-benchmark"
SCHEMA_VERSION = 1


class GenerationError(Exception):
    pass


@dataclass(frozen=True)
class QuestionTemplate:
    id: str
    category: str
    pattern: str
    parameters: tuple[tuple[str, str], ...] = ()  # (name, kind) in draw order
    procedure: tuple[dict, ...] = ()
    required_features: tuple[str, ...] = ()
    refined_pattern: str | None = None
    missing_modality: str | None = None

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise GenerationError(f"unknown category: {self.category!r}")
        if (self.category == "unanswerable") != (len(self.procedure) == 0):
            raise GenerationError(
                f"{self.id}: unanswerable templates and only they have empty procedures"
            )


@dataclass
class BenchmarkItem:
    item_id: str
    subject_id: str
    category: str
    question: str
    refined_question: str
    is_answerable: bool
    reference_date: date
    reference_datetime: datetime
    procedure: list[ToolCall]
    ground_truth: dict[str, Any]
    required_features: list[str]
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "subject_id": self.subject_id,
            "category": self.category,
            "question": self.question,
            "refined_question": self.refined_question,
            "is_answerable": self.is_answerable,
            "reference_date": self.reference_date.isoformat(),
            "reference_datetime": self.reference_datetime.isoformat(sep=" "),
            "procedure": [
                {"name": c.name, "arguments": c.arguments} for c in self.procedure
            ],
            "ground_truth": self.ground_truth,
            "required_features": list(self.required_features),
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> "BenchmarkItem":
        return cls(
            item_id=obj["item_id"],
            subject_id=obj["subject_id"],
            category=obj["category"],
            question=obj["question"],
            refined_question=obj["refined_question"],
            is_answerable=bool(obj["is_answerable"]),
            reference_date=date.fromisoformat(obj["reference_date"]),
            reference_datetime=datetime.fromisoformat(obj["reference_datetime"]),
            procedure=[ToolCall.from_dict(c) for c in obj["procedure"]],
            ground_truth=obj["ground_truth"],
            required_features=list(obj["required_features"]),
            params=dict(obj.get("params", {})),
        )


# ---------------------------------------------------------------------------
# Built-in template library
# ---------------------------------------------------------------------------

_FEATURES = (
    ("tir_pct", "TIR"),
    ("tbr_pct", "time below range"),
    ("tar_pct", "time above range"),
    ("mean_glucose", "average glucose"),
    ("std_glucose", "glucose standard deviation"),
    ("cv_pct", "glycemic variability (CV)"),
    ("gmi_pct", "GMI"),
    ("est_a1c_pct", "estimated A1c"),
    ("min_glucose", "lowest glucose"),
    ("max_glucose", "highest glucose"),
)

_CONDITIONS = (
    ("hypo_events", "=", 0, "no hypoglycemia events"),
    ("hyper_events", "=", 0, "no hyperglycemia events"),
    ("tir_pct", ">", 70, "TIR above 70%"),
    ("tir_pct", ">=", 80, "TIR of at least 80%"),
    ("mean_glucose", "<", 154, "average glucose under 154 mg/dL"),
    ("weartime_pct", ">=", 70, "good CGM weartime"),
)

_COMPARISON_FEATURES = (
    "avg_group_a",
    "avg_group_b",
    "absolute_difference",
    "ratio",
    "higher_group",
)


def builtin_templates() -> list[QuestionTemplate]:
    T = QuestionTemplate
    return [
        # --- synthetic template-generated ---------------------------------
        T(
            "tpl-metric-on-date",
            "template",
            "What was my {feature} on {date_a}?",
            (("feature", "feature"), ("date_a", "date")),
            (
                {"name": "extract_features_json",
                 "arguments": {"dates": ["{date_a}"]}},
            ),
            ("{feature_canonical}", "weartime_pct"),
            refined_pattern=(
                "What are my {feature} and CGM weartime over the following "
                "dates: {date_a}?"
            ),
        ),
        T(
            "tpl-average-over-period",
            "template",
            "What was my average {feature} over {period_a}?",
            (("feature", "feature"), ("period_a", "period")),
            (
                {"name": "get_average",
                 "arguments": {"feature": "{feature_canonical}",
                               "start_date": "{period_a_start}",
                               "end_date": "{period_a_end}"}},
            ),
            ("days_all", "avg_{feature_canonical}_all",
             "days_sufficient_weartime",
             "avg_{feature_canonical}_sufficient_weartime"),
            refined_pattern=(
                "What are my average {feature} over {period_a}? Consider two "
                "conditions: 1. Days with any CGM records. 2. Days with good "
                "weartime (>70%)."
            ),
        ),
        T(
            "tpl-compare-periods",
            "template",
            "Compare my average {feature} between {period_a} and {period_b}.",
            (("feature", "feature"), ("period_a", "period"),
             ("period_b", "period_disjoint")),
            (
                {"name": "compute_difference_ratio",
                 "arguments": {"feature": "{feature_canonical}",
                               "group_a": "{period_a_dates}",
                               "group_b": "{period_b_dates}"}},
            ),
            _COMPARISON_FEATURES,
            refined_pattern=(
                "Compare {feature} between groups of dates: {period_a} vs "
                "{period_b}. Calculate: 1. Average value per group. "
                "2. Absolute difference. 3. Which group is higher."
            ),
        ),
        T(
            "tpl-count-condition",
            "template",
            "How many days between {period_a_start} and {period_a_end} had "
            "{condition}?",
            (("condition", "condition"), ("period_a", "period")),
            (
                {"name": "count_satisfied_condition",
                 "arguments": {"feature": "{condition_feature}",
                               "comparator": "{condition_op}",
                               "threshold": "{condition_threshold}",
                               "start_date": "{period_a_start}",
                               "end_date": "{period_a_end}"}},
            ),
            ("days_satisfied",),
            refined_pattern=(
                "How many days over {period_a} satisfy: {condition_feature} "
                "{condition_op} {condition_threshold}?"
            ),
        ),
        T(
            "tpl-extreme-day",
            "template",
            "Which day had the {mode_surface} {feature} over {period_a}?",
            (("mode", "mode"), ("feature", "feature"), ("period_a", "period")),
            (
                {"name": "feature_range",
                 "arguments": {"feature": "{feature_canonical}",
                               "mode": "{mode}",
                               "start_date": "{period_a_start}",
                               "end_date": "{period_a_end}"}},
            ),
            ("{mode}_{feature_canonical}",),
            refined_pattern=(
                "Which day has the {mode_surface} {feature} over the dates "
                "{period_a}?"
            ),
        ),
        T(
            "tpl-min-max-on-date",
            "template",
            "What were my lowest and highest glucose values on {date_a}?",
            (("date_a", "date"),),
            (
                {"name": "find_BG_min_max",
                 "arguments": {"dates": ["{date_a}"]}},
            ),
            ("min_glucose", "max_glucose"),
            refined_pattern=(
                "What are my minimum and maximum glucose on the following "
                "dates: {date_a}?"
            ),
        ),
        T(
            "tpl-events-on-date",
            "template",
            "How many hypoglycemia and hyperglycemia events did I have on "
            "{date_a}?",
            (("date_a", "date"),),
            (
                {"name": "find_hypo_hyper_events",
                 "arguments": {"dates": ["{date_a}"]}},
            ),
            ("hypo_events", "hyper_events"),
            refined_pattern=(
                "How many hypoglycemia and hyperglycemia events occurred on "
                "the following dates: {date_a}?"
            ),
        ),
        T(
            "tpl-windowed-tir",
            "template",
            "What is my time in range between {span_a_start} and {span_a_end}?",
            (("span_a", "span"),),
            (
                {"name": "extract_features_json",
                 "arguments": {"start_datetime": "{span_a_start}",
                               "end_datetime": "{span_a_end}"}},
            ),
            ("tir_pct", "weartime_pct"),
            refined_pattern=(
                "What are my TIR and CGM weartime for the time range "
                "{span_a_start} to {span_a_end}?"
            ),
        ),
        # --- user-derived, directly answerable -----------------------------
        T(
            "usr-tir-dates",
            "direct",
            "What's my TIR on {date_a} and {date_b}?",
            (("date_a", "date"), ("date_b", "date_distinct")),
            (
                {"name": "extract_features_json",
                 "arguments": {"dates": ["{date_a}", "{date_b}"]}},
            ),
            ("tir_pct", "weartime_pct"),
            refined_pattern=(
                "What are my TIR and CGM weartime on the following dates: "
                "{date_a} and {date_b}?"
            ),
        ),
        T(
            "usr-tir-week",
            "direct",
            "How much of the time was my glucose in range over {period_a}?",
            (("period_a", "period"),),
            (
                {"name": "get_average",
                 "arguments": {"feature": "tir_pct",
                               "start_date": "{period_a_start}",
                               "end_date": "{period_a_end}"}},
            ),
            ("days_all", "avg_tir_pct_all", "days_sufficient_weartime",
             "avg_tir_pct_sufficient_weartime"),
            refined_pattern=(
                "What are my TIR and CGM weartime over the dates {period_a}? "
                "Consider two conditions: 1. Days with any CGM records. "
                "2. Days with good weartime (>70%)."
            ),
        ),
        T(
            "usr-window-sd",
            "direct",
            "What is the standard deviation of my blood glucose between "
            "{span_a_start} and {span_a_end}?",
            (("span_a", "span"),),
            (
                {"name": "extract_features_json",
                 "arguments": {"start_datetime": "{span_a_start}",
                               "end_datetime": "{span_a_end}"}},
            ),
            ("std_glucose", "weartime_pct"),
            refined_pattern=(
                "What are my standard deviation of blood glucose and CGM "
                "weartime for the time range {span_a_start} to {span_a_end}?"
            ),
        ),
        T(
            "usr-weekday-weekend",
            "direct",
            "How does my glucose control on weekdays compare to weekends "
            "during {period_a}?",
            (("period_a", "week_period"), ("split", "weekday_split")),
            (
                {"name": "compute_difference_ratio",
                 "arguments": {"feature": "tir_pct",
                               "group_a": "{split_weekdays}",
                               "group_b": "{split_weekends}"}},
            ),
            _COMPARISON_FEATURES,
            refined_pattern=(
                "Compare TIR between groups of dates: weekdays "
                "{split_weekdays} vs weekend days {split_weekends}. "
                "Calculate: 1. Average value per group. 2. Absolute "
                "difference. 3. Which group is higher."
            ),
        ),
        T(
            "usr-daily-pattern",
            "direct",
            "What are my typical 24-hour glucose patterns over {period_a}?",
            (("period_a", "period"),),
            (
                {"name": "plot_daily_trends",
                 "arguments": {"start_date": "{period_a_start}",
                               "end_date": "{period_a_end}",
                               "bin_minutes": 60}},
            ),
            (),
            refined_pattern=(
                "Plot my typical daily CGM glucose trends for {period_a}. "
                "Output the mean values used to generate the plot."
            ),
        ),
        # --- proxy: unobserved behavior via time analysis ------------------
        T(
            "proxy-meal-rise",
            "proxy",
            "Can you infer when I ate my meals on {date_a}?",
            (("date_a", "date"),),
            (
                {"name": "calculate_blood_glucose_excursion",
                 "arguments": {"dates": ["{date_a}"]}},
            ),
            (),
            refined_pattern=(
                "Analyze glucose excursions for {date_a}. Find significant "
                "rapid rises and report timing, magnitude, and speed."
            ),
        ),
        T(
            "proxy-workout-tir",
            "proxy",
            "What was my time in range during my workout between "
            "{span_a_start} and {span_a_end}?",
            (("span_a", "span"),),
            (
                {"name": "extract_features_json",
                 "arguments": {"start_datetime": "{span_a_start}",
                               "end_datetime": "{span_a_end}"}},
            ),
            ("tir_pct", "weartime_pct"),
            refined_pattern=(
                "What is my time in range between {span_a_start} and "
                "{span_a_end}?"
            ),
        ),
        T(
            "proxy-cycle-trend",
            "proxy",
            "What glucose patterns do I see around my cycle, roughly "
            "{period_a}?",
            (("period_a", "period"),),
            (
                {"name": "plot_daily_trends",
                 "arguments": {"start_date": "{period_a_start}",
                               "end_date": "{period_a_end}",
                               "bin_minutes": 60}},
            ),
            (),
            refined_pattern=(
                "Plot my typical daily CGM glucose trends for the following "
                "dates: {period_a_start} to {period_a_end}."
            ),
        ),
        T(
            "proxy-late-night",
            "proxy",
            "Does late-night eating affect my glucose? Compare {window_a} "
            "with {window_b} over {period_a}.",
            (("period_a", "period"), ("window_a", "window"),
             ("window_b", "window_disjoint")),
            (
                {"name": "compute_difference_ratio",
                 "arguments": {"feature": "mean_glucose",
                               "group_a": "{period_a_dates}",
                               "group_b": "{period_a_dates}",
                               "window_a": "{window_a_arg}",
                               "window_b": "{window_b_arg}"}},
            ),
            _COMPARISON_FEATURES,
            refined_pattern=(
                "Compare mean glucose between the time windows {window_a} "
                "and {window_b} over the dates {period_a}."
            ),
        ),
        # --- unanswerable ---------------------------------------------------
        T(
            "un-food-safety",
            "unanswerable",
            "What type of foods are generally safe for me and do not need "
            "large insulin boluses?",
            missing_modality="a dietary log linking foods to doses",
        ),
        T(
            "un-bolus-split",
            "unanswerable",
            "Does splitting insulin boluses help me lower my total insulin "
            "intake?",
            missing_modality="insulin dosing logs",
        ),
        T(
            "un-sensor-error",
            "unanswerable",
            "Can you find moments where my glucose readings were likely "
            "sensor errors?",
            missing_modality="raw sensor signals and calibration records",
        ),
        T(
            "un-forecast",
            "unanswerable",
            "Does my glucose stability over {period_a} predict more "
            "stability in the coming days?",
            (("period_a", "period"),),
            missing_modality="future prediction, outside retrospective analysis",
        ),
        T(
            "un-medication",
            "unanswerable",
            "How will my new medication change my insulin-to-carb ratio "
            "long-term?",
            missing_modality="medication records and clinical judgment",
        ),
        T(
            "un-sleep",
            "unanswerable",
            "How does my sleep quality affect my overnight glucose?",
            missing_modality="sleep logs",
        ),
        T(
            "un-insulin-total",
            "unanswerable",
            "How many units of insulin did I take on {date_a}?",
            (("date_a", "date"),),
            missing_modality="insulin dosing logs",
        ),
    ]


def load_templates(path: str | Path) -> list[QuestionTemplate]:
    """Read additional templates from a JSON document list."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for obj in data:
        out.append(QuestionTemplate(
            id=obj["id"],
            category=obj["category"],
            pattern=obj["pattern"],
            parameters=tuple((p["name"], p["kind"]) for p in obj.get("parameters", [])),
            procedure=tuple(obj.get("procedure", [])),
            required_features=tuple(obj.get("required_features", [])),
            refined_pattern=obj.get("refined_pattern"),
            missing_modality=obj.get("missing_modality"),
        ))
    return out


# ---------------------------------------------------------------------------
# Parameter drawing
# ---------------------------------------------------------------------------

def _subject_days(store: DataStore) -> list[date]:
    days = store.series.dates()
    if not days:
        raise GenerationError(f"subject {store.subject_id} has no data")
    return days


def _draw_period(rng: random.Random, days: list[date], min_len: int, max_len: int):
    first, last = days[0], days[-1]
    total = (last - first).days + 1
    if total < min_len:
        raise GenerationError(
            f"subject span of {total} days too short for a {min_len}-day window"
        )
    length = rng.randint(min_len, min(max_len, total))
    start = first + timedelta(days=rng.randint(0, total - length))
    return start, start + timedelta(days=length - 1)


def _fmt_period(start: date, end: date) -> str:
    return f"{start.isoformat()} to {end.isoformat()}"


def _period_dates(start: date, end: date) -> list[str]:
    return [
        (start + timedelta(days=i)).isoformat()
        for i in range((end - start).days + 1)
    ]


def _draw_window(rng: random.Random, exclude: tuple[int, int] | None = None):
    for _ in range(50):
        start_h = rng.randint(0, 20)
        length = rng.randint(2, 3)
        end_h = start_h + length
        if exclude and not (end_h <= exclude[0] or start_h >= exclude[1]):
            continue
        return start_h, end_h
    raise GenerationError("could not draw a disjoint clock window")


def draw_parameters(
    template: QuestionTemplate, store: DataStore, rng: random.Random
) -> dict[str, Any]:
    """Instantiate a template's parameter domains against one subject."""
    days = _subject_days(store)
    total_span = (days[-1] - days[0]).days + 1
    needs_disjoint = any(kind == "period_disjoint" for _, kind in template.parameters)
    fmt: dict[str, Any] = {}
    drawn: dict[str, Any] = {}
    for name, kind in template.parameters:
        if kind == "date":
            value = rng.choice(days)
            fmt[name] = value.isoformat()
            drawn[name] = value
        elif kind == "date_distinct":
            others = [d for d in days if d != drawn.get("date_a")]
            if not others:
                raise GenerationError("need at least two recorded dates")
            value = rng.choice(others)
            fmt[name] = value.isoformat()
            drawn[name] = value
        elif kind in ("period", "week_period"):
            min_len = 7 if kind == "week_period" else 3
            max_len = 14 if kind == "week_period" else 10
            if needs_disjoint:
                # leave room for the disjoint partner period
                max_len = min(max_len, max(min_len, (total_span - 3) // 2))
            start, end = _draw_period(rng, days, min_len, max_len)
            fmt[name] = _fmt_period(start, end)
            fmt[f"{name}_start"] = start.isoformat()
            fmt[f"{name}_end"] = end.isoformat()
            fmt[f"{name}_dates"] = _period_dates(start, end)
            drawn[name] = (start, end)
        elif kind == "period_disjoint":
            base = drawn.get("period_a")
            if base is None:
                start, end = _draw_period(rng, days, 3, 10)
            else:
                # draw from whichever side of the base period is larger
                before = (base[0] - days[0]).days
                after = (days[-1] - base[1]).days
                side_days = max(before, after)
                if side_days < 3:
                    raise GenerationError(
                        "subject span too short for two disjoint periods"
                    )
                length = rng.randint(3, min(10, side_days))
                if after >= before:
                    lo = base[1] + timedelta(days=1)
                    offset = rng.randint(0, after - length)
                else:
                    lo = days[0]
                    offset = rng.randint(0, before - length)
                start = lo + timedelta(days=offset)
                end = start + timedelta(days=length - 1)
            fmt[name] = _fmt_period(start, end)
            fmt[f"{name}_start"] = start.isoformat()
            fmt[f"{name}_end"] = end.isoformat()
            fmt[f"{name}_dates"] = _period_dates(start, end)
            drawn[name] = (start, end)
        elif kind == "weekday_split":
            start, end = drawn["period_a"]
            all_days = [start + timedelta(days=i) for i in range((end - start).days + 1)]
            weekdays = [d.isoformat() for d in all_days if d.weekday() < 5]
            weekends = [d.isoformat() for d in all_days if d.weekday() >= 5]
            if not weekdays or not weekends:
                raise GenerationError("period lacks both weekdays and weekend days")
            fmt[f"{name}_weekdays"] = weekdays
            fmt[f"{name}_weekends"] = weekends
        elif kind == "span":
            day = rng.choice(days)
            start_h = rng.randint(0, 20)
            length = rng.randint(1, 3)
            start_dt = datetime.combine(day, time(start_h, 0))
            end_dt = start_dt + timedelta(hours=length)
            fmt[f"{name}_start"] = start_dt.strftime("%Y-%m-%d %H:%M")
            fmt[f"{name}_end"] = end_dt.strftime("%Y-%m-%d %H:%M")
            fmt[name] = f"{fmt[f'{name}_start']} to {fmt[f'{name}_end']}"
        elif kind == "window":
            start_h, end_h = _draw_window(rng)
            fmt[name] = f"{start_h:02d}:00 to {end_h:02d}:00"
            fmt[f"{name}_arg"] = f"{start_h:02d}:00-{end_h:02d}:00"
            drawn[name] = (start_h, end_h)
        elif kind == "window_disjoint":
            start_h, end_h = _draw_window(rng, exclude=drawn.get("window_a"))
            fmt[name] = f"{start_h:02d}:00 to {end_h:02d}:00"
            fmt[f"{name}_arg"] = f"{start_h:02d}:00-{end_h:02d}:00"
            drawn[name] = (start_h, end_h)
        elif kind == "feature":
            canonical, surface = rng.choice(_FEATURES)
            fmt[name] = surface
            fmt[f"{name}_canonical"] = canonical
        elif kind == "condition":
            feature, op, threshold, surface = rng.choice(_CONDITIONS)
            fmt[name] = surface
            fmt[f"{name}_feature"] = feature
            fmt[f"{name}_op"] = op
            fmt[f"{name}_threshold"] = threshold
        elif kind == "mode":
            mode, surface = rng.choice((("min", "lowest"), ("max", "highest")))
            fmt[name] = mode
            fmt[f"{name}_surface"] = surface
        else:
            raise GenerationError(f"unknown parameter kind: {kind!r}")
    return fmt


def _text_fmt(fmt: dict[str, Any]) -> dict[str, Any]:
    """Formatting view of the parameters: lists render as list literals."""
    out: dict[str, Any] = {}
    for key, value in fmt.items():
        if isinstance(value, list):
            out[key] = "[" + ", ".join(f"'{v}'" for v in value) + "]"
        else:
            out[key] = value
    return out


def _substitute(value: Any, fmt: dict[str, Any]) -> Any:
    if isinstance(value, str):
        if value.startswith("{") and value.endswith("}") and value.count("{") == 1:
            key = value[1:-1]
            if key not in fmt:
                raise GenerationError(f"procedure references unknown parameter {key!r}")
            return fmt[key]
        return value.format(**_text_fmt(fmt))
    if isinstance(value, list):
        out = []
        for entry in value:
            sub = _substitute(entry, fmt)
            if isinstance(sub, list):
                out.extend(sub)
            else:
                out.append(sub)
        return out
    if isinstance(value, dict):
        return {k: _substitute(v, fmt) for k, v in value.items()}
    return value


def instantiate_procedure(
    template: QuestionTemplate, fmt: dict[str, Any]
) -> list[ToolCall]:
    calls = []
    for skeleton in template.procedure:
        call = _substitute(dict(skeleton), fmt)
        calls.append(ToolCall(name=call["name"], arguments=call["arguments"]))
    return calls


def generate_ground_truth(
    procedure: Sequence[ToolCall], data: DataStore, registry: ToolRegistry
) -> dict[str, Any]:
    """Sequential dispatch; the merged payloads are the ground truth.

    Any dispatch failure aborts generation loudly: partial ground truth is
    never acceptable.
    """
    payloads = []
    for call in procedure:
        result = registry.dispatch(call, data)
        payloads.append(result.payload)
    return merge_payloads(payloads)


def category_counts(mix: dict[str, float], n: int) -> dict[str, int]:
    """Largest-remainder apportionment of n items over the category mix."""
    unknown = set(mix) - set(CATEGORIES)
    if unknown:
        raise GenerationError(f"unknown categories in mix: {sorted(unknown)}")
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise GenerationError(f"mix proportions sum to {total}, expected 1")
    raw = {c: mix.get(c, 0.0) * n for c in CATEGORIES}
    counts = {c: int(raw[c]) for c in CATEGORIES}
    shortfall = n - sum(counts.values())
    by_remainder = sorted(
        CATEGORIES, key=lambda c: (raw[c] - counts[c], c), reverse=True
    )
    for c in by_remainder[:shortfall]:
        counts[c] += 1
    return counts


def instantiate_templates(
    templates: Sequence[QuestionTemplate],
    subjects: dict[str, DataStore],
    mix: dict[str, float],
    n: int,
    seed: int,
    registry: ToolRegistry | None = None,
) -> list[BenchmarkItem]:
    """Deterministically build n items matching the category mix."""
    if not subjects:
        raise GenerationError("no subjects")
    if registry is None:
        registry = build_cgm_registry()
    rng = random.Random(seed)
    counts = category_counts(mix, n)
    by_category: dict[str, list[QuestionTemplate]] = {c: [] for c in CATEGORIES}
    for t in templates:
        by_category[t.category].append(t)
    subject_ids = sorted(subjects)
    items: list[BenchmarkItem] = []
    index = 0
    for category in CATEGORIES:
        pool = by_category[category]
        if counts[category] and not pool:
            raise GenerationError(f"no templates for category {category!r}")
        for k in range(counts[category]):
            template = pool[k % len(pool)]
            subject_id = subject_ids[rng.randrange(len(subject_ids))]
            store = subjects[subject_id]
            fmt = draw_parameters(template, store, rng)
            question = template.pattern.format(**_text_fmt(fmt))
            answerable = category != "unanswerable"
            if answerable:
                refined = (template.refined_pattern or template.pattern).format(
                    **_text_fmt(fmt)
                )
            else:
                refined = (
                    f"This question cannot be answered from CGM glucose data "
                    f"alone; it requires {template.missing_modality}."
                )
            procedure = instantiate_procedure(template, fmt)
            ground_truth = generate_ground_truth(procedure, store, registry)
            required = [
                r.format(**_text_fmt(fmt)) for r in template.required_features
            ]
            last_day = _subject_days(store)[-1]
            reference_date = last_day + timedelta(days=1)
            items.append(BenchmarkItem(
                item_id=f"item-{index:05d}",
                subject_id=subject_id,
                category=category,
                question=question,
                refined_question=refined,
                is_answerable=answerable,
                reference_date=reference_date,
                reference_datetime=datetime.combine(reference_date, time(9, 0)),
                procedure=procedure,
                ground_truth=ground_truth,
                required_features=required,
                params={k2: v for k2, v in fmt.items()},
            ))
            index += 1
    return items


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def emit_benchmark(items: Sequence[BenchmarkItem], path: str | Path) -> None:
    """JSON-lines: a schema-versioned header line, then one item per line."""
    path = Path(path)
    header = {
        "kind": BENCHMARK_KIND,
        "schema_version": SCHEMA_VERSION,
        "count": len(items),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for item in items:
            fh.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")


def load_benchmark(path: str | Path) -> tuple[dict[str, Any], list[BenchmarkItem]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise DataError(f"empty benchmark file: {path}")
    header = json.loads(lines[0])
    if header.get("kind") != BENCHMARK_KIND:
        raise DataError(f"not a benchmark file: {path}")
    items = [BenchmarkItem.from_dict(json.loads(line)) for line in lines[1:]]
    return header, items
