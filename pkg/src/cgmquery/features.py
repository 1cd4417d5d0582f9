"""Canonical feature vocabulary and alias resolution.

Every surface that exchanges feature names (sandbox payloads, benchmark
ground truth, the judge) speaks the canonical snake_case vocabulary. The
alias table maps published surface spellings ("avg bg", "TIR") onto it and
is extensible at runtime; unmatched names resolve to their normalized form
so the judge can log them for manual extension.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .metrics import FEATURE_KEYS

#: Aggregate-level names that appear in payloads beyond the daily record.
AGGREGATE_KEYS = (
    "days_all",
    "days_sufficient_weartime",
    "days_satisfied",
    "days_evaluated",
    "avg_group_a",
    "avg_group_b",
    "absolute_difference",
    "ratio",
    "higher_group",
    "magnitude",
    "speed",
    "excursion_count",
    "n_readings",
    "sampling_rate_minutes",
)


@dataclass(frozen=True)
class FeatureAlias:
    canonical: str
    aliases: tuple[str, ...]


DEFAULT_ALIASES: tuple[FeatureAlias, ...] = (
    FeatureAlias("tir_pct", ("tir", "time_in_range", "time_in_range_pct", "tir_percent")),
    FeatureAlias("tbr_pct", ("tbr", "time_below_range", "tbr_percent")),
    FeatureAlias("tar_pct", ("tar", "time_above_range", "tar_percent")),
    FeatureAlias(
        "mean_glucose",
        ("avg_bg", "average_glucose", "mean_blood_glucose", "avg_glucose",
         "mean_bg", "average_blood_glucose", "mean", "avg"),
    ),
    FeatureAlias(
        "std_glucose",
        ("sd", "std", "stdev", "standard_deviation", "std_bg", "sd_glucose"),
    ),
    FeatureAlias("cv_pct", ("cv", "gv", "glycemic_variability", "coefficient_of_variation")),
    FeatureAlias("est_a1c_pct", ("a1c", "ea1c", "estimated_a1c", "est_a1c")),
    FeatureAlias("gmi_pct", ("gmi", "egmi", "glucose_management_indicator")),
    FeatureAlias(
        "weartime_pct",
        ("weartime", "adherence", "wear_time", "cgm_weartime", "weartime_percent",
         "adherence_pct"),
    ),
    FeatureAlias("weartime_sufficient", ("good_weartime", "data_sufficiency", "sufficient_weartime")),
    FeatureAlias("hypo_events", ("hypoglycemia_events", "hypos", "lows", "hypo_count")),
    FeatureAlias("hyper_events", ("hyperglycemia_events", "hypers", "highs", "hyper_count")),
    FeatureAlias("min_glucose", ("min_bg", "minimum_glucose", "lowest_glucose", "min")),
    FeatureAlias("max_glucose", ("max_bg", "maximum_glucose", "highest_glucose", "max")),
    FeatureAlias("days_sufficient_weartime", ("days_with_good_weartime", "days_good_weartime")),
    FeatureAlias("days_all", ("days_with_data", "total_days")),
    FeatureAlias("days_satisfied", ("matching_days", "days_meeting_condition")),
)

_CANONICAL = set(FEATURE_KEYS) | set(AGGREGATE_KEYS)

_AFFIX_RE = re.compile(r"^(avg_|min_|max_)(.+?)(_all|_sufficient_weartime)?$")


def normalize_feature(name: str) -> str:
    """Lowercase, trim, and collapse separators to underscores."""
    cleaned = re.sub(r"[\s\-/]+", "_", name.strip().lower())
    return re.sub(r"_+", "_", cleaned).strip("_")


def build_alias_map(
    aliases: Iterable[FeatureAlias] = DEFAULT_ALIASES,
) -> dict[str, str]:
    table: dict[str, str] = {}
    for entry in aliases:
        for alias in entry.aliases:
            key = normalize_feature(alias)
            if key in table and table[key] != entry.canonical:
                raise ValueError(f"alias {alias!r} maps to two canonical names")
            table[key] = entry.canonical
    return table


_DEFAULT_MAP = build_alias_map()


def canonical_feature(
    name: str,
    alias_map: dict[str, str] | None = None,
    unmatched: list[str] | None = None,
) -> str:
    """Resolve a surface feature name to its canonical form.

    Composite names keep their affixes: "avg_TIR_all" resolves to
    "avg_tir_pct_all". Names the table cannot place resolve to their
    normalized form and are appended to ``unmatched`` when provided.
    """
    table = _DEFAULT_MAP if alias_map is None else alias_map
    norm = normalize_feature(name)
    if norm in _CANONICAL:
        return norm
    if norm in table:
        return table[norm]
    m = _AFFIX_RE.match(norm)
    if m and (m.group(1) or m.group(3)):
        inner = m.group(2)
        resolved = table.get(inner, inner if inner in _CANONICAL else None)
        if resolved is not None:
            return f"{m.group(1) or ''}{resolved}{m.group(3) or ''}"
    if unmatched is not None:
        unmatched.append(name)
    return norm


_WEARTIME_EQUIV_ZERO = ("weartime_pct", "weartime_sufficient")


def sentinel_class(canonical: str) -> str:
    """How -1 compares to 0 for this feature.

    "weartime": -1 and 0 both mean "no data" and are equivalent.
    "count": -1 (missing data) differs from 0 (zero occurrences / zero
    percent) -- distinct clinical states.
    """
    if canonical == "weartime_sufficient":
        return "weartime"
    if "weartime_pct" in canonical:
        return "weartime"
    return "count"


def known_daily_feature(name: str) -> str:
    """Resolve to a daily-record feature or raise KeyError."""
    canon = canonical_feature(name)
    if canon not in FEATURE_KEYS:
        raise KeyError(f"not a daily feature: {name!r}")
    return canon
