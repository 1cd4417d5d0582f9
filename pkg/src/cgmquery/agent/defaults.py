"""Documented interpretation defaults for the pipeline.

Vague temporal terms have no universal boundaries; non-interactive runs
fall back to this table (interactive runs ask the user instead). The table
is configuration, not a code constant: callers may pass their own mapping,
and the CLI accepts an override file. These defaults are a known source of
divergence when comparing against other interpretations of the same
question.
"""
from __future__ import annotations

#: term -> (start, end) clock window, local time, half-open.
VAGUE_TIME_WINDOWS: dict[str, tuple[str, str]] = {
    "dawn": ("04:00", "07:00"),
    "early morning": ("04:00", "08:00"),
    "morning": ("06:00", "12:00"),
    "midday": ("11:00", "14:00"),
    "afternoon": ("12:00", "17:00"),
    "evening": ("17:00", "21:00"),
    "night": ("21:00", "23:59"),
    "overnight": ("00:00", "06:00"),
    "breakfast": ("06:00", "09:00"),
    "lunch": ("11:00", "14:00"),
    "dinner": ("17:00", "20:00"),
}

#: Feature set assumed when a query asks "how was my glucose" without
#: naming a metric: report the average plus data sufficiency.
DEFAULT_INTENT_FEATURES: tuple[str, ...] = ("mean_glucose", "weartime_pct")

#: Sampling temperatures by backend style; exposed as configuration.
DEFAULT_TEMPERATURE_PROPRIETARY = 1.0
DEFAULT_TEMPERATURE_OPEN_WEIGHT = 0.6

DEFAULT_MAX_STEPS = 12
DEFAULT_MAX_CLARIFICATION_ROUNDS = 1
DEFAULT_TONE = "warm and supportive"
DEFAULT_COMPLEXITY = "general adult reader"
