"""Layer-wise scoring: feasibility classification, feature-call matching
with P/R/F1 and value accuracy, readability, and latency statistics.

The deterministic rule-based judge is the default scorer; an LLM judge
adapter exists for parity runs but nothing here requires network access.

Matching rules, applied per (date_key, feature):

* feature names align semantically via the alias table ("avg bg" ==
  "mean_glucose");
* values match within a relative +/-1% tolerance, absolute 0.01 when the
  reference is zero;
* a reference of -1 (no data) with the feature absent on the agent side is
  a correct match;
* -1 vs 0 is equivalent for weartime-like features (both mean "no data")
  and a mismatch for counts/percentages (different clinical states);
* when ``required_features`` is given, only those features are evaluated
  and agent extras are ignored.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .features import (  # noqa: F401  (re-exported vocabulary surface)
    DEFAULT_ALIASES,
    FeatureAlias,
    build_alias_map,
    canonical_feature,
    normalize_feature,
    sentinel_class,
)

SENTINEL = -1.0
RELATIVE_TOLERANCE = 0.01
ZERO_TOLERANCE = 0.01


def value_match(gt: float, predicted: float | None, feature: str) -> bool:
    """Does a predicted value match the reference for this feature?"""
    canon = canonical_feature(feature)
    klass = sentinel_class(canon)
    if gt == SENTINEL:
        if predicted is None or predicted == SENTINEL:
            return True
        if klass == "weartime" and predicted == 0:
            return True
        return False
    if predicted is None:
        return False
    if predicted == SENTINEL:
        if klass == "weartime" and gt == 0:
            return True
        return False
    if gt == 0:
        return abs(predicted) <= ZERO_TOLERANCE
    return abs(predicted - gt) <= RELATIVE_TOLERANCE * abs(gt)


@dataclass
class CallMatchReport:
    """Per-item judge output feeding the micro-averaged layer metrics."""

    num_gt_features: int
    num_agent_features: int
    num_overlap: int
    features_in_gt_not_in_agent: list[str] = field(default_factory=list)
    features_in_agent_not_in_gt: list[str] = field(default_factory=list)
    feature_value_comparison: dict[str, bool] = field(default_factory=dict)
    malformed: bool = False
    unmatched_names: list[str] = field(default_factory=list)

    @property
    def values_compared(self) -> int:
        return len(self.feature_value_comparison)

    @property
    def values_matched(self) -> int:
        return sum(1 for ok in self.feature_value_comparison.values() if ok)


def _canonical_payload(
    payload: Any,
    alias_map: dict[str, str] | None,
    unmatched: list[str],
) -> dict[str, dict[str, float]] | None:
    if not isinstance(payload, dict):
        return None
    out: dict[str, dict[str, float]] = {}
    for date_key, features in payload.items():
        if not isinstance(features, dict):
            return None
        row: dict[str, float] = {}
        for name, value in features.items():
            if isinstance(value, bool):
                value = 1.0 if value else 0.0
            if not isinstance(value, (int, float)):
                return None
            canon = canonical_feature(str(name), alias_map, unmatched)
            row[canon] = float(value)
        out[str(date_key)] = row
    return out


def match_calls(
    gt_payload: dict[str, Any],
    agent_payload: Any,
    required_features: Sequence[str] | None = None,
    alias_map: dict[str, str] | None = None,
) -> CallMatchReport:
    """Align agent output with ground truth and compare values.

    A payload that does not parse as {date_key: {feature: number}} scores
    as a total miss and is flagged ``malformed``.
    """
    unmatched: list[str] = []
    gt = _canonical_payload(gt_payload, alias_map, unmatched)
    if gt is None:
        raise ValueError("ground-truth payload is not a feature mapping")
    agent = _canonical_payload(agent_payload, alias_map, unmatched)
    required = None
    if required_features:
        required = {canonical_feature(f, alias_map) for f in required_features}

    def keep(name: str) -> bool:
        return required is None or name in required

    gt_set = {
        (dk, name)
        for dk, row in gt.items()
        for name in row
        if keep(name)
    }
    if agent is None:
        n_gt = len(gt_set)
        return CallMatchReport(
            num_gt_features=n_gt,
            num_agent_features=0,
            num_overlap=0,
            features_in_gt_not_in_agent=sorted(f"{dk}::{n}" for dk, n in gt_set),
            malformed=True,
            unmatched_names=unmatched,
        )
    agent_set = {
        (dk, name)
        for dk, row in agent.items()
        for name in row
        if keep(name)
    }

    overlap = gt_set & agent_set
    fn = gt_set - agent_set
    fp = agent_set - gt_set
    comparisons: dict[str, bool] = {}
    for dk, name in sorted(overlap):
        comparisons[f"{dk}::{name}"] = value_match(gt[dk][name], agent[dk][name], name)
    # A -1 reference with the feature simply absent on the agent side counts
    # as overlap plus a successful comparison: both sides said "no data".
    promoted = set()
    for dk, name in sorted(fn):
        if gt[dk][name] == SENTINEL and dk in agent and name not in agent[dk]:
            comparisons[f"{dk}::{name}"] = True
            promoted.add((dk, name))
    fn -= promoted
    overlap |= promoted

    return CallMatchReport(
        num_gt_features=len(gt_set),
        num_agent_features=len(agent_set),
        num_overlap=len(overlap),
        features_in_gt_not_in_agent=sorted(f"{dk}::{n}" for dk, n in fn),
        features_in_agent_not_in_gt=sorted(f"{dk}::{n}" for dk, n in fp),
        feature_value_comparison=comparisons,
        unmatched_names=unmatched,
    )


@dataclass(frozen=True)
class LayerMetrics:
    precision: float
    recall: float
    f1: float
    n: int
    accuracy: float | None = None
    value_accuracy: float | None = None

    def as_dict(self) -> dict[str, float | int | None]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "value_accuracy": self.value_accuracy,
            "n": self.n,
        }


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def layer2_metrics(reports: Iterable[CallMatchReport]) -> LayerMetrics:
    """Micro-averaged function/feature-call metrics plus value accuracy."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    overlap = sum(r.num_overlap for r in reports)
    agent = sum(r.num_agent_features for r in reports)
    gt = sum(r.num_gt_features for r in reports)
    compared = sum(r.values_compared for r in reports)
    matched = sum(r.values_matched for r in reports)
    precision = overlap / agent if agent else 0.0
    recall = overlap / gt if gt else 0.0
    return LayerMetrics(
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        value_accuracy=matched / compared if compared else 0.0,
        n=len(reports),
    )


def layer1_metrics(
    labels: Sequence[bool], predictions: Sequence[bool]
) -> LayerMetrics:
    """Feasibility-classification metrics; positive class is "answerable"."""
    if len(labels) != len(predictions):
        raise ValueError(f"length mismatch: {len(labels)} vs {len(predictions)}")
    if not labels:
        raise ValueError("no labels")
    tp = fp = fn = tn = 0
    for y, p in zip(labels, predictions):
        if y and p:
            tp += 1
        elif not y and p:
            fp += 1
        elif y and not p:
            fn += 1
        else:
            tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return LayerMetrics(
        accuracy=(tp + tn) / len(labels),
        precision=precision,
        recall=recall,
        f1=_f1(precision, recall),
        n=len(labels),
    )


# ---------------------------------------------------------------------------
# Readability
# ---------------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_WORD_STRIP = re.compile(r"[^a-zA-Z0-9']+")
_VOWEL_GROUPS = re.compile(r"[aeiouy]+")


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT.split(text.strip()) if s.strip()]


def split_words(text: str) -> list[str]:
    out = []
    for token in text.split():
        word = _WORD_STRIP.sub("", token)
        if word:
            out.append(word)
    return out


def count_syllables(word: str) -> int:
    """Vowel-group counting with the silent-e rule.

    Pinned heuristic: count maximal [aeiouy]+ runs; subtract one for a
    trailing 'e' that is not part of a consonant+'le' ending; floor at 1.
    Readability values depend on this heuristic, so it is frozen here.
    """
    w = "".join(c for c in word.lower() if c.isalpha())
    if not w:
        return 0
    groups = len(_VOWEL_GROUPS.findall(w))
    if (
        groups > 1
        and w.endswith("e")
        and not (len(w) >= 3 and w.endswith("le") and w[-3] not in "aeiouy")
    ):
        groups -= 1
    return max(groups, 1)


@dataclass(frozen=True)
class ReadabilityReport:
    avg_words: float
    flesch_reading_ease: float
    flesch_kincaid_grade: float
    n: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "avg_words": self.avg_words,
            "flesch_reading_ease": self.flesch_reading_ease,
            "flesch_kincaid_grade": self.flesch_kincaid_grade,
            "n": self.n,
        }


def readability_of_text(text: str) -> tuple[float, float, int] | None:
    sentences = split_sentences(text)
    words = split_words(text)
    if not sentences or not words:
        return None
    syllables = sum(count_syllables(w) for w in words)
    wps = len(words) / len(sentences)
    spw = syllables / len(words)
    fre = 206.835 - 1.015 * wps - 84.6 * spw
    fk = 0.39 * wps + 11.8 * spw - 15.59
    return fre, fk, len(words)


def readability(responses: Iterable[str]) -> ReadabilityReport:
    """Average Flesch Reading Ease / FK grade over non-blank responses."""
    fres: list[float] = []
    fks: list[float] = []
    words: list[int] = []
    for text in responses:
        scored = readability_of_text(text)
        if scored is None:
            continue
        fre, fk, n_words = scored
        fres.append(fre)
        fks.append(fk)
        words.append(n_words)
    if not fres:
        raise ValueError("no scoreable responses")
    n = len(fres)
    return ReadabilityReport(
        avg_words=sum(words) / n,
        flesch_reading_ease=sum(fres) / n,
        flesch_kincaid_grade=sum(fks) / n,
        n=n,
    )


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyReport:
    mean_seconds: float
    median_seconds: float
    p95_seconds: float
    mean_backend_calls: float
    n: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "mean_seconds": self.mean_seconds,
            "median_seconds": self.median_seconds,
            "p95_seconds": self.p95_seconds,
            "mean_backend_calls": self.mean_backend_calls,
            "n": self.n,
        }


def nearest_rank_percentile(values: Sequence[float], pct: float) -> float:
    if not values:
        raise ValueError("no values")
    ordered = sorted(values)
    rank = math.ceil(pct / 100.0 * len(ordered))
    rank = max(1, min(rank, len(ordered)))
    return ordered[rank - 1]


def latency_stats(traces: Iterable[dict[str, Any]]) -> LatencyReport:
    """Latency summary over per-query traces.

    Each trace carries ``latency_seconds`` and ``backend_calls``.
    """
    latencies: list[float] = []
    calls: list[float] = []
    for t in traces:
        latencies.append(float(t["latency_seconds"]))
        calls.append(float(t.get("backend_calls", 0)))
    if not latencies:
        raise ValueError("no traces")
    ordered = sorted(latencies)
    n = len(ordered)
    median = (
        ordered[n // 2]
        if n % 2
        else (ordered[n // 2 - 1] + ordered[n // 2]) / 2.0
    )
    return LatencyReport(
        mean_seconds=sum(latencies) / n,
        median_seconds=median,
        p95_seconds=nearest_rank_percentile(latencies, 95.0),
        mean_backend_calls=sum(calls) / n,
        n=n,
    )


# ---------------------------------------------------------------------------
# Optional LLM judge adapter
# ---------------------------------------------------------------------------

def llm_judge_adapter(
    backend,
    question: str,
    gt_payload: dict[str, Any],
    agent_payload: Any,
    required_features: Sequence[str] | None,
    judge_prompt: str,
) -> CallMatchReport:
    """Send the judge prompt to a backend and parse its comparison schema.

    Parity tooling only; the deterministic matcher stays the default. A
    reply that does not follow the schema flags the item as malformed.
    """
    message = json.dumps(
        {
            "question": question,
            "required_features": list(required_features or []),
            "gt_res": gt_payload,
            "agent_result": agent_payload,
        },
        sort_keys=True,
    )
    reply = backend.complete(judge_prompt, [{"role": "user", "content": message}])
    try:
        obj = json.loads(reply)
        comparison = obj["comparison"]
        return CallMatchReport(
            num_gt_features=int(comparison["num_gt_features"]),
            num_agent_features=int(comparison["num_agent_features"]),
            num_overlap=int(comparison["num_overlap"]),
            features_in_gt_not_in_agent=list(
                comparison.get("features_in_gt_not_in_agent", [])
            ),
            features_in_agent_not_in_gt=list(
                comparison.get("features_in_agent_not_in_gt", [])
            ),
            feature_value_comparison={
                str(k): bool(v)
                for k, v in comparison.get("feature_value_comparison", {}).items()
            },
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError):
        return CallMatchReport(
            num_gt_features=0,
            num_agent_features=0,
            num_overlap=0,
            malformed=True,
        )


def judge_disagreement(
    deterministic: Sequence[CallMatchReport],
    other: Sequence[CallMatchReport],
) -> dict[str, float]:
    """Per-metric mean absolute error between two judges' item reports."""
    if len(deterministic) != len(other):
        raise ValueError("report lists differ in length")
    if not deterministic:
        raise ValueError("no reports")

    def item_pr(r: CallMatchReport) -> tuple[float, float]:
        p = r.num_overlap / r.num_agent_features if r.num_agent_features else 0.0
        rec = r.num_overlap / r.num_gt_features if r.num_gt_features else 0.0
        return p, rec

    n = len(deterministic)
    mae_p = sum(
        abs(item_pr(a)[0] - item_pr(b)[0]) for a, b in zip(deterministic, other)
    ) / n
    mae_r = sum(
        abs(item_pr(a)[1] - item_pr(b)[1]) for a, b in zip(deterministic, other)
    ) / n
    return {"mae_precision": mae_p, "mae_recall": mae_r, "n": n}
