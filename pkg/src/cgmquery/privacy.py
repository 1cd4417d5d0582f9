"""Privacy-boundary enforcement.

Two independent checks guard the boundary:

* a structural payload scan applied to every tool result before it leaves
  the sandbox (no reading-shaped sequence longer than trend-bin
  granularity may cross), and
* a text scan used by tests and audits to prove that no raw
  (timestamp, value) pair from a series ever appears in backend prompts or
  service responses.

Both are deliberately structural rather than semantic: cheap, testable,
and conservative.
"""
from __future__ import annotations

import re
from typing import Any, Iterable

from .data import GlucoseSeries, parse_timestamp

#: Densest allowed aggregate: a full day of trend bins at 5-minute width.
MAX_SERIES_POINTS = 288

_TS_RE = re.compile(r"\d{4}-\d{2}-\d{2}[ T]\d{2}:\d{2}(?::\d{2})?")
_NUM_RE = re.compile(r"-?\d+(?:\.\d+)?")


class PrivacyViolation(Exception):
    """A payload or text tried to carry raw readings across the boundary."""


def _looks_like_reading(entry: Any) -> bool:
    """True for (timestamp, number) pairs or dicts carrying both."""
    if isinstance(entry, (list, tuple)) and len(entry) == 2:
        a, b = entry
        return (
            isinstance(a, str)
            and parse_timestamp(a) is not None
            and isinstance(b, (int, float))
        )
    if isinstance(entry, dict):
        has_ts = any(
            isinstance(v, str) and parse_timestamp(v) is not None
            for v in entry.values()
        )
        has_num = any(isinstance(v, (int, float)) for v in entry.values())
        return has_ts and has_num
    return False


def scan_payload_structure(
    payload: Any, max_points: int = MAX_SERIES_POINTS
) -> list[str]:
    """Violation descriptions for reading-shaped structures beyond the cap.

    Flags (a) any list with more than ``max_points`` reading-like entries
    and (b) any mapping with more than ``max_points`` timestamped keys.
    """
    violations: list[str] = []

    def walk(node: Any, path: str) -> None:
        if isinstance(node, dict):
            stamped_keys = sum(
                1 for k in node
                if isinstance(k, str) and _TS_RE.search(k) is not None
            )
            if stamped_keys > max_points:
                violations.append(
                    f"{path}: {stamped_keys} timestamped keys exceeds cap {max_points}"
                )
            for k, v in node.items():
                walk(v, f"{path}.{k}")
        elif isinstance(node, (list, tuple)):
            reading_like = sum(1 for e in node if _looks_like_reading(e))
            if reading_like > max_points:
                violations.append(
                    f"{path}: {reading_like} reading-like entries exceeds cap {max_points}"
                )
            for i, e in enumerate(node):
                walk(e, f"{path}[{i}]")

    walk(payload, "$")
    return violations


def assert_payload_safe(payload: Any, max_points: int = MAX_SERIES_POINTS) -> None:
    violations = scan_payload_structure(payload, max_points)
    if violations:
        raise PrivacyViolation("; ".join(violations))


def scan_text_for_readings(
    text: str,
    series: GlucoseSeries,
    window_chars: int = 32,
) -> list[tuple[str, float]]:
    """Raw (timestamp, value) pairs from ``series`` leaked into ``text``.

    A leak is a timestamp that belongs to the series followed, within
    ``window_chars`` characters, by a number equal to that reading's value.
    Numbers that are themselves part of another timestamp are skipped, so
    aggregate keys like "(ts, ts)" do not false-positive.
    """
    index = {r.timestamp: r.value for r in series.readings}
    ts_spans = [(m.start(), m.end(), m.group()) for m in _TS_RE.finditer(text)]
    covered: list[tuple[int, int]] = [(s, e) for s, e, _ in ts_spans]

    def inside_timestamp(pos: int) -> bool:
        return any(s <= pos < e for s, e in covered)

    leaks: list[tuple[str, float]] = []
    for start, end, stamp in ts_spans:
        ts = parse_timestamp(stamp)
        if ts is None or ts not in index:
            continue
        value = index[ts]
        tail = text[end:end + window_chars]
        for m in _NUM_RE.finditer(tail):
            if inside_timestamp(end + m.start()):
                continue
            try:
                candidate = float(m.group())
            except ValueError:
                continue
            if abs(candidate - value) < 1e-9:
                leaks.append((stamp, value))
                break
    return leaks


def scan_texts(
    texts: Iterable[str], series: GlucoseSeries
) -> list[tuple[str, float]]:
    leaks: list[tuple[str, float]] = []
    for t in texts:
        leaks.extend(scan_text_for_readings(t, series))
    return leaks
