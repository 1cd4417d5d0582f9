"""Independent brute-force recomputations used to freeze expected values.

Everything here is a straight per-reading loop written against the stated
definitions, deliberately ignorant of the library's implementation paths.
"""
from __future__ import annotations

from datetime import timedelta


def oracle_range_counts(values, low, high):
    below = within = above = 0
    for v in values:
        if v < low:
            below += 1
        elif v > high:
            above += 1
        else:
            within += 1
    return below, within, above


def oracle_mean(values):
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def oracle_pop_std(values):
    import math

    m = oracle_mean(values)
    sq = 0.0
    for v in values:
        sq += (v - m) ** 2
    return math.sqrt(sq / len(values))


def oracle_min_max(values):
    lo = hi = values[0]
    for v in values[1:]:
        lo = v if v < lo else lo
        hi = v if v > hi else hi
    return lo, hi


def oracle_event_count(readings, beyond, rate_minutes, min_duration):
    """Count maximal beyond-threshold runs lasting >= min_duration.

    Run duration is (last - first) + one sampling interval; a gap of more
    than 2 x rate between consecutive beyond readings splits the run.
    """
    events = 0
    run: list = []

    def close():
        nonlocal events
        if run:
            dur = (run[-1].timestamp - run[0].timestamp).total_seconds() / 60.0
            if dur + rate_minutes >= min_duration:
                events += 1
        run.clear()

    for r in readings:
        if not beyond(r.value):
            close()
            continue
        if run and (r.timestamp - run[-1].timestamp).total_seconds() / 60.0 > 2 * rate_minutes:
            close()
        run.append(r)
    close()
    return events


def oracle_excursion_windows(readings, speed_threshold, window_minutes):
    """All (start, end, magnitude, speed) placements via an O(n^2) scan."""
    out = []
    delta = timedelta(minutes=window_minutes)
    for i, a in enumerate(readings):
        for b in readings[i + 1:]:
            if b.timestamp - a.timestamp == delta:
                magnitude = b.value - a.value
                speed = magnitude / window_minutes
                if abs(speed) > speed_threshold:
                    out.append((a.timestamp, b.timestamp, magnitude, speed))
            elif b.timestamp - a.timestamp > delta:
                break
    return out


def oracle_weartime_pct(n_observed, window_minutes, rate_minutes):
    expected = window_minutes / rate_minutes
    pct = 100.0 * n_observed / expected
    return min(100.0, max(0.0, pct))
