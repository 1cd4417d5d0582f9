from __future__ import annotations

import random
from datetime import date, datetime, time, timedelta

import pytest

from cgmquery.data import GlucoseReading, GlucoseSeries


def make_series(
    values,
    start: datetime = datetime(2024, 1, 1, 0, 0),
    rate_minutes: float = 5.0,
    subject_id: str = "test",
):
    readings = tuple(
        GlucoseReading(start + timedelta(minutes=i * rate_minutes), float(v))
        for i, v in enumerate(values)
    )
    return GlucoseSeries(
        subject_id=subject_id,
        readings=readings,
        declared_interval=rate_minutes,
    )


def make_day(day: date, n_readings: int, n_in_range: int, rate_minutes: int = 5):
    """One day with exact reading and in-range counts (in=100, out=250)."""
    assert n_in_range <= n_readings <= 1440 // rate_minutes
    readings = []
    start = datetime.combine(day, time.min)
    for i in range(n_readings):
        value = 100.0 if i < n_in_range else 250.0
        readings.append(GlucoseReading(start + timedelta(minutes=i * rate_minutes), value))
    return readings


def random_series(rng: random.Random, max_readings: int = 400, subject_id: str = "rand"):
    n = rng.randint(2, max_readings)
    rate = rng.choice([5, 15])
    start = datetime(2024, 1, 1) + timedelta(minutes=rng.randint(0, 1440))
    readings = []
    ts = start
    for _ in range(n):
        readings.append(GlucoseReading(ts, round(rng.uniform(41, 399), 1)))
        gap = rate if rng.random() > 0.1 else rate * rng.randint(2, 8)
        ts += timedelta(minutes=gap)
    return GlucoseSeries(subject_id=subject_id, readings=tuple(readings),
                         declared_interval=float(rate))


@pytest.fixture
def rng():
    return random.Random(20240710)
