from __future__ import annotations

import random
from datetime import date, datetime, time, timedelta

import pytest

from cgmquery.data import (
    ClockWindow,
    DataError,
    DateSelection,
    GlucoseReading,
    GlucoseSeries,
    SynthesisSpec,
    compute_weartime,
    estimate_sampling_rate,
    filter_series,
    load_cgm_csv,
    save_cgm_csv,
    synthesize_series,
)
from conftest import make_series
from _oracles import oracle_weartime_pct


def write_csv(tmp_path, rows, header="timestamp,glucose_mg_dl"):
    path = tmp_path / "cgm.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


class TestLoadCsv:
    def test_three_row_parse(self, tmp_path):
        path = write_csv(tmp_path, [
            "2024-01-01 00:00,100",
            "2024-01-01 00:05,110",
            "2024-01-01 00:10,105",
        ])
        series = load_cgm_csv(path)
        assert len(series) == 3
        assert series.values == (100.0, 110.0, 105.0)
        assert estimate_sampling_rate(series) == 5.0

    def test_shuffled_rows_sort_identically(self, tmp_path):
        rows = [f"2024-01-01 00:{m:02d},{100 + m}" for m in range(0, 50, 5)]
        sorted_path = write_csv(tmp_path, rows)
        shuffled = rows[:]
        random.Random(3).shuffle(shuffled)
        shuffled_path = tmp_path / "shuffled.csv"
        shuffled_path.write_text("timestamp,glucose_mg_dl\n" + "\n".join(shuffled) + "\n")
        assert load_cgm_csv(sorted_path).readings == load_cgm_csv(shuffled_path).readings

    def test_bad_row_dropped_and_counted(self, tmp_path):
        rows = [f"2024-01-01 00:{m:02d},{100 + m}" for m in range(0, 50, 5)]
        rows.insert(1, "2024-01-01 00:05,abc")  # shares a minute: unparseable value
        # hand count: 10 valid rows, 1 dropped
        path = write_csv(tmp_path, rows)
        series = load_cgm_csv(path)
        assert len(series) == 10
        assert series.dropped_rows == 1

    def test_duplicate_timestamp_keeps_first(self, tmp_path):
        path = write_csv(tmp_path, [
            "2024-01-01 00:00,100",
            "2024-01-01 00:00,200",
            "2024-01-01 00:05,110",
        ])
        series = load_cgm_csv(path)
        assert series.values == (100.0, 110.0)
        assert series.dropped_rows == 1

    def test_nonpositive_and_absurd_values_dropped(self, tmp_path):
        path = write_csv(tmp_path, [
            "2024-01-01 00:00,0",
            "2024-01-01 00:05,-5",
            "2024-01-01 00:10,1200",
            "2024-01-01 00:15,95",
        ])
        series = load_cgm_csv(path)
        assert series.values == (95.0,)
        assert series.dropped_rows == 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_cgm_csv(tmp_path / "nope.csv")

    def test_zero_parseable_rows(self, tmp_path):
        path = write_csv(tmp_path, ["not-a-date,abc"])
        with pytest.raises(DataError):
            load_cgm_csv(path)

    def test_ambiguous_columns_without_hints(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("when,reading\n2024-01-01 00:00,100\n")
        with pytest.raises(DataError):
            load_cgm_csv(path)
        series = load_cgm_csv(path, timestamp_col="when", glucose_col="reading")
        assert len(series) == 1

    def test_iso_t_separator_accepted(self, tmp_path):
        path = write_csv(tmp_path, ["2024-01-01T06:30:00,123.5"])
        series = load_cgm_csv(path)
        assert series.readings[0].timestamp == datetime(2024, 1, 1, 6, 30)

    def test_save_load_round_trip(self, tmp_path):
        original = make_series([100, 110, 105.5])
        save_cgm_csv(original, tmp_path / "out.csv")
        reloaded = load_cgm_csv(tmp_path / "out.csv", subject_id="test")
        assert reloaded.readings == original.readings
        # idempotence: loading an already-sorted export once more changes nothing
        save_cgm_csv(reloaded, tmp_path / "out2.csv")
        assert load_cgm_csv(tmp_path / "out2.csv").readings == original.readings


class TestSamplingRate:
    def test_regular_gaps(self):
        series = make_series([100] * 5, rate_minutes=5)
        series = GlucoseSeries("t", series.readings)  # drop the declared hint
        assert estimate_sampling_rate(series) == 5.0

    def test_median_with_missing_sample(self):
        # gaps 15,15,45,15 -> median 15
        start = datetime(2024, 1, 1)
        offsets = [0, 15, 30, 75, 90]
        readings = tuple(
            GlucoseReading(start + timedelta(minutes=m), 100.0) for m in offsets
        )
        assert estimate_sampling_rate(GlucoseSeries("t", readings)) == 15.0

    def test_median_gaps_5_5_10_5_5(self):
        start = datetime(2024, 1, 1)
        offsets = [0, 5, 10, 20, 25, 30]
        readings = tuple(
            GlucoseReading(start + timedelta(minutes=m), 100.0) for m in offsets
        )
        assert estimate_sampling_rate(GlucoseSeries("t", readings)) == 5.0

    def test_single_missing_sample_invariance(self):
        start = datetime(2024, 1, 1)
        full = [start + timedelta(minutes=5 * i) for i in range(50)]
        gappy = full[:20] + full[21:]
        series = GlucoseSeries(
            "t", tuple(GlucoseReading(ts, 100.0) for ts in gappy)
        )
        assert estimate_sampling_rate(series) == 5.0

    def test_declared_interval_overrides(self):
        series = make_series([100] * 4, rate_minutes=5)
        assert series.declared_interval == 5.0
        assert estimate_sampling_rate(series) == 5.0

    def test_too_few_readings(self):
        series = GlucoseSeries("t", (GlucoseReading(datetime(2024, 1, 1), 100.0),))
        with pytest.raises(DataError):
            estimate_sampling_rate(series)


class TestFilter:
    def two_day_series(self):
        return make_series([100] * 576, rate_minutes=5)  # 2024-01-01 .. 01-02

    def test_single_day(self):
        series = self.two_day_series()
        out = filter_series(series, DateSelection.single(date(2024, 1, 1)))
        assert len(out) == 288
        assert all(r.timestamp.date() == date(2024, 1, 1) for r in out.readings)

    def test_half_open_window(self):
        series = self.two_day_series()
        sel = DateSelection.single(
            date(2024, 1, 1), window=ClockWindow(time(6, 0), time(12, 0))
        )
        out = filter_series(series, sel)
        assert all(time(6, 0) <= r.timestamp.time() < time(12, 0) for r in out.readings)
        assert len(out) == 72  # 6h at 5-min rate

    def test_absent_date_gives_empty(self):
        series = self.two_day_series()
        out = filter_series(series, DateSelection.single(date(2030, 5, 5)))
        assert len(out) == 0  # empty is a valid state, not an error

    def test_projection_idempotent(self, rng):
        from conftest import random_series

        for _ in range(20):
            series = random_series(rng)
            days = series.dates()
            sel = DateSelection.from_dates(days[: max(1, len(days) // 2)])
            once = filter_series(series, sel)
            twice = filter_series(once, sel)
            assert once.readings == twice.readings

    def test_group_selection_filters_union(self):
        series = self.two_day_series()
        sel = DateSelection.from_groups([
            ("A", [date(2024, 1, 1)]),
            ("B", [date(2024, 1, 2)]),
        ])
        assert len(filter_series(series, sel)) == 576

    def test_overlapping_groups_rejected(self):
        with pytest.raises(DataError):
            DateSelection.from_groups([
                ("A", [date(2024, 1, 1)]),
                ("B", [date(2024, 1, 1)]),
            ])


class TestDateKeys:
    def test_single_date(self):
        assert DateSelection.single(date(2024, 1, 1)).date_key() == "2024-01-01"

    def test_range(self):
        sel = DateSelection.from_range(date(2025, 9, 1), date(2025, 9, 7))
        assert sel.date_key() == "(2025-09-01, 2025-09-07)"

    def test_list(self):
        sel = DateSelection.from_dates([date(2025, 1, 3), date(2025, 1, 1)])
        assert sel.date_key() == "['2025-01-01', '2025-01-03']"

    def test_windowed_single_date(self):
        sel = DateSelection.single(
            date(2024, 2, 29), window=ClockWindow(time(4), time(6))
        )
        assert sel.date_key() == "(2024-02-29 04:00, 2024-02-29 06:00)"

    def test_span(self):
        sel = DateSelection.from_span(
            datetime(2024, 2, 29, 4, 0), datetime(2024, 2, 29, 6, 0)
        )
        assert sel.date_key() == "(2024-02-29 04:00, 2024-02-29 06:00)"


class TestWeartime:
    def test_full_day_5min(self):
        series = make_series([100] * 288, rate_minutes=5)
        out = compute_weartime(series, DateSelection.single(date(2024, 1, 1)), 5)
        wt = out["2024-01-01"]
        assert wt.percent == 100.0 and wt.sufficient

    def test_half_day_insufficient(self):
        series = make_series([100] * 144, rate_minutes=5)
        out = compute_weartime(series, DateSelection.single(date(2024, 1, 1)), 5)
        wt = out["2024-01-01"]
        assert wt.percent == oracle_weartime_pct(144, 1440, 5) == 50.0
        assert not wt.sufficient

    def test_boundary_just_above_70(self):
        series = make_series([100] * 68, rate_minutes=15)
        out = compute_weartime(series, DateSelection.single(date(2024, 1, 1)), 15)
        wt = out["2024-01-01"]
        assert wt.percent == oracle_weartime_pct(68, 1440, 15)
        assert wt.percent == pytest.approx(70.8333333333)
        assert wt.sufficient

    def test_boundary_just_below_70(self):
        series = make_series([100] * 67, rate_minutes=15)
        out = compute_weartime(series, DateSelection.single(date(2024, 1, 1)), 15)
        wt = out["2024-01-01"]
        assert wt.percent == pytest.approx(69.7916666667)
        assert not wt.sufficient

    def test_disjoint_window_expectations_add(self):
        series = make_series([100] * 288, rate_minutes=5)
        day = date(2024, 1, 1)
        am = DateSelection.single(day, window=ClockWindow(time(0), time(12)))
        pm = DateSelection.single(day, window=ClockWindow(time(12), time(23, 59)))
        full = DateSelection.single(day)
        wt_am = list(compute_weartime(series, am, 5).values())[0]
        wt_pm = list(compute_weartime(series, pm, 5).values())[0]
        wt_full = list(compute_weartime(series, full, 5).values())[0]
        assert wt_am.observed + wt_pm.observed <= wt_full.observed + 1
        assert wt_am.expected + wt_pm.expected == pytest.approx(wt_full.expected, rel=1e-3)

    def test_bad_rate(self):
        series = make_series([100] * 10)
        with pytest.raises(DataError):
            compute_weartime(series, DateSelection.single(date(2024, 1, 1)), 0)


class TestSynthesize:
    def test_constant_day(self):
        spec = SynthesisSpec(days=1, seed=7, rate_minutes=5, base_level=100.0)
        series = synthesize_series(spec)
        assert len(series) == 288
        assert set(series.values) == {100.0}

    def test_missing_day(self):
        spec = SynthesisSpec(days=2, seed=1, rate_minutes=15, base_level=100.0,
                             missing_days=(1,))
        series = synthesize_series(spec)
        assert len(series) == 96
        assert all(r.timestamp.date() == date(2024, 1, 1) for r in series.readings)

    def test_deterministic_under_seed(self):
        spec = SynthesisSpec(days=3, seed=7, variability=25.0,
                             missing_sample_rate=0.1)
        assert synthesize_series(spec).readings == synthesize_series(spec).readings

    def test_bounded_values(self):
        spec = SynthesisSpec(days=2, seed=2, base_level=390.0, variability=60.0)
        series = synthesize_series(spec)
        assert all(40.0 <= v <= 400.0 for v in series.values)

    def test_missing_sample_rate_within_one_sample(self):
        spec = SynthesisSpec(days=1, seed=5, rate_minutes=5,
                             missing_sample_rate=0.25)
        series = synthesize_series(spec)
        assert abs(len(series) - 288 * 0.75) <= 1

    def test_invalid_specs(self):
        with pytest.raises(DataError):
            synthesize_series(SynthesisSpec(days=0, seed=1))
        with pytest.raises(DataError):
            synthesize_series(SynthesisSpec(days=1, seed=1, rate_minutes=0))


class TestSeriesInvariants:
    def test_strictly_increasing_enforced(self):
        ts = datetime(2024, 1, 1)
        with pytest.raises(DataError):
            GlucoseSeries("t", (GlucoseReading(ts, 100.0), GlucoseReading(ts, 101.0)))

    def test_value_bounds_enforced(self):
        with pytest.raises(DataError):
            GlucoseReading(datetime(2024, 1, 1), 0.0)
        with pytest.raises(DataError):
            GlucoseReading(datetime(2024, 1, 1), 1000.0)
