import math

import numpy as np
import pytest

from flexsim.errors import InsufficientDataError
from flexsim.profiles import (
    average_profiles,
    collect_runs,
    collect_runs_daily,
    daily_profile,
    group_profile,
    hourly_profile,
    to_hourly_units,
)

from conftest import make_readings

THRESH = 100.0


class TestRunCollection:
    def test_runs_and_positions(self):
        r = make_readings(2, [(0, 17, 0, [1.6, 1.1]), (1, 17, 0, [1.6, 1.1])])
        runs = collect_runs(r, THRESH)
        assert len(runs) == 2
        assert [run.hour for run in runs] == [17, 17]
        assert [run.day for run in runs] == [0, 1]
        assert runs[0].quarters.tolist() == pytest.approx([1.6, 1.1])

    def test_cross_midnight_continuation(self):
        # run starts 23:45 and continues into the next day
        r = make_readings(2, [(0, 23, 3, [1.0, 1.0, 1.0])])
        runs = collect_runs(r, THRESH)
        assert len(runs) == 1
        assert runs[0].hour == 23
        assert len(runs[0].quarters) == 3

    def test_daily_truncates_at_midnight(self):
        r = make_readings(2, [(0, 23, 3, [1.0, 1.0, 1.0])])
        runs = collect_runs_daily(r, THRESH)
        assert [len(run.quarters) for run in runs] == [1, 2]
        assert [run.day for run in runs] == [0, 1]

    def test_gap_ends_run(self):
        r = make_readings(1, [(0, 10, 0, [1.0, 1.0, 1.0])], missing=[41])
        runs = collect_runs(r, THRESH)
        assert [len(run.quarters) for run in runs] == [1, 1]


class TestAveraging:
    def test_duplicate_runs_fixed_point(self):
        p = average_profiles([np.array([1.6, 1.1]), np.array([1.6, 1.1])])
        assert p.units.tolist() == pytest.approx([1.6, 1.1])
        assert p.duration == 2

    def test_mixed_lengths_absent_as_zero(self):
        p = average_profiles([np.array([2.0]), np.array([1.0, 1.0])])
        assert p.duration == 2  # ceil(1.5)
        assert p.units.tolist() == pytest.approx([1.5, 0.5])

    def test_present_only_mode(self):
        p = average_profiles([np.array([2.0]), np.array([1.0, 1.0])], averaging="present_only")
        assert p.units.tolist() == pytest.approx([1.5, 1.0])

    def test_duration_formula(self, rng):
        # independent recount of ceil(sum of lengths / count)
        for _ in range(25):
            runs = [
                np.abs(rng.standard_normal(int(rng.integers(1, 9)))) + 0.01
                for _ in range(int(rng.integers(1, 7)))
            ]
            p = average_profiles(runs)
            assert p.duration == math.ceil(sum(len(q) for q in runs) / len(runs))

    def test_units_bounded_by_history(self, rng):
        runs = [np.abs(rng.standard_normal(int(rng.integers(1, 6)))) for _ in range(5)]
        p = average_profiles(runs)
        top = max(q.max() for q in runs)
        assert (p.units <= top + 1e-12).all()
        assert (p.units >= 0).all()


class TestHourlyProfile:
    def test_matching_hour(self):
        r = make_readings(3, [(0, 17, 0, [1.6, 1.1]), (1, 17, 0, [1.6, 1.1]), (2, 9, 0, [9.9])])
        p = hourly_profile(r, THRESH, 17)
        assert p.units.tolist() == pytest.approx([1.6, 1.1])

    def test_fallback_to_all_runs(self):
        r = make_readings(2, [(0, 9, 0, [0.8])])
        p = hourly_profile(r, THRESH, 17)
        assert p.units.tolist() == pytest.approx([0.8])

    def test_empty_history_rejected(self):
        r = make_readings(2, [])
        with pytest.raises(InsufficientDataError):
            hourly_profile(r, THRESH, 17)

    def test_deterministic(self):
        r = make_readings(3, [(0, 17, 1, [1.2, 0.4]), (2, 17, 2, [0.9])])
        a = hourly_profile(r, THRESH, 17)
        b = hourly_profile(r, THRESH, 17)
        assert np.array_equal(a.units, b.units)


class TestGroupProfile:
    def test_singleton(self):
        r = make_readings(2, [(0, 13, 0, [1.0, 1.0])])
        p = group_profile(r, THRESH, range(8, 16))
        assert p.units.tolist() == pytest.approx([1.0, 1.0])

    def test_mean_of_two(self):
        r = make_readings(2, [(0, 13, 0, [2.0]), (1, 14, 0, [4.0])])
        p = group_profile(r, THRESH, range(8, 16))
        assert p.duration == 1
        assert p.units.tolist() == pytest.approx([3.0])

    def test_empty_group_falls_back(self):
        r = make_readings(2, [(0, 3, 0, [0.7])])
        p = group_profile(r, THRESH, range(8, 16))
        assert p.units.tolist() == pytest.approx([0.7])


class TestDailyProfile:
    def test_matching_weekday(self):
        # start is a Monday; runs on the two Mondays
        r = make_readings(14, [(0, 17, 0, [1.6, 1.1]), (7, 17, 0, [1.6, 1.1])])
        p = daily_profile(r, THRESH, weekday=0, start_weekday=0)
        assert p.units.tolist() == pytest.approx([1.6, 1.1])

    def test_two_runs_same_day_collected_separately(self):
        r = make_readings(7, [(0, 9, 0, [1.0]), (0, 18, 0, [3.0])])
        p = daily_profile(r, THRESH, weekday=0, start_weekday=0)
        assert p.duration == 1
        assert p.units.tolist() == pytest.approx([2.0])

    def test_absent_weekday_falls_back(self):
        r = make_readings(3, [(1, 9, 0, [0.5])])  # Monday start; Tuesday run
        p = daily_profile(r, THRESH, weekday=6, start_weekday=0)
        assert p.units.tolist() == pytest.approx([0.5])


class TestHourlyUnits:
    def test_exact_groups_of_four(self):
        from flexsim.profiles import EnergyProfile

        p = EnergyProfile(units=np.array([0.4, 0.4, 0.4, 0.4, 0.3, 0.3]))
        h = to_hourly_units(p)
        assert h.units.tolist() == pytest.approx([1.6, 0.6])
