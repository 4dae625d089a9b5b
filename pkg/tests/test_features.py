from datetime import date

import numpy as np
import pytest

from flexsim.errors import InsufficientDataError, ValidationError
from flexsim.features import FeatureLayout, build_matrix, extract, season_of
from flexsim.ingest import ActivationSeries, GroupSpec, to_daily, to_group

# 2016-01-04 is a Monday, so day index == weekday for the first week.
START = date(2016, 1, 4)


def hourly_series(days, active=(), missing=(), start=START):
    d = np.zeros((days, 24), dtype=np.int8)
    m = np.zeros((days, 24), dtype=bool)
    for day, hour in active:
        d[day, hour] = 1
    for day, hour in missing:
        m[day, hour] = True
    return ActivationSeries(
        resolution="hourly", device_id="d", start_date=start, days=d, missing=m
    )


class TestLayout:
    def test_hourly_width(self):
        layout = FeatureLayout.for_resolution("hourly")
        # 24 lags + 24 hour + 7 dow + 1 weekend + 7 last-op + 4 season
        # + 24 missing flags + 24*7 + 1*24 interactions
        assert layout.width == 24 + 24 + 7 + 1 + 7 + 4 + 24 + 168 + 24

    def test_daily_width(self):
        layout = FeatureLayout.for_resolution("daily")
        assert layout.width == 7 + 7 + 1 + 7 + 4 + 7

    def test_names_cover_every_index(self):
        layout = FeatureLayout.for_resolution("hourly")
        names = layout.feature_names()
        assert len(names) == layout.width
        assert len(set(names)) == layout.width

    def test_json_round_trip(self):
        layout = FeatureLayout.for_resolution("group")
        assert FeatureLayout.from_json(layout.to_json()) == layout

    def test_unknown_interaction_block(self):
        with pytest.raises(ValidationError):
            FeatureLayout.for_resolution("hourly", interactions=(("nope", "season"),))


class TestCalendarBlocks:
    def test_thursday_one_hot(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14)
        # day 10 of a Monday start is a Thursday
        v = extract(x, 10, 5, layout)
        assert v[layout.slice_of("day_of_week")].tolist() == [0, 0, 0, 1, 0, 0, 0]
        assert v[layout.offset("is_weekend")] == 0

    def test_weekend_flag(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14)
        for day in range(7, 14):
            v = extract(x, day, 0, layout)
            dow = x.weekday(day)
            assert v[layout.offset("is_weekend")] == (1.0 if dow >= 5 else 0.0)

    def test_spring_one_hot(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(10, start=date(2016, 4, 1))
        v = extract(x, 8, 0, layout)
        assert v[layout.slice_of("season")].tolist() == [0, 1, 0, 0]

    def test_season_mapping(self):
        assert season_of(12) == 0 and season_of(1) == 0 and season_of(2) == 0
        assert season_of(3) == 1 and season_of(5) == 1
        assert season_of(6) == 2 and season_of(8) == 2
        assert season_of(9) == 3 and season_of(11) == 3

    def test_one_hot_blocks_sum_to_one(self, rng):
        layout = FeatureLayout.for_resolution("hourly")
        days = 20
        d = (rng.random((days, 24)) < 0.3).astype(np.int8)
        x = ActivationSeries(
            resolution="hourly",
            device_id="d",
            start_date=START,
            days=d,
            missing=np.zeros((days, 24), dtype=bool),
        )
        for day in range(7, days):
            for slot in (0, 11, 23):
                v = extract(x, day, slot, layout)
                for block in ("hour_of_day", "day_of_week", "last_operation", "season"):
                    assert v[layout.slice_of(block)].sum() == 1.0


class TestLastOperation:
    def test_six_days_before(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14, active=[(4, 9)])
        v = extract(x, 10, 0, layout)  # last active day is 10-6=4
        assert v[layout.slice_of("last_operation")].tolist() == [0, 0, 0, 0, 0, 1, 0]

    def test_yesterday(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14, active=[(9, 9)])
        v = extract(x, 10, 0, layout)
        assert v[layout.slice_of("last_operation")].tolist() == [1, 0, 0, 0, 0, 0, 0]

    def test_seven_or_more(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14)
        v = extract(x, 10, 0, layout)
        assert v[layout.slice_of("last_operation")].tolist() == [0, 0, 0, 0, 0, 0, 1]


class TestLags:
    def test_hourly_lag_window(self):
        layout = FeatureLayout.for_resolution("hourly")
        # activation at (day 7, hour 3); predicting (day 8, hour 3) puts it
        # 24 slots back (index 0); predicting (day 8, hour 4) puts it at
        # index 23 - ... check both ends of the window convention.
        x = hourly_series(14, active=[(7, 3)])
        v = extract(x, 8, 3, layout)
        lag = v[layout.slice_of("last24")]
        assert lag[0] == 1.0 and lag.sum() == 1.0
        v = extract(x, 8, 4, layout)
        lag = v[layout.slice_of("last24")]
        # hour 3 of day 7 is outside (day 8 hour 4)'s previous-24 window
        assert lag.sum() == 0.0
        v = extract(x, 7, 4, layout)
        lag = v[layout.slice_of("last24")]
        assert lag[23] == 1.0  # immediately previous slot

    def test_missing_flags_mirror_mask(self):
        layout = FeatureLayout.for_resolution("hourly")
        x = hourly_series(14, missing=[(7, 22)])
        v = extract(x, 7, 23, layout)
        lag = v[layout.slice_of("last24")]
        flags = v[layout.slice_of("missing_last24")]
        # the lag window for (day 7, hour 23) runs from (6, 23) to (7, 22),
        # so the masked hour (7, 22) is the newest lag, index 23
        assert flags[23] == 1.0
        assert lag[23] == 0.0
        assert flags.sum() == 1.0

    def test_daily_lags(self):
        layout = FeatureLayout.for_resolution("daily")
        x = hourly_series(14, active=[(3, 9), (8, 9)])
        d = to_daily(x)
        v = extract(d, 10, 0, layout)
        lag = v[layout.slice_of("last7")]
        # days 3..9 before day 10: day 3 at index 0, day 8 at index 5
        assert lag.tolist() == [1, 0, 0, 0, 0, 1, 0]

    def test_group_lags_read_hourly_history(self):
        layout = FeatureLayout.for_resolution("group")
        spec = GroupSpec((tuple(range(0, 8)), tuple(range(8, 16)), tuple(range(16, 24))))
        # Group 1 anchors at hour 8, so (day 8, slot 1)'s lag window is the
        # hourly states from (7, 8) through (8, 7): oldest first.
        x = hourly_series(14, active=[(7, 8), (8, 7)])
        g = to_group(x, spec)
        v = extract(g, 8, 1, layout)
        lag = v[layout.slice_of("last24")]
        assert lag[0] == 1.0 and lag[23] == 1.0 and lag.sum() == 2.0
        assert v[layout.slice_of("hour_of_day")].tolist()[8] == 1.0

    def test_group_requires_parent(self):
        spec = GroupSpec((tuple(range(0, 12)), tuple(range(12, 24))))
        x = hourly_series(14)
        g = to_group(x, spec)
        orphan = ActivationSeries(
            resolution="group",
            device_id="d",
            start_date=START,
            days=g.days,
            missing=g.missing,
            group_spec=spec,
        )
        layout = FeatureLayout.for_resolution("group")
        with pytest.raises(ValidationError, match="hourly parent"):
            extract(orphan, 8, 0, layout)


class TestInteractions:
    def test_products(self, rng):
        layout = FeatureLayout.for_resolution("hourly")
        days = 15
        d = (rng.random((days, 24)) < 0.3).astype(np.int8)
        x = ActivationSeries(
            resolution="hourly",
            device_id="d",
            start_date=START,
            days=d,
            missing=np.zeros((days, 24), dtype=bool),
        )
        for day, slot in [(7, 0), (9, 13), (14, 23)]:
            v = extract(x, day, slot, layout)
            for a, b in layout.interactions:
                va = v[layout.slice_of(a)]
                vb = v[layout.slice_of(b)]
                got = v[layout.slice_of(f"{a}*{b}")]
                assert np.array_equal(got, np.outer(va, vb).reshape(-1))


class TestBuildMatrix:
    def test_hourly_row_count(self):
        x = hourly_series(30, active=[(2, 9)])
        layout = FeatureLayout.for_resolution("hourly")
        mat = build_matrix(x, layout)
        assert mat.rows.shape == (23 * 24, layout.width)
        assert mat.keys[0] == (7, 0)

    def test_daily_row_count(self):
        x = hourly_series(30)
        mat = build_matrix(to_daily(x), FeatureLayout.for_resolution("daily"))
        assert len(mat) == 23

    def test_group_row_count(self):
        spec = GroupSpec((tuple(range(0, 8)), tuple(range(8, 16)), tuple(range(16, 24))))
        x = hourly_series(30)
        mat = build_matrix(to_group(x, spec), FeatureLayout.for_resolution("group"))
        assert len(mat) == 23 * 3

    def test_warmup_required(self):
        x = hourly_series(6)
        with pytest.raises(InsufficientDataError):
            build_matrix(x, FeatureLayout.for_resolution("hourly"))

    def test_extract_deterministic(self):
        x = hourly_series(20, active=[(3, 4), (9, 17)])
        layout = FeatureLayout.for_resolution("hourly")
        a = extract(x, 10, 5, layout)
        b = extract(x, 10, 5, layout)
        assert np.array_equal(a, b)

    def test_labels_match_series(self):
        x = hourly_series(10, active=[(8, 13)])
        mat = build_matrix(x, FeatureLayout.for_resolution("hourly"))
        idx = mat.keys.index((8, 13))
        assert mat.labels[idx] == 1
        assert mat.labels.sum() == 1
