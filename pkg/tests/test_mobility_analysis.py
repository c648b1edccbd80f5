from datetime import date

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from tempotsp.gps_ingest import GpsLog, Residence
from tempotsp.mobility_analysis import (
    SubgroupFilter,
    TravelTimeSample,
    density,
    filter_samples,
    log_counts_by_hour,
    mean_travel_time_by_hour,
    query_grid,
    sample_groups,
    smooth_density,
    travel_time_at,
)
from tempotsp.temporal_net import ParetoEntry, ProfileGroup

PROFILE = [ParetoEntry(400, 450), ParetoEntry(100, 300)]


def sample(t0, travel, pure=None, day=date(2019, 4, 1), res=Residence.CITIZEN):
    pure = travel if pure is None else pure
    arr = t0 + travel
    return TravelTimeSample("o", t0, arr - pure, arr, day, res)


class TestTravelTimeAt:
    def test_waits_for_first(self):
        s = travel_time_at(PROFILE, 50)
        assert (s.dep_time, s.arr_time, s.travel_time, s.pure_time) == (100, 300, 250, 200)

    def test_only_later_catchable(self):
        s = travel_time_at(PROFILE, 350)
        assert (s.dep_time, s.arr_time, s.travel_time) == (400, 450, 100)

    def test_nothing_catchable(self):
        assert travel_time_at(PROFILE, 500) is None

    def test_departure_at_t0_is_catchable(self):
        assert travel_time_at(PROFILE, 100).travel_time == 200

    @given(st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 300)), max_size=20),
           st.integers(0, 1200), st.integers(0, 300))
    def test_arrival_monotone_in_query_time(self, raw, t0, dt):
        prof = [ParetoEntry(d, d + w) for d, w in raw]
        a, b = travel_time_at(prof, t0), travel_time_at(prof, t0 + dt)
        if b is not None:
            assert a is not None and a.arr_time <= b.arr_time
        if a is not None:
            assert a.travel_time >= a.pure_time > 0


class TestMeanByHour:
    def test_mean(self):
        assert mean_travel_time_by_hour([sample(9 * 3600, 600), sample(9 * 3600 + 60, 1200)]) == {9: 15.0}

    def test_outlier_dropped(self):
        assert mean_travel_time_by_hour([sample(3600, 600), sample(3600, 8000)], 7200) == {1: 10.0}

    def test_all_dropped(self):
        assert mean_travel_time_by_hour([sample(3600, 8000)]) == {}

    def test_cutoff_inclusive(self):
        assert mean_travel_time_by_hour([sample(0, 7200)]) == {0: 120.0}

    @given(st.lists(st.tuples(st.integers(0, 86399), st.integers(1, 20000)), max_size=30))
    def test_never_above_cutoff(self, raw):
        out = mean_travel_time_by_hour([sample(t, w) for t, w in raw])
        assert all(v <= 120.0 for v in out.values())


class TestDensity:
    def test_three_samples(self):
        d = density([sample(0, 100), sample(0, 100), sample(0, 300)], bin_width=200)
        assert [lo for lo, _ in d.bins] == [0, 200]
        assert [v for _, v in d.bins] == pytest.approx([2 / 600, 1 / 600], rel=1e-12)
        assert d.sample_count == 3

    def test_single(self):
        d = density([sample(0, 777)], bin_width=300)
        assert d.bins == [(600, 1 / 300)]

    def test_empty(self):
        assert density([]).sample_count == 0 and density([]).bins == []

    def test_field_choice(self):
        s = [sample(0, 900, pure=100)]
        assert density(s, "pure", 300).bins[0][0] == 0
        assert density(s, "waiting_inclusive", 300).bins[0][0] == 900
        with pytest.raises(ValueError):
            density(s, "bogus")

    @given(st.lists(st.integers(1, 10000), min_size=1, max_size=50), st.integers(1, 1000))
    def test_unit_area(self, values, width):
        d = density([sample(0, v) for v in values], bin_width=width)
        assert abs(d.integral() - 1) <= 1e-9
        edges = [lo for lo, _ in d.bins]
        counts = np.histogram(values, bins=edges + [edges[-1] + width])[0]
        assert [v for _, v in d.bins] == pytest.approx(list(counts / (len(values) * width)))

    def test_smoothing_integrates_to_one(self):
        rng = np.random.default_rng(0)
        s = [sample(0, int(v)) for v in rng.integers(300, 3000, 200)]
        xs = np.linspace(-3000, 7000, 4001)
        ys = smooth_density(s, xs)
        assert trapezoid(ys, xs) == pytest.approx(1, abs=1e-3)


class TestFilters:
    SAMPLES = [
        sample(8 * 3600, 60, res=Residence.CITIZEN, day=date(2019, 4, 1)),  # Monday
        sample(13 * 3600, 60, res=Residence.FOREIGN_VISITOR, day=date(2019, 4, 6)),  # Saturday
        sample(10 * 3600, 60, res=Residence.DOMESTIC_VISITOR, day=date(2019, 11, 6)),
    ]

    def test_residence(self):
        out = filter_samples(self.SAMPLES, SubgroupFilter(residences={"citizen"}))
        assert [s.residence for s in out] == [Residence.CITIZEN]

    def test_half_open_window(self):
        out = filter_samples(self.SAMPLES, SubgroupFilter(window=(8 * 3600, 13 * 3600)))
        assert [s.t0 for s in out] == [8 * 3600, 10 * 3600]

    def test_identity(self):
        assert filter_samples(self.SAMPLES, SubgroupFilter()) == self.SAMPLES

    def test_month_and_day_type(self):
        assert len(filter_samples(self.SAMPLES, SubgroupFilter(months={4}))) == 2
        assert len(filter_samples(self.SAMPLES, SubgroupFilter(day_type="weekend"))) == 1

    def test_bad_window(self):
        with pytest.raises(ValueError):
            SubgroupFilter(window=(10, 10))

    @given(st.sets(st.sampled_from(list(Residence))), st.sets(st.integers(1, 12)),
           st.sampled_from([None, "weekday", "weekend"]))
    def test_conjunction_composes(self, res, months, day_type):
        f1 = SubgroupFilter(residences=res, window=(9 * 3600, 14 * 3600))
        f2 = SubgroupFilter(months=months, day_type=day_type)
        assert filter_samples(self.SAMPLES, f1, f2) == filter_samples(filter_samples(self.SAMPLES, f1), f2)


class TestLogCounts:
    def test_example(self):
        d = date(2019, 4, 1)
        logs = [GpsLog("a", d, s, 35, 135, Residence.CITIZEN) for s in (8 * 3600 + 300, 8 * 3600 + 3000, 21 * 3600)]
        assert log_counts_by_hour(logs) == {8: 2, 21: 1}

    def test_empty(self):
        assert log_counts_by_hour([]) == {}

    def test_one_per_hour(self):
        logs = [GpsLog("a", date(2019, 4, 1), h * 3600, 35, 135, Residence.CITIZEN) for h in range(24)]
        assert log_counts_by_hour(logs) == {h: 1 for h in range(24)}


def test_sample_groups_merges_origin_meshes():
    g = ProfileGroup(date(2019, 4, 1), Residence.CITIZEN, {"m1": [ParetoEntry(400, 450)], "m2": [ParetoEntry(100, 300)]})
    out = sample_groups([g], ["m1", "m2"], query_grid(0, 600, 300), label="v1")
    assert [(s.t0, s.arr_time) for s in out] == [(0, 300), (300, 450)]
    assert all(s.origin == "v1" for s in out)
