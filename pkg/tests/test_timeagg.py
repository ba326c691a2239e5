import numpy as np
import pytest

from dhretro.errors import DegenerateSeries, InputError, ShapeMismatch
from dhretro.timeagg import (
    TimeSeries, active_hours, aggregate, cluster_periods, exclude_summer, kmedoids, pam,
)


def day(level, t_air, g_peak, n_consumers=2):
    """24 hourly steps of one day type."""
    h = np.arange(24)
    shape = 1.0 + 0.2 * np.sin(2 * np.pi * h / 24)
    demand = level * shape[:, None] * np.linspace(1.0, 1.5, n_consumers)[None, :]
    g = g_peak * np.clip(np.sin(np.pi * (h - 6) / 12), 0, None)
    return demand, np.full(24, t_air), g


@pytest.fixture
def three_day_types():
    parts = [day(1e5, -5.0, 100.0), day(5e4, 5.0, 400.0), day(1e4, 15.0, 800.0)]
    reps = [5, 3, 2]
    d = np.vstack([np.vstack([p[0]] * r) for p, r in zip(parts, reps)])
    t = np.concatenate([np.concatenate([p[1]] * r) for p, r in zip(parts, reps)])
    g = np.concatenate([np.concatenate([p[2]] * r) for p, r in zip(parts, reps)])
    return TimeSeries(d, t, g, ("A", "B"))


class TestSeries:
    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            TimeSeries(np.ones((3, 2)), np.zeros(4), np.zeros(3))

    def test_negative_demand(self):
        with pytest.raises(InputError):
            TimeSeries(-np.ones((3, 1)), np.zeros(3), np.zeros(3))

    def test_non_finite(self):
        with pytest.raises(InputError):
            TimeSeries(np.ones((3, 1)), np.array([0.0, np.nan, 0.0]), np.zeros(3))

    def test_features_in_unit_box(self, three_day_types):
        f = three_day_types.features()
        assert f.min() == 0.0 and f.max() == 1.0
        assert f.shape == (240, 4)

    def test_constant_column_is_zero(self):
        ts = TimeSeries(np.ones((4, 1)), np.arange(4.0), np.full(4, 7.0))
        assert np.all(ts.features()[:, [0, 2]] == 0.0)


class TestSummerExclusion:
    def test_no_idle_steps_keeps_everything(self):
        ts = TimeSeries(np.ones((8760, 1)), np.zeros(8760), np.zeros(8760))
        out, frac = exclude_summer(ts)
        assert frac == 0.0 and len(out) == 8760
        assert active_hours(frac) == 8760

    def test_all_zero_is_degenerate(self):
        ts = TimeSeries(np.zeros((10, 2)), np.zeros(10), np.zeros(10))
        with pytest.raises(DegenerateSeries):
            exclude_summer(ts)

    def test_longest_idle_stretch_removed(self):
        total = np.ones(8760)
        total[4000:4552] = 0.0  # 552 h = 6.3 % of the year
        total[100:110] = 0.0    # a short gap stays in
        ts = TimeSeries(total[:, None], np.zeros(8760), np.zeros(8760))
        out, frac = exclude_summer(ts)
        assert frac == pytest.approx(552 / 8760)
        assert len(out) == 8760 - 552
        assert active_hours(frac) == 8208

    def test_active_hours_rounds(self):
        assert active_hours(0.063) == round(8760 * 0.937)

    @pytest.mark.parametrize("frac", [-0.1, 1.0])
    def test_active_hours_range(self, frac):
        with pytest.raises(InputError):
            active_hours(frac)


class TestKMedoids:
    def test_pam_two_obvious_groups(self):
        x = np.array([[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]])
        d = np.abs(x - x.T)
        np.testing.assert_array_equal(pam(d, 2), [1, 4])

    def test_pam_single_medoid_is_the_1_median(self):
        x = np.array([[0.0], [1.0], [2.0], [3.0], [100.0]])
        d = np.abs(x - x.T)
        np.testing.assert_array_equal(pam(d, 1), [2])

    @pytest.mark.parametrize("seed", [3, 11, 29])
    def test_pam_result_is_swap_optimal(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(14, 2))
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        got = list(pam(d, 3))
        cost = d[got].min(axis=0).sum()
        for i in range(3):
            for h in set(range(14)) - set(got):
                alt = got[:i] + [h] + got[i + 1:]
                assert d[alt].min(axis=0).sum() >= cost - 1e-12

    def test_pam_exhaustive_on_separable_data(self):
        from itertools import combinations
        rng = np.random.default_rng(5)
        x = np.vstack([rng.normal(c, 0.1, size=(5, 2)) for c in ((0, 0), (3, 0), (0, 3))])
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        best = min(combinations(range(15), 3), key=lambda c: d[list(c)].min(axis=0).sum())
        got = pam(d, 3)
        assert d[got].min(axis=0).sum() == pytest.approx(d[list(best)].min(axis=0).sum(), rel=1e-12)

    def test_k_out_of_range(self):
        with pytest.raises(InputError):
            kmedoids(np.zeros((3, 1)), 4)

    def test_clara_path_separates_blobs(self):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(c, 0.05, size=(1500, 2)) for c in (0.0, 1.0)])
        med, labels = kmedoids(x, 2, seed=1)
        assert sorted(np.round(x[med].mean(axis=1))) == [0.0, 1.0]
        assert np.bincount(labels).tolist() == [1500, 1500]

    def test_seeded_determinism(self):
        rng = np.random.default_rng(0)
        x = rng.random((2500, 3))
        a = kmedoids(x, 4, seed=7)
        b = kmedoids(x, 4, seed=7)
        np.testing.assert_array_equal(a[0], b[0])


class TestAggregate:
    def test_recovers_repeated_day_types(self, three_day_types):
        ps = cluster_periods(three_day_types, 3)
        assert [p.weight for p in ps] == pytest.approx([0.5, 0.3, 0.2])
        assert [p.t_air for p in ps] == [-5.0, 5.0, 15.0]
        assert sum(p.weight for p in ps) == pytest.approx(1.0)

    def test_single_cluster(self, three_day_types):
        ps = cluster_periods(three_day_types, 1)
        assert len(ps) == 1 and ps[0].weight == 1.0

    def test_too_many_clusters(self):
        ts = TimeSeries(np.ones((3, 1)), np.zeros(3), np.zeros(3))
        with pytest.raises(InputError):
            cluster_periods(ts, 4)

    def test_peak_period_dominates(self, three_day_types):
        ps = aggregate(three_day_types, 2)
        peak = ps[ps.peak_index]
        assert peak.weight == 0.0
        assert peak.t_air == three_day_types.t_air.min()
        assert peak.g_irr == three_day_types.g_irr.min()
        np.testing.assert_array_equal(peak.demand, three_day_types.demand.max(axis=0))
        for p in ps:
            assert np.all(peak.demand >= p.demand)

    def test_weights_sum_to_one(self, three_day_types):
        ps = aggregate(three_day_types, 3)
        assert sum(p.weight for p in ps) == pytest.approx(1.0)
        assert len(ps) == 4 and ps.peak_index == 3

    def test_hours_from_excluded_share(self):
        rng = np.random.default_rng(2)
        d = rng.uniform(1e4, 2e4, size=(8760, 2))
        d[5000:5552] = 0.0
        ts = TimeSeries(d, rng.normal(5, 5, 8760), rng.uniform(0, 500, 8760))
        ps = aggregate(ts, 3, seed=0)
        assert ps.hours == 8208
        assert ps.excluded_fraction == pytest.approx(552 / 8760)

    def test_idempotent(self, three_day_types):
        a = aggregate(three_day_types, 3, seed=4)
        b = aggregate(three_day_types, 3, seed=4)
        for p, q in zip(a, b):
            assert p.weight == q.weight and p.t_air == q.t_air
            np.testing.assert_array_equal(p.demand, q.demand)
