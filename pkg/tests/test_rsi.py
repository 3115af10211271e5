import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import softmax

from motionimit import rsi
from motionimit.rsi import TrajectoryMeta, build_bins, sampling_distribution


def metas(durations, dt=0.02):
    return [TrajectoryMeta.from_duration(i, d, dt) for i, d in enumerate(durations)]


def reference_p(table):
    """Floor-smoothed softmax computed with scipy on the valid entries only."""
    valid = table.mask.ravel()
    f = table.f.ravel()[valid]
    tau = table.tau_base / np.log(1 + valid.sum())
    p = np.zeros(valid.size)
    p[valid] = (1 - table.epsilon) * softmax(f / tau) + table.epsilon / valid.sum()
    return p.reshape(table.mask.shape)


durations = st.lists(st.floats(0.5, 30.0), min_size=1, max_size=8)


class TestBins:
    def test_demo_library_layout(self):
        table = build_bins(rsi.library_metas())
        assert table.delta == pytest.approx(2.991666555404663)
        assert table.n_bins == math.ceil(16.633333206176758 / table.delta)
        # a 2.99 s clip has exactly one bin; a 16.6 s clip has six
        assert table.mask[8].sum() == 1 and table.mask[0].sum() == 6
        assert np.all(table.f[table.mask] == 1.0) and np.all(np.isneginf(table.f[~table.mask]))

    def test_bin_width_cap(self):
        assert build_bins(metas([10.0, 20.0])).delta == 4.0
        assert build_bins(metas([10.0]), delta=3.0).n_bins == 4

    @settings(max_examples=100, deadline=None)
    @given(durations, st.floats(0.1, 5.0))
    def test_valid_set_definition(self, ds, delta):
        table = build_bins(metas(ds), delta=delta)
        for i, d in enumerate(ds):
            expect = int(math.ceil(d / delta))
            assert table.mask[i].sum() == expect
            lo, hi = table.bin_interval(i, expect - 1)
            assert lo < d and hi == pytest.approx(min(expect * delta, d))

    def test_validation(self):
        with pytest.raises(ValueError):
            build_bins([])
        with pytest.raises(ValueError):
            build_bins(metas([1.0]), delta=0.0)
        with pytest.raises(ValueError):
            build_bins(metas([1.0]), alpha=1.0)
        with pytest.raises(ValueError):
            TrajectoryMeta(0, 0.0, 1)

    def test_manifest_round_trip(self, tmp_path):
        ms = rsi.library_metas()
        rsi.save_manifest(ms, tmp_path / "m.json")
        assert rsi.load_manifest(tmp_path / "m.json") == ms

    def test_manifest_unknown_key(self, tmp_path):
        (tmp_path / "m.json").write_text('[{"name": "a", "duration_s": 1.0, "length": 50, "fps": 30}]')
        with pytest.raises(ValueError):
            rsi.load_manifest(tmp_path / "m.json")


class TestDistribution:
    def test_uniform_start(self):
        table = build_bins(rsi.library_metas())
        p = sampling_distribution(table)
        np.testing.assert_allclose(p[table.mask], 1 / table.n_valid, rtol=1e-12)
        assert np.all(p[~table.mask] == 0)

    def test_temperature_natural_log(self):
        table = build_bins(metas([4.0, 8.0]), delta=4.0)
        assert table.temperature == pytest.approx(1 / math.log(4))

    @settings(max_examples=200, deadline=None)
    @given(durations, st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
    def test_matches_scipy_softmax(self, ds, eps, seed):
        table = build_bins(metas(ds), delta=1.0, epsilon=eps)
        rng = np.random.default_rng(seed)
        table.f[table.mask] = rng.uniform(0, 1, table.n_valid)
        p = sampling_distribution(table)
        np.testing.assert_allclose(p, reference_p(table), atol=1e-12)
        assert abs(p.sum() - 1) < 1e-12
        assert p[table.mask].min() >= eps / table.n_valid * (1 - 1e-12)

    def test_large_failures_stable(self):
        table = build_bins(metas([8.0]), delta=2.0)
        table.f[0, :4] = [900.0, 901.0, 0.0, 0.0]
        p = sampling_distribution(table)
        assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-12

    def test_harder_bins_more_likely(self):
        table = build_bins(metas([8.0]), delta=2.0)
        table.f[0, :4] = [0.1, 0.9, 0.5, 0.5]
        p = sampling_distribution(table)[0]
        assert p[1] > p[2] == p[3] > p[0]


class TestUpdates:
    def test_single_step(self):
        table = build_bins(metas([8.0]), delta=2.0)
        rsi.update_failure(table, 0, 1, 0.4)
        assert table.f[0, 1] == pytest.approx(0.995 * 1.0 + 0.005 * 0.6)
        assert table.visits[0, 1] == 1

    def test_invalid_bin(self):
        table = build_bins(metas([3.0, 8.0]), delta=2.0)
        with pytest.raises(IndexError):
            rsi.update_failure(table, 0, 3, 0.5)

    def test_geometric_convergence(self):
        table = build_bins(metas([2.0]), delta=2.0)
        for k in range(1, 2001):
            rsi.update_failure(table, 0, 0, 0.75)
            expect = 0.25 + (1.0 - 0.25) * 0.995**k
            assert table.f[0, 0] == pytest.approx(expect, rel=1e-12, abs=1e-15)

    def test_batched_order_independent(self):
        a = build_bins(metas([4.0, 4.0]), delta=2.0)
        b = a.copy()
        results = [(0, 0, 0.2), (1, 1, 0.9), (0, 0, 0.6), (0, 1, 0.3)]
        rsi.update_failures(a, results)
        rsi.update_failures(b, results[::-1])
        np.testing.assert_array_equal(a.f, b.f)
        assert a.f[0, 0] == pytest.approx(0.995 + 0.005 * 0.6)
        assert a.visits[0, 0] == 2

    def test_failure_bounded(self):
        table = build_bins(metas([2.0]), delta=2.0)
        rng = np.random.default_rng(0)
        for s in rng.uniform(0, 1, 5000):
            rsi.update_failure(table, 0, 0, s)
            assert 0.0 <= table.f[0, 0] <= 1.0


class TestSimilarity:
    def test_full_episode(self):
        assert rsi.episode_similarity([1.0] * 10, 10) == 1.0

    def test_early_termination_counts_missing_as_zero(self):
        assert rsi.episode_similarity([1.0] * 4, 10) == pytest.approx(0.4)

    def test_rejects(self):
        with pytest.raises(ValueError):
            rsi.episode_similarity([1.0] * 5, 4)
        with pytest.raises(ValueError):
            rsi.episode_similarity([1.2], 4)

    def test_max_episode_steps(self):
        assert rsi.max_episode_steps(500, 300, 100) == 200
        assert rsi.max_episode_steps(100, 300, 10) == 100
        assert rsi.max_episode_steps(100, 300, 300) == 1


class TestSampling:
    def test_sample_inside_bin(self):
        table = build_bins(rsi.library_metas())
        rng = np.random.default_rng(0)
        for _ in range(500):
            s = rsi.sample_start(table, rng)
            lo, hi = table.bin_interval(s.trajectory, s.bin)
            assert table.mask[s.trajectory, s.bin]
            assert lo <= s.t_init < hi and 0 <= s.phase < 1

    def test_vector_and_scalar_draws_agree(self):
        table = build_bins(rsi.library_metas())
        table.f[table.mask] = np.linspace(0, 1, table.n_valid)
        i, b, t, ph = rsi.sample_starts(table, np.random.default_rng(4), 20000)
        assert np.all(table.mask[i, b])
        assert np.all(t < table.durations[i]) and np.all(t >= b * table.delta)
        np.testing.assert_allclose(ph, t / table.durations[i])
        counts = np.bincount(i * table.n_bins + b, minlength=table.mask.size) / 20000
        p = sampling_distribution(table).ravel()
        assert np.abs(counts - p).max() < 4 * np.sqrt(p.max() / 20000)

    def test_never_samples_invalid(self):
        table = build_bins(metas([1.0, 9.0]), delta=2.0)
        i, b, _, _ = rsi.sample_starts(table, np.random.default_rng(1), 5000)
        assert not np.any((i == 0) & (b > 0))

    def test_heatmap_csv(self, tmp_path):
        table = build_bins(metas([3.0, 5.0]), delta=2.0)
        beta = np.zeros(table.mask.shape)
        rsi.write_heatmap_csv(table, tmp_path / "h.csv", beta=beta, labels=["a", "b"])
        rows = list(csv.reader(open(tmp_path / "h.csv")))
        assert rows[0] == ["trajectory", "label", "bin", "valid", "failure", "visits", "probability", "beta"]
        assert len(rows) == 1 + table.mask.size
        assert sum(float(r[6]) for r in rows[1:]) == pytest.approx(1.0)
