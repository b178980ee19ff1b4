"""Degradation synthesis: darkening law, mixed noise, parameter sampling, gating."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvenhance.errors import DimensionError
from mvenhance.synthesis import (ALPHA_RANGE, BETA_RANGE, GAMMA_RANGE,
                                 DegradationParams, SimilarityGate,
                                 add_mixed_noise, darken, gate_triplet,
                                 sample_params, ssim_dissimilarity, synth_triplet)

from conftest import make_scene_views


def identity_params(**kw):
    return DegradationParams(alpha=1.0, beta=1.0, gamma=1.0, **kw)


class TestDarken:
    def test_identity_parameters_bitexact(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (8, 8, 3)).astype(np.float32)
        np.testing.assert_array_equal(darken(img, identity_params()), img)

    def test_hand_arithmetic(self):
        img = np.full((1, 1, 3), 0.5, dtype=np.float32)
        p = DegradationParams(alpha=1.0, beta=0.2, gamma=2.0)
        np.testing.assert_allclose(darken(img, p), 0.05, rtol=1e-6)

    def test_zero_stays_zero(self):
        img = np.zeros((4, 4, 3), dtype=np.float32)
        p = DegradationParams(alpha=0.93, beta=0.17, gamma=2.2)
        np.testing.assert_array_equal(darken(img, p), img)

    @given(st.floats(0.9, 1.0), st.floats(0.1, 0.3), st.floats(1.4, 2.5),
           st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_monotone_and_never_brightens(self, alpha, beta, gamma, seed):
        rng = np.random.default_rng(seed)
        v = np.sort(rng.uniform(0, 1, 64)).reshape(8, 8, 1).astype(np.float32)
        p = DegradationParams(alpha=alpha, beta=beta, gamma=gamma)
        out = darken(v, p)
        flat = out.reshape(-1)
        assert np.all(np.diff(flat) >= -1e-7)
        assert np.all(out <= v + 1e-7)

    def test_out_of_range_input_rejected(self):
        from mvenhance.errors import DataError

        with pytest.raises(DataError):
            darken(np.full((2, 2, 3), 1.5, dtype=np.float32), identity_params())


class TestMixedNoise:
    def test_high_gain_mean_preserved(self):
        rng = np.random.default_rng(1)
        img = rng.uniform(0.1, 0.9, (64, 64, 3)).astype(np.float32)
        p = DegradationParams(alpha=1, beta=1, gamma=1, shot_gain=1e6,
                              read_sigma=0.0, seed=7)
        out = add_mixed_noise(img, p)
        assert np.abs(out - img).mean() <= 1e-2

    def test_zero_signal_zero_noise_exact(self):
        img = np.zeros((8, 8, 3), dtype=np.float32)
        p = DegradationParams(alpha=1, beta=1, gamma=1, read_sigma=0.0, seed=3)
        np.testing.assert_array_equal(add_mixed_noise(img, p), img)

    def test_seed_determinism(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        p = DegradationParams(alpha=1, beta=1, gamma=1, seed=11)
        np.testing.assert_array_equal(add_mixed_noise(img, p),
                                      add_mixed_noise(img, p))

    def test_output_clamped(self):
        img = np.ones((32, 32, 3), dtype=np.float32)
        p = DegradationParams(alpha=1, beta=1, gamma=1, shot_gain=50.0,
                              read_sigma=0.2, seed=5)
        out = add_mixed_noise(img, p)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestSampleParams:
    def test_ranges_over_many_draws(self):
        rng = np.random.default_rng(3)
        draws = [sample_params(rng) for _ in range(10_000)]
        alphas = np.array([p.alpha for p in draws])
        betas = np.array([p.beta for p in draws])
        gammas = np.array([p.gamma for p in draws])
        assert alphas.min() >= ALPHA_RANGE[0] and alphas.max() <= ALPHA_RANGE[1]
        assert betas.min() >= BETA_RANGE[0] and betas.max() <= BETA_RANGE[1]
        assert gammas.min() >= GAMMA_RANGE[0] and gammas.max() <= GAMMA_RANGE[1]
        assert abs(betas.mean() - 0.2) <= 0.01

    def test_same_seed_same_stream(self):
        a = [sample_params(np.random.default_rng(9)) for _ in range(1)]
        b = [sample_params(np.random.default_rng(9)) for _ in range(1)]
        assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


class TestSynthTriplet:
    def test_per_view_randomness(self):
        rng = np.random.default_rng(4)
        gt = np.full((32, 32, 3), 0.6, dtype=np.float32)
        lows, params = synth_triplet([gt, gt, gt], rng)
        assert not np.array_equal(lows[0], lows[1])
        assert params[0].to_dict() != params[1].to_dict()

    def test_darkens_on_average(self):
        rng = np.random.default_rng(5)
        gts = make_scene_views(rng, view=32)
        lows, _ = synth_triplet(gts, rng)
        for low, gt in zip(lows, gts):
            assert low.mean() < gt.mean()

    def test_reproducible_from_seed(self):
        gts = make_scene_views(np.random.default_rng(6), view=32)
        a, pa = synth_triplet(gts, np.random.default_rng(42))
        b, pb = synth_triplet(gts, np.random.default_rng(42))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
        assert [p.to_dict() for p in pa] == [p.to_dict() for p in pb]

    def test_wrong_view_count(self):
        with pytest.raises(DimensionError):
            synth_triplet([np.zeros((8, 8, 3))] * 2, np.random.default_rng(0))


class TestGate:
    def test_identical_views_admitted(self):
        img = make_scene_views(np.random.default_rng(7), view=64)[0]
        assert gate_triplet([img, img, img], SimilarityGate()) is True

    def test_noise_view_rejected(self):
        rng = np.random.default_rng(8)
        views = make_scene_views(rng, view=64)
        noise = rng.uniform(0, 1, views[0].shape).astype(np.float32)
        assert ssim_dissimilarity(views[0], noise) > 0.2
        assert gate_triplet([views[0], views[1], noise], SimilarityGate()) is False

    def test_threshold_zero_rejects_any_difference(self):
        rng = np.random.default_rng(9)
        views = make_scene_views(rng, view=64)
        gate = SimilarityGate(threshold=0.0)
        assert gate_triplet(views, gate) is False

    def test_dimension_mismatch(self):
        a = np.zeros((16, 16, 3), dtype=np.float32)
        b = np.zeros((16, 18, 3), dtype=np.float32)
        with pytest.raises(DimensionError):
            gate_triplet([a, a, b], SimilarityGate())

    def test_pluggable_measure(self):
        gate = SimilarityGate(threshold=0.5, measure=lambda a, b: 0.9)
        a = np.zeros((16, 16, 3), dtype=np.float32)
        assert gate_triplet([a, a, a], gate) is False
