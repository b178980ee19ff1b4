"""Loss functions and the evaluation metric suite."""

import math

import numpy as np
import pytest

from mvenhance.engine import tensor as T
from mvenhance.engine.gradcheck import finite_diff_check
from mvenhance.errors import DataError, DimensionError
from mvenhance.losses import gaussian_window, l_rec, l_total, ssim, ssim_value
from mvenhance.metrics import ab_mabd, loe, psnr, warping_error

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def reference_ssim_scalar(x, y):
    """Slow, scalar-loop SSIM on a single channel; independent of the tensor path."""
    win = gaussian_window(dtype=np.float64)[0, 0]
    h, w = x.shape
    vals = []
    for r in range(h - 10):
        for c in range(w - 10):
            px = x[r:r + 11, c:c + 11].astype(np.float64)
            py = y[r:r + 11, c:c + 11].astype(np.float64)
            mx = float((win * px).sum())
            my = float((win * py).sum())
            vx = float((win * px * px).sum()) - mx * mx
            vy = float((win * py * py).sum()) - my * my
            cxy = float((win * px * py).sum()) - mx * my
            vals.append(((2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)))
    return float(np.mean(vals))


class TestSsim:
    def test_self_similarity_is_one(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 1, (16, 16, 3))
        assert abs(ssim_value(x, x) - 1.0) <= 1e-9

    def test_checkerboard_inversion_negative(self):
        yy, xx = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
        board = ((yy + xx) % 2).astype(np.float64)
        assert ssim_value(board, 1.0 - board) < 0.0

    def test_matches_independent_scalar_reference(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, (32, 32))
        y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
        assert abs(ssim_value(x, y) - reference_ssim_scalar(x, y)) <= 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, (20, 20, 3))
        y = rng.uniform(0, 1, (20, 20, 3))
        assert abs(ssim_value(x, y) - ssim_value(y, x)) <= 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ssim_value(np.zeros((16, 16)), np.zeros((16, 18)))

    def test_too_small_for_window(self):
        with pytest.raises(DimensionError):
            ssim_value(np.zeros((8, 8)), np.zeros((8, 8)))


class TestLrec:
    def test_zero_iff_equal_on_random_pairs(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.uniform(0, 1, (3, 16, 16))
            xt = T.Tensor(x, dtype=np.float64)
            assert float(l_rec(xt, T.Tensor(x.copy(), dtype=np.float64)).data) == \
                pytest.approx(0.0, abs=1e-12)
            y = np.clip(x + rng.normal(0, 0.05, x.shape), 0, 1)
            if not np.array_equal(x, y):
                assert float(l_rec(xt, T.Tensor(y, dtype=np.float64)).data) > 0.0

    def test_uniform_shift_l1_term(self):
        rng = np.random.default_rng(4)
        y = rng.uniform(0.2, 0.7, (3, 16, 16))
        x = y + 0.1
        l1 = float(T.mean_all(T.absolute(
            T.sub(T.Tensor(x, dtype=np.float64), T.Tensor(y, dtype=np.float64)))).data)
        assert l1 == pytest.approx(0.1, abs=1e-12)
        total = float(l_rec(T.Tensor(x, dtype=np.float64), T.Tensor(y, dtype=np.float64)).data)
        s = float(ssim(T.Tensor(x, dtype=np.float64), T.Tensor(y, dtype=np.float64)).data)
        assert total == pytest.approx(l1 + 1.0 - s, abs=1e-12)

    def test_gradient_passes_finite_differences(self):
        rng = np.random.default_rng(5)
        y = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        x0 = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        err = finite_diff_check(lambda t: l_rec(t, y), x0, eps=1e-6)
        assert err <= 1e-4


class TestLtotal:
    def test_all_equal_gt_gives_zero(self):
        rng = np.random.default_rng(6)
        gt = rng.uniform(0, 1, (3, 16, 16))
        g = T.Tensor(gt, dtype=np.float64)
        inters = [T.Tensor(gt.copy(), dtype=np.float64) for _ in range(3)]
        assert float(l_total(inters, T.Tensor(gt.copy(), dtype=np.float64), g).data) == \
            pytest.approx(0.0, abs=1e-12)

    def test_empty_intermediates_is_final_term_only(self):
        rng = np.random.default_rng(7)
        r = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        gt = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        assert float(l_total([], r, gt).data) == float(l_rec(r, gt).data)

    def test_equals_hand_summed_terms(self):
        rng = np.random.default_rng(8)
        gt = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        inters = [T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
                  for _ in range(2)]
        r = T.Tensor(rng.uniform(0, 1, (3, 16, 16)), dtype=np.float64)
        total = float(l_total(inters, r, gt).data)
        hand = float(l_rec(r, gt).data) + sum(float(l_rec(i, gt).data) for i in inters)
        assert total == pytest.approx(hand, abs=1e-6)


class TestPsnr:
    def test_identical_gives_infinity(self):
        x = np.random.default_rng(9).uniform(0, 1, (8, 8, 3))
        assert psnr(x, x) == math.inf

    def test_uniform_point_one_is_twenty_db(self):
        x = np.full((16, 16, 3), 0.3)
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_uniform_point_o_one_is_forty_db(self):
        x = np.full((16, 16, 3), 0.3)
        assert psnr(x, x + 0.01) == pytest.approx(40.0, abs=1e-9)

    def test_decreases_with_noise_amplitude(self):
        rng = np.random.default_rng(10)
        x = rng.uniform(0.3, 0.7, (32, 32, 3))
        noise = rng.standard_normal(x.shape)
        values = [psnr(x, x + a * noise) for a in (0.01, 0.05, 0.1)]
        assert values[0] > values[1] > values[2]


class TestLoe:
    def test_identical_is_zero(self):
        x = np.random.default_rng(11).uniform(0, 1, (8, 8, 3))
        assert loe(x, x) == 0.0

    def test_full_inversion_is_maximal(self):
        # single channel: lightness is the identity, so inverting distinct
        # values flips every ordered pair with i != j
        rng = np.random.default_rng(12)
        ref = rng.uniform(0.05, 0.95, (8, 8))
        n = ref.size
        assert loe(1.0 - ref, ref) == pytest.approx(
            1000.0 * (n * n - n) / (n * n), abs=1e-9)

    def test_rgb_matches_pairwise_brute_force(self):
        rng = np.random.default_rng(12)
        ref = rng.uniform(0.05, 0.95, (8, 8, 3))
        enh = 1.0 - ref
        le = enh.max(axis=2).reshape(-1)
        lr = ref.max(axis=2).reshape(-1)
        n = le.size
        disagree = 0
        for i in range(n):
            for j in range(n):
                disagree += (le[i] >= le[j]) != (lr[i] >= lr[j])
        assert loe(enh, ref) == pytest.approx(1000.0 * disagree / (n * n), abs=1e-9)

    def test_monotone_remap_invariant(self):
        rng = np.random.default_rng(13)
        ref = rng.uniform(0.05, 0.95, (12, 12, 3))
        assert loe(ref ** 2, ref) == 0.0

    def test_large_images_downsampled(self):
        rng = np.random.default_rng(14)
        ref = rng.uniform(0, 1, (160, 120, 3))
        assert loe(ref ** 1.5, ref) == 0.0


class TestAbMabd:
    def test_identical_sequence_zero(self):
        img = np.full((8, 8, 3), 0.4)
        ab, mabd = ab_mabd([img, img, img])
        assert ab == 0.0 and mabd == 0.0

    def test_hand_arithmetic(self):
        a = np.full((4, 4, 3), 0.2)
        b = np.full((4, 4, 3), 0.4)
        ab, mabd = ab_mabd([a, b])
        assert mabd == pytest.approx(0.2 * 255, abs=1e-9)
        assert ab == pytest.approx(np.var([0.2 * 255, 0.4 * 255]), abs=1e-9)

    def test_permutation_keeps_ab_not_mabd(self):
        imgs = [np.full((4, 4, 3), v) for v in (0.1, 0.5, 0.2)]
        ab1, mabd1 = ab_mabd(imgs)
        ab2, mabd2 = ab_mabd([imgs[1], imgs[0], imgs[2]])
        assert ab1 == pytest.approx(ab2, abs=1e-9)
        assert mabd1 != mabd2

    def test_needs_two_images(self):
        with pytest.raises(DataError):
            ab_mabd([np.zeros((4, 4, 3))])


class TestWarpingError:
    def test_zero_flow_identical_images(self):
        img = np.random.default_rng(15).uniform(0, 1, (12, 12, 3))
        flow = np.zeros((12, 12, 2), dtype=np.float32)
        mask = np.ones((12, 12))
        assert warping_error(img, img, flow, mask) == pytest.approx(0.0, abs=1e-12)

    def test_integer_shift_recovers_translation(self):
        rng = np.random.default_rng(16)
        big = rng.uniform(0, 1, (20, 20, 3))
        a = big[4:16, 4:16]
        b = big[6:18, 5:17]  # a shifted by (dy=2, dx=1) inside the canvas
        flow = np.zeros((12, 12, 2))
        flow[:, :, 0] = -1.0
        flow[:, :, 1] = -2.0
        mask = np.zeros((12, 12))
        mask[3:9, 3:9] = 1  # interior only
        assert warping_error(a, b, flow, mask) <= 1e-6

    def test_out_of_bounds_excluded(self):
        img = np.random.default_rng(17).uniform(0, 1, (8, 8, 3))
        flow = np.full((8, 8, 2), 100.0)
        mask = np.ones((8, 8))
        with pytest.raises(DataError):
            warping_error(img, img, flow, mask)

    def test_all_occluded_rejected(self):
        img = np.zeros((8, 8, 3))
        flow = np.zeros((8, 8, 2))
        with pytest.raises(DataError):
            warping_error(img, img, flow, np.zeros((8, 8)))

    def test_dimension_checks(self):
        img = np.zeros((8, 8, 3))
        with pytest.raises(DimensionError):
            warping_error(img, img, np.zeros((4, 4, 2)), np.ones((8, 8)))
