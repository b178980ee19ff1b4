"""Independent finite-difference oracle for the gradient engine."""

import numpy as np

from ..errors import ContractError
from . import conv as C
from . import tensor as T


def _score(t):
    """Scalarize in float64 so the probe sum does not quantize f32 checks."""
    return T.sum_all(T.cast(t, np.float64)) if t.data.dtype == np.float32 else T.sum_all(t)


def finite_diff_check(f, x, eps=1e-5):
    """Max relative disagreement between analytic and central-difference grads.

    f must be a deterministic map from one tensor to a scalar tensor. The
    relative error of element i is |a_i - d_i| / max(|a_i|, |d_i|, 1e-8).
    """
    if eps <= 0:
        raise ContractError("finite_diff_check needs eps > 0")
    probe = T.Tensor(x.data.copy(), requires_grad=True, dtype=x.data.dtype)
    out = f(probe)
    if out.data.ndim != 0:
        raise ContractError("finite_diff_check target must return a scalar")
    T.backward(out)
    analytic = np.zeros_like(probe.data) if probe.grad is None else probe.grad

    work = x.data.copy()
    flat = work.reshape(-1)
    diffs = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(T.Tensor(work.copy(), dtype=work.dtype)).data)
        flat[i] = orig - eps
        lo = float(f(T.Tensor(work.copy(), dtype=work.dtype)).data)
        flat[i] = orig
        diffs[i] = (hi - lo) / (2.0 * eps)

    numeric = diffs.reshape(work.shape)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def _away_from_kinks(rng, shape, eps):
    """Random values with |v| well above eps, so perturbations never cross the
    relu/abs kink (finite differences are meaningless across it)."""
    margin = max(5e-4, 5.0 * eps)
    v = rng.uniform(margin, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
    return v


def op_gradcheck_suite(dtype=np.float64, eps=None, seed=7):
    """Finite-difference check for every differentiable op; returns {name: err}."""
    rng = np.random.default_rng(seed)
    dt = np.dtype(dtype)
    f64 = dt == np.float64
    if eps is None:
        eps = 1e-5 if f64 else 1e-2

    def rand(*shape):
        if f64:
            return rng.standard_normal(shape).astype(dt)
        # float32 checks need gradient magnitudes above the fd quantization
        # floor, so keep inputs away from zero
        v = rng.uniform(0.3, 1.0, shape) * rng.choice([-1.0, 1.0], shape)
        return v.astype(dt)

    def randw(*shape):
        if f64:
            # keep pre-activations in sigmoid's responsive range
            return (0.25 * rng.standard_normal(shape)).astype(dt)
        # positive weights avoid cross-output cancellation in input gradients
        return rng.uniform(0.05, 0.3, shape).astype(dt)

    results = {}

    b_add = T.Tensor(rand(2, 3, 4, 4), dtype=dt)
    results["add"] = finite_diff_check(
        lambda t: _score(T.add(t, b_add)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    b_bc = T.Tensor(rand(2, 1, 4, 4), dtype=dt)
    results["sub_broadcast"] = finite_diff_check(
        lambda t: _score(T.sub(t, b_bc)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    b_mul = T.Tensor(rand(2, 3, 1, 1), dtype=dt)
    results["mul_broadcast"] = finite_diff_check(
        lambda t: _score(T.mul(t, b_mul)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    b_div = T.Tensor((rng.uniform(0.5, 1.5, (2, 3, 4, 4))).astype(dt), dtype=dt)
    results["div"] = finite_diff_check(
        lambda t: _score(T.div(t, b_div)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    results["div_denominator"] = finite_diff_check(
        lambda t: _score(T.div(b_add, T.add_scalar(t, 3.0))),
        T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    results["scale"] = finite_diff_check(
        lambda t: _score(T.scale(t, -1.7)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)
    results["abs"] = finite_diff_check(
        lambda t: _score(T.absolute(t)),
        T.Tensor(_away_from_kinks(rng, (2, 3, 8, 8), eps).astype(dt), dtype=dt), eps)
    results["relu"] = finite_diff_check(
        lambda t: _score(T.relu(t)),
        T.Tensor(_away_from_kinks(rng, (2, 3, 8, 8), eps).astype(dt), dtype=dt), eps)
    results["leaky_relu"] = finite_diff_check(
        lambda t: _score(T.leaky_relu(t)),
        T.Tensor(_away_from_kinks(rng, (2, 3, 8, 8), eps).astype(dt), dtype=dt), eps)
    results["sigmoid"] = finite_diff_check(
        lambda t: _score(T.sigmoid(t)), T.Tensor(rand(2, 3, 8, 8), dtype=dt), eps)
    gap_mix = T.Tensor(rand(2, 3, 1, 1), dtype=dt)
    results["global_avg_pool"] = finite_diff_check(
        lambda t: _score(T.mul(T.global_avg_pool(t), gap_mix)),
        T.Tensor(rand(2, 3, 6, 6), dtype=dt), eps)

    wd = T.Tensor(randw(5, 4), dtype=dt)
    bd = T.Tensor(rand(5), dtype=dt)
    results["dense_x"] = finite_diff_check(
        lambda t: _score(T.sigmoid(T.dense(t, wd, bd))), T.Tensor(rand(3, 4), dtype=dt), eps)
    xd = T.Tensor(rand(3, 4), dtype=dt)
    results["dense_w"] = finite_diff_check(
        lambda t: _score(T.sigmoid(T.dense(xd, t, bd))), T.Tensor(randw(5, 4), dtype=dt), eps)

    other = T.Tensor(rand(2, 2, 5, 5), dtype=dt)

    def concat_fn(t):
        cat = T.concat_channels([t, other])
        return _score(T.mul(cat, T.Tensor(rand_fixed_cat, dtype=dt)))

    rand_fixed_cat = rng.standard_normal((2, 5, 5, 5)).astype(dt)
    results["concat_channels"] = finite_diff_check(
        concat_fn, T.Tensor(rand(2, 3, 5, 5), dtype=dt), eps)
    results["slice_channels"] = finite_diff_check(
        lambda t: _score(T.sigmoid(T.slice_channels(t, 1, 3))),
        T.Tensor(rand(2, 4, 5, 5), dtype=dt), eps)
    results["reshape"] = finite_diff_check(
        lambda t: _score(T.sigmoid(T.reshape(t, (2, 12)))),
        T.Tensor(rand(2, 3, 2, 2), dtype=dt), eps)
    results["mean"] = finite_diff_check(
        lambda t: T.mean_all(T.mul(t, t)), T.Tensor(rand(2, 3, 4, 4), dtype=dt), eps)

    wk = T.Tensor(randw(4, 3, 3, 3), dtype=dt)
    bk = T.Tensor(rand(4), dtype=dt)
    results["conv2d_input"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(t, wk, bk, stride=1, padding=1))),
        T.Tensor(rand(2, 3, 6, 6), dtype=dt), eps)
    xk = T.Tensor(np.abs(rand(2, 3, 6, 6)), dtype=dt)  # positive: kernel grads sum sigma'*x
    results["conv2d_kernel"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(xk, t, bk, stride=1, padding=1))),
        T.Tensor(randw(4, 3, 3, 3), dtype=dt), eps)
    results["conv2d_bias"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(xk, wk, t, stride=1, padding=1))),
        T.Tensor(rand(4), dtype=dt), eps)
    results["conv2d_stride2"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(t, wk, bk, stride=2, padding=1))),
        T.Tensor(rand(2, 3, 7, 7), dtype=dt), eps)
    w_pw = T.Tensor(randw(4, 3, 1, 1), dtype=dt)
    results["conv2d_pointwise"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(t, w_pw))),
        T.Tensor(rand(2, 3, 5, 5), dtype=dt), eps)

    results["reflect_pad_br"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.reflect_pad_br(t, 2, 3))),
        T.Tensor(rand(1, 2, 6, 6), dtype=dt), eps)
    results["crop_tl"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.crop_tl(t, 4, 3))),
        T.Tensor(rand(1, 2, 6, 6), dtype=dt), eps)

    idx = rng.integers(0, 9, size=9)
    results["gather_patches"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.gather_patches(t, idx, 2))),
        T.Tensor(rand(1, 2, 6, 6), dtype=dt), eps)
    results["avg_pool_patches"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.avg_pool_patches(t, 2))),
        T.Tensor(rand(1, 2, 6, 6), dtype=dt), eps)
    results["repeat_patches"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.repeat_patches(t, 2))),
        T.Tensor(rand(1, 2, 3, 3), dtype=dt), eps)

    w_chain = T.Tensor(randw(2, 2, 3, 3), dtype=dt)
    b_chain = T.Tensor(rand(2), dtype=dt)
    results["conv_sigmoid_chain"] = finite_diff_check(
        lambda t: _score(T.sigmoid(C.conv2d(t, w_chain, b_chain, padding=1))),
        T.Tensor(rand(1, 2, 5, 5), dtype=dt), eps)
    return results
