"""Network-level finite-difference checks (also driven by `gradcheck` on the CLI).

The alignment indices are frozen at the base point before differencing: the
analytic gradient is the derivative of the fixed-index function, so the
oracle must difference that same function.
"""

import numpy as np

from . import network
from .engine import tensor as T
from .engine.gradcheck import finite_diff_check, op_gradcheck_suite
from .losses import l_total


def _toy_params(seed, units=1, dtype=np.float64):
    cfg = network.ModelConfig(channels=4, units=units, top_k=2, patch=7, radius=1,
                              se_reduction=4, encoder_depth=2)
    return network.ModelParams.initialize(cfg, seed=seed, dtype=dtype)


def intra_branch_check(eps=1e-5, seed=5):
    """Gradient through the spatial and channel attention branches."""
    params = _toy_params(seed)
    rng = np.random.default_rng(seed + 1)
    x0 = rng.standard_normal((1, 4, 14, 14))

    def f(t):
        out = network.intra_view_en(params, 0, t, None)
        return T.mean_all(T.mul(out, out))

    return finite_diff_check(f, T.Tensor(x0, dtype=np.float64), eps)


def confidence_check(eps=1e-5, seed=9):
    """Gradient through the confidence evaluator."""
    params = _toy_params(seed)
    rng = np.random.default_rng(seed + 1)
    x0 = rng.standard_normal((1, 3, 14, 14))

    def f(t):
        out = network.confidence_eval(params, 0, t)
        return T.mean_all(T.mul(out, out))

    return finite_diff_check(f, T.Tensor(x0, dtype=np.float64), eps)


def single_unit_loss_check(eps=1e-5, seed=17):
    """Full single-unit forward plus the total training loss, differentiated
    w.r.t. the primary view's features."""
    params = _toy_params(seed)
    rng = np.random.default_rng(seed + 1)
    feats = [rng.standard_normal((1, 4, 14, 14)) for _ in range(3)]
    gt = T.Tensor(rng.uniform(0.15, 0.85, (1, 3, 14, 14)), dtype=np.float64)

    fixed = [T.Tensor(feats[0], dtype=np.float64), T.Tensor(feats[2], dtype=np.float64)]
    base = [fixed[0], T.Tensor(feats[1], dtype=np.float64), fixed[1]]
    _, _, frozen = network.run_units(params, base, collect_align=True)

    def f(t):
        restored, inters, _ = network.run_units(
            params, [fixed[0], t, fixed[1]], frozen_align=frozen)
        return l_total(inters, restored, gt)

    return finite_diff_check(f, T.Tensor(feats[1], dtype=np.float64), eps)


def full_suite(seed=7):
    """All checks at 64-bit precision; returns {name: max relative error}."""
    results = dict(op_gradcheck_suite(dtype=np.float64, seed=seed))
    results["intra_view_en"] = intra_branch_check()
    results["confidence_eval"] = confidence_check()
    results["single_unit_loss"] = single_unit_loss_check()
    return results
