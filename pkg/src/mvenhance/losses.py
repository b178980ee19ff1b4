"""Training losses: differentiable SSIM and the reconstruction objective.

The reconstruction loss is mean absolute error plus (1 - SSIM); the total
training loss sums one reconstruction term per intermediate prediction plus
the final output term, all against the primary view's ground truth.
"""

import numpy as np

from .engine import conv as C
from .engine import tensor as T
from .errors import DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA, dtype=np.float32):
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    return k.astype(dtype).reshape(1, 1, size, size)


def _as_nchw(x):
    if x.data.ndim == 2:
        h, w = x.data.shape
        return T.reshape(x, (1, 1, h, w))
    if x.data.ndim == 3:
        c, h, w = x.data.shape
        return T.reshape(x, (1, c, h, w))
    if x.data.ndim == 4:
        return x
    raise DimensionError(f"image tensor rank {x.data.ndim} not supported")


def _ssim_channel(xc, yc, win):
    mu_x = C.conv2d(xc, win)
    mu_y = C.conv2d(yc, win)
    xx = C.conv2d(T.mul(xc, xc), win)
    yy = C.conv2d(T.mul(yc, yc), win)
    xy = C.conv2d(T.mul(xc, yc), win)
    mu_xx = T.mul(mu_x, mu_x)
    mu_yy = T.mul(mu_y, mu_y)
    mu_xy = T.mul(mu_x, mu_y)
    var_x = T.sub(xx, mu_xx)
    var_y = T.sub(yy, mu_yy)
    cov = T.sub(xy, mu_xy)
    num = T.mul(T.add_scalar(T.scale(mu_xy, 2.0), SSIM_C1),
                T.add_scalar(T.scale(cov, 2.0), SSIM_C2))
    den = T.mul(T.add_scalar(T.add(mu_xx, mu_yy), SSIM_C1),
                T.add_scalar(T.add(var_x, var_y), SSIM_C2))
    return T.mean_all(T.div(num, den))


def ssim(x, y):
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5), per channel then
    averaged; differentiable. Uses valid-mode windowing."""
    x = _as_nchw(x)
    y = _as_nchw(y)
    if x.data.shape != y.data.shape:
        raise DimensionError(f"ssim shape mismatch: {x.data.shape} vs {y.data.shape}")
    n, c, h, w = x.data.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise DimensionError(f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images")
    win = T.Tensor(gaussian_window(dtype=x.data.dtype))
    terms = []
    for ch in range(c):
        terms.append(_ssim_channel(T.slice_channels(x, ch, ch + 1),
                                   T.slice_channels(y, ch, ch + 1), win))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.scale(total, 1.0 / c)


def l_rec(x, y):
    """Pixel + structure consistency: mean |x - y| + (1 - SSIM(x, y))."""
    x = _as_nchw(x)
    y = _as_nchw(y)
    if x.data.shape != y.data.shape:
        raise DimensionError(f"l_rec shape mismatch: {x.data.shape} vs {y.data.shape}")
    l1 = T.mean_all(T.absolute(T.sub(x, y)))
    return T.add(l1, T.add_scalar(T.neg(ssim(x, y)), 1.0))


def l_total(intermediates, restored, gt):
    """Sum of per-stage reconstruction terms plus the final output term."""
    total = l_rec(restored, gt)
    for inter in intermediates:
        total = T.add(total, l_rec(inter, gt))
    return total


def ssim_value(a, b):
    """SSIM of two numpy images (H,W) or (H,W,C), computed in float64."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a = a.transpose(2, 0, 1)
        b = b.transpose(2, 0, 1)
    return float(ssim(T.Tensor(a, dtype=np.float64), T.Tensor(b, dtype=np.float64)).data)
