"""NumPy implementations of the hot kernels.

Active when the compiled extension is unavailable or when
MVENHANCE_BACKEND=fallback is set. Layout conventions match the engine:
activations are NCHW, convolution kernels are OIHW, everything C-contiguous.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "fallback"


def _pad_input(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, stride, pad):
    """Cross-correlation of x (N,Ci,H,W) with w (Co,Ci,kh,kw), no bias."""
    kh, kw = w.shape[2], w.shape[3]
    xp = _pad_input(x, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    y = np.tensordot(win, w, axes=((1, 4, 5), (1, 2, 3)))  # (N,Ho,Wo,Co)
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d_backward(x, w, dy, stride, pad):
    """Gradients of conv2d_forward w.r.t. x and w, given dy (N,Co,Ho,Wo)."""
    n, ci, h, wd = x.shape
    kh, kw = w.shape[2], w.shape[3]
    ho, wo = dy.shape[2], dy.shape[3]
    xp = _pad_input(x, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    dw = np.tensordot(dy, win, axes=((0, 2, 3), (0, 2, 3)))  # (Co,Ci,kh,kw)

    gcols = np.tensordot(dy, w, axes=((1,), (0,)))  # (N,Ho,Wo,Ci,kh,kw)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return np.ascontiguousarray(dx), np.ascontiguousarray(dw)


def window_scores(primary, source, radius):
    """Normalized inner products between each primary patch and every source
    patch in its search window.

    primary, source: (rows, cols, d) float64 patch vectors on congruent grids.
    Returns (rows, cols, (2*radius+1)**2) float64 scores in window scan order
    (row-major over the dy, dx offsets); grid-clipped cells hold -2.0.
    Zero-norm patches score 0 against everything.
    """
    rows, cols, _ = primary.shape

    def unit(v):
        nrm = np.linalg.norm(v, axis=2, keepdims=True)
        return np.divide(v, nrm, out=np.zeros_like(v), where=nrm > 0)

    pu = unit(primary)
    su = unit(source)
    side = 2 * radius + 1
    scores = np.full((rows, cols, side * side), -2.0)
    for wi in range(side * side):
        dy = wi // side - radius
        dx = wi % side - radius
        r0, r1 = max(0, -dy), rows - max(0, dy)
        c0, c1 = max(0, -dx), cols - max(0, dx)
        if r0 >= r1 or c0 >= c1:
            continue
        scores[r0:r1, c0:c1, wi] = np.einsum(
            "rcd,rcd->rc", pu[r0:r1, c0:c1], su[r0 + dy : r1 + dy, c0 + dx : c1 + dx]
        )
    return scores
