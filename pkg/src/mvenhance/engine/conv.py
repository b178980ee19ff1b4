"""Convolution and patch-layout ops.

Heavy kernels are delegated to the selected backend; 1x1 stride-1
convolutions take a matmul shortcut (BLAS beats the direct loops there).
Patch gather is an index selection: gradients flow through the gathered
values back to the source patches, never through the indices.
"""

import numpy as np

from .. import backend
from ..errors import DimensionError
from .tensor import Tensor, _result, _check_same_dtype


def conv2d(x, w, b=None, stride=1, padding=0):
    """Cross-correlate x (N,Ci,H,W) with w (Co,Ci,kh,kw), optional bias (Co,)."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError("conv2d expects NCHW input and OIHW kernel")
    stride = int(stride)
    padding = int(padding)
    if stride < 1:
        raise DimensionError("conv2d stride must be positive")
    if padding < 0:
        raise DimensionError("conv2d padding must be non-negative")
    n, ci, h, wd = x.data.shape
    co, ci_k, kh, kw = w.data.shape
    if ci != ci_k:
        raise DimensionError(
            f"conv2d channel mismatch: input has {ci}, kernel expects {ci_k}")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise DimensionError(
            f"conv2d spatial dims {h}x{wd} (pad {padding}) smaller than kernel {kh}x{kw}")
    parents = [x, w]
    _check_same_dtype("conv2d", x, w)
    if b is not None:
        if b.data.shape != (co,):
            raise DimensionError("conv2d bias must be shaped (Co,)")
        _check_same_dtype("conv2d", x, b)
        parents.append(b)

    pointwise = kh == 1 and kw == 1 and stride == 1 and padding == 0
    xd, wdat = x.data, w.data
    if pointwise:
        w00 = wdat[:, :, 0, 0]
        out = np.ascontiguousarray(
            (w00 @ xd.reshape(n, ci, h * wd)).reshape(n, co, h, wd))
    else:
        out = backend.conv2d_forward(xd, wdat, stride, padding)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def grad_fn(g):
        g = np.ascontiguousarray(g)
        if pointwise:
            gm = g.reshape(n, co, h * wd)
            xm = xd.reshape(n, ci, h * wd)
            dx = np.ascontiguousarray((w00.T @ gm).reshape(n, ci, h, wd))
            dw = (gm @ xm.transpose(0, 2, 1)).sum(axis=0)[:, :, None, None]
            dw = np.ascontiguousarray(dw)
        else:
            dx, dw = backend.conv2d_backward(xd, wdat, g, stride, padding)
        grads = [dx, dw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return _result(np.ascontiguousarray(out), parents, grad_fn, "conv2d")


def reflect_pad_br(x, pad_h, pad_w):
    """Reflect-pad bottom/right; used to round spatial dims up to patch multiples."""
    if x.data.ndim != 4:
        raise DimensionError("reflect_pad_br expects NCHW input")
    n, c, h, w = x.data.shape
    if pad_h >= h or pad_w >= w:
        raise DimensionError("reflect padding must be smaller than the spatial extent")
    if pad_h == 0 and pad_w == 0:
        out = x.data
    else:
        out = np.pad(x.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")

    def grad_fn(g):
        if pad_w:
            core = np.ascontiguousarray(g[..., :w]).copy()
            core[..., w - 1 - pad_w:w - 1] += g[..., w:][..., ::-1]
            g = core
        if pad_h:
            core = np.ascontiguousarray(g[..., :h, :]).copy()
            core[..., h - 1 - pad_h:h - 1, :] += g[..., h:, :][..., ::-1, :]
            g = core
        return (np.ascontiguousarray(g),)

    return _result(np.ascontiguousarray(out), (x,), grad_fn, "reflect_pad_br")


def crop_tl(x, h, w):
    """Keep the top-left h x w region (inverse of bottom/right padding)."""
    if x.data.ndim != 4:
        raise DimensionError("crop_tl expects NCHW input")
    n, c, hh, ww = x.data.shape
    if h > hh or w > ww:
        raise DimensionError(f"crop {h}x{w} exceeds input {hh}x{ww}")
    out = np.ascontiguousarray(x.data[:, :, :h, :w])

    def grad_fn(g):
        gx = np.zeros((n, c, hh, ww), dtype=g.dtype)
        gx[:, :, :h, :w] = g
        return (gx,)

    return _result(out, (x,), grad_fn, "crop_tl")


def _to_patch_major(a, patch):
    n, c, h, w = a.shape
    rows, cols = h // patch, w // patch
    pm = a.reshape(n, c, rows, patch, cols, patch).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(pm).reshape(n, c, rows * cols, patch, patch)


def _from_patch_major(pm, rows, cols):
    n, c, g, p, _ = pm.shape
    a = pm.reshape(n, c, rows, cols, p, p).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(a).reshape(n, c, rows * p, cols * p)


def gather_patches(x, flat_idx, patch):
    """Rebuild the image from source patches selected per grid cell.

    flat_idx is a (rows*cols,) int array over the row-major patch grid of x;
    output patch g holds source patch flat_idx[g]. Gradient scatter-adds back
    into the selected source patches (duplicates accumulate).
    """
    if x.data.ndim != 4:
        raise DimensionError("gather_patches expects NCHW input")
    n, c, h, w = x.data.shape
    if h % patch or w % patch:
        raise DimensionError("gather_patches needs spatial dims divisible by patch")
    rows, cols = h // patch, w // patch
    grid = rows * cols
    idx = np.asarray(flat_idx, dtype=np.int64).reshape(-1)
    if idx.shape[0] != grid or idx.min() < 0 or idx.max() >= grid:
        raise DimensionError("gather_patches index array does not match the grid")

    pm = _to_patch_major(x.data, patch)
    out = _from_patch_major(pm[:, :, idx], rows, cols)

    def grad_fn(g):
        g_pm = _to_patch_major(g, patch)
        # scatter-add as a matmul with the one-hot selection matrix
        sel = np.zeros((grid, grid), dtype=g.dtype)
        sel[np.arange(grid), idx] = 1
        gx_pm = np.moveaxis(np.tensordot(g_pm, sel, axes=([2], [0])), -1, 2)
        return (_from_patch_major(np.ascontiguousarray(gx_pm), rows, cols),)

    return _result(out, (x,), grad_fn, "gather_patches")


def avg_pool_patches(x, patch):
    """Mean over non-overlapping patch blocks: (N,C,H,W) -> (N,C,rows,cols)."""
    if x.data.ndim != 4:
        raise DimensionError("avg_pool_patches expects NCHW input")
    n, c, h, w = x.data.shape
    if h % patch or w % patch:
        raise DimensionError("avg_pool_patches needs spatial dims divisible by patch")
    rows, cols = h // patch, w // patch
    out = x.data.reshape(n, c, rows, patch, cols, patch).mean(axis=(3, 5))
    inv = 1.0 / (patch * patch)

    def grad_fn(g):
        gx = np.repeat(np.repeat(g, patch, axis=2), patch, axis=3)
        return (np.ascontiguousarray(gx * np.array(inv, dtype=g.dtype)),)

    return _result(np.ascontiguousarray(out), (x,), grad_fn, "avg_pool_patches")


def repeat_patches(x, patch):
    """Nearest upsample of a per-patch map back to pixel layout."""
    if x.data.ndim != 4:
        raise DimensionError("repeat_patches expects NCHW input")
    n, c, rows, cols = x.data.shape
    out = np.repeat(np.repeat(x.data, patch, axis=2), patch, axis=3)

    def grad_fn(g):
        gx = g.reshape(n, c, rows, patch, cols, patch).sum(axis=(3, 5))
        return (np.ascontiguousarray(gx),)

    return _result(np.ascontiguousarray(out), (x,), grad_fn, "repeat_patches")
