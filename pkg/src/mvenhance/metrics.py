"""Evaluation metrics: PSNR, lightness-order error, brightness consistency,
and flow-based warping error. All computed in float64 on numpy images."""

import math

import numpy as np

from .errors import DataError, DimensionError
from .losses import ssim_value

LOE_TARGET_SIDE = 100
LOE_SCALE = 1000.0


def psnr(x, y):
    """10*log10(1/MSE) with peak 1.0; identical images give +inf."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"psnr shape mismatch: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def lightness(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img.max(axis=2)
    return img


def _nearest_downsample(plane, target=LOE_TARGET_SIDE):
    h, w = plane.shape
    longest = max(h, w)
    if longest <= target:
        return plane
    s = target / longest
    nh, nw = max(1, round(h * s)), max(1, round(w * s))
    ri = np.minimum((np.arange(nh) * h / nh).astype(np.int64), h - 1)
    ci = np.minimum((np.arange(nw) * w / nw).astype(np.int64), w - 1)
    return plane[ri][:, ci]


def loe(enhanced, reference):
    """Lightness-order error: mean pairwise relative-order disagreement of the
    max-RGB lightness between enhanced and reference, scaled by 1000.

    Both images are nearest-neighbor downsampled so the longer side is at
    most 100 px (subsampling preserves values, hence orderings).
    """
    enhanced = np.asarray(enhanced, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if enhanced.shape != reference.shape:
        raise DimensionError(f"loe shape mismatch: {enhanced.shape} vs {reference.shape}")
    le = _nearest_downsample(lightness(enhanced)).reshape(-1)
    lr = _nearest_downsample(lightness(reference)).reshape(-1)
    n = le.size
    disagreements = 0
    chunk = max(1, (2 ** 22) // n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        oe = le[start:stop, None] >= le[None, :]
        orf = lr[start:stop, None] >= lr[None, :]
        disagreements += int(np.count_nonzero(oe ^ orf))
    return LOE_SCALE * disagreements / (n * n)


def ab_mabd(images):
    """Brightness-consistency pair over an ordered view sequence.

    AB is the population variance of per-image mean brightness on the 0-255
    scale; MABD is the mean absolute difference between adjacent images'
    mean brightness on the same scale.
    """
    if len(images) < 2:
        raise DataError("ab_mabd needs at least two images")
    means = np.array([255.0 * float(np.mean(np.asarray(im, dtype=np.float64)))
                      for im in images])
    ab = float(np.var(means))
    mabd = float(np.mean(np.abs(np.diff(means))))
    return ab, mabd


def warping_error(img_a, img_b, flow, mask):
    """Masked MSE between img_a and img_b bilinearly warped by flow (a->b).

    flow is H x W x 2 (dx, dy) pixel displacements; mask is H x W with 0
    marking occluded pixels. Samples falling outside img_b are excluded,
    never extrapolated.
    """
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    mask = np.asarray(mask)
    if a.shape != b.shape:
        raise DimensionError(f"warping_error image shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    if flow.shape != (h, w, 2):
        raise DimensionError(f"flow shape {flow.shape} does not match images {a.shape}")
    if mask.shape != (h, w):
        raise DimensionError(f"mask shape {mask.shape} does not match images {a.shape}")

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    sx = xs + flow[:, :, 0]
    sy = ys + flow[:, :, 1]
    inb = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    valid = inb & (mask > 0)
    if not valid.any():
        raise DataError("warping_error: no valid pixels (all occluded or out of bounds)")

    sxv = sx[valid]
    syv = sy[valid]
    x0 = np.floor(sxv).astype(np.int64)
    y0 = np.floor(syv).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sxv - x0)[:, None] if a.ndim == 3 else sxv - x0
    fy = (syv - y0)[:, None] if a.ndim == 3 else syv - y0
    warped = (b[y0, x0] * (1 - fx) * (1 - fy) + b[y0, x1] * fx * (1 - fy)
              + b[y1, x0] * (1 - fx) * fy + b[y1, x1] * fx * fy)
    diff = a[valid] - warped
    return float(np.mean(diff ** 2))


def ssim_metric(x, y):
    return ssim_value(x, y)
