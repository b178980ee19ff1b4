"""Match visualization for align-inspect: primary and source side by side,
top-1 correspondences drawn as line segments colored by correlation."""

import numpy as np


def _draw_segment(canvas, y0, x0, y1, x1, color):
    h, w = canvas.shape[:2]
    steps = int(max(abs(y1 - y0), abs(x1 - x0), 1)) * 2
    ys = np.clip(np.round(np.linspace(y0, y1, steps)).astype(int), 0, h - 1)
    xs = np.clip(np.round(np.linspace(x0, x1, steps)).astype(int), 0, w - 1)
    canvas[ys, xs] = color


def draw_matches(primary_img, source_img, matches, patch):
    """Side-by-side panel with one segment per patch from the primary patch
    center to its best-match center in the source view. Green segments mark
    high correlation, red low."""
    left = np.asarray(primary_img, dtype=np.float32)
    right = np.asarray(source_img, dtype=np.float32)
    h = max(left.shape[0], right.shape[0])
    gap = 8
    canvas = np.zeros((h, left.shape[1] + gap + right.shape[1], 3), dtype=np.float32)
    canvas[:left.shape[0], :left.shape[1]] = left
    xoff = left.shape[1] + gap
    canvas[:right.shape[0], xoff:xoff + right.shape[1]] = right

    rows, cols = matches.indices.shape[:2]
    for r in range(rows):
        for c in range(cols):
            sr, sc = matches.indices[r, c, 0]
            rho = matches.rho[r, c, 0]
            y0 = r * patch + patch // 2
            x0 = c * patch + patch // 2
            y1 = int(sr) * patch + patch // 2
            x1 = xoff + int(sc) * patch + patch // 2
            t = float(np.clip((rho + 1.0) / 2.0, 0.0, 1.0))
            _draw_segment(canvas, y0, x0, y1, x1, np.array([1.0 - t, t, 0.1], dtype=np.float32))
    return canvas
