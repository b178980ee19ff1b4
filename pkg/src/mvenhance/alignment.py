"""Cross-view patch alignment: partition, windowed top-K correlation search,
confidence-weighted candidate assembly, and an exhaustive oracle.

Features are partitioned into non-overlapping patches (reflect-padded up to
multiples of the patch size). For every primary patch the K highest
normalized-inner-product matches among grid cells within Chebyshev distance
<= radius are returned, ties broken by row-major window scan order. Scoring
runs in float64 on both the fast path and the oracle so index agreement is
exact.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DimensionError


@dataclass
class PatchGrid:
    feature: np.ndarray  # (C, Hp, Wp) after padding
    patch: int
    rows: int
    cols: int
    vectors: np.ndarray  # (rows, cols, C * patch * patch) float64


def pad_amounts(h, w, patch):
    return (-h) % patch, (-w) % patch


def partition(feature, patch):
    """Reflect-pad bottom/right to patch multiples, then grid into patches."""
    if patch <= 0:
        raise DimensionError("patch size must be positive")
    feature = np.asarray(feature)
    if feature.ndim != 3:
        raise DimensionError(f"partition expects (C, H, W) features, got {feature.shape}")
    c, h, w = feature.shape
    ph, pw = pad_amounts(h, w, patch)
    if ph >= h or pw >= w:
        raise DimensionError(
            f"feature {h}x{w} too small to reflect-pad to a multiple of {patch}")
    if ph or pw:
        feature = np.pad(feature, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    rows, cols = (h + ph) // patch, (w + pw) // patch
    vec = feature.reshape(c, rows, patch, cols, patch).transpose(1, 3, 0, 2, 4)
    vec = np.ascontiguousarray(vec).reshape(rows, cols, c * patch * patch)
    return PatchGrid(feature=np.ascontiguousarray(feature), patch=patch,
                     rows=rows, cols=cols, vectors=vec.astype(np.float64))


def correlate(fp, fa):
    """Normalized inner product; zero-norm operands correlate to 0."""
    fp = np.asarray(fp, dtype=np.float64).reshape(-1)
    fa = np.asarray(fa, dtype=np.float64).reshape(-1)
    if fp.shape != fa.shape:
        raise DimensionError(f"correlate length mismatch: {fp.shape} vs {fa.shape}")
    denom = np.linalg.norm(fp) * np.linalg.norm(fa)
    if denom == 0.0:
        return 0.0
    return float(np.dot(fp, fa) / denom)


@dataclass
class TopKMatches:
    indices: np.ndarray  # (rows, cols, K, 2) source grid coords, descending rho
    rho: np.ndarray      # (rows, cols, K) float64
    counts: np.ndarray   # (rows, cols) valid candidates; trailing slots repeat the last
    k: int
    radius: int

    def flat_indices(self, cols, slot):
        idx = self.indices[:, :, slot]
        return (idx[:, :, 0] * cols + idx[:, :, 1]).reshape(-1)


def _check_congruent(primary, source):
    if (primary.rows, primary.cols, primary.patch) != (source.rows, source.cols, source.patch):
        raise DimensionError("primary and source grids are not congruent")


def _fill_result(rows, cols, k, radius, per_cell):
    """per_cell(r, c) -> (coords list, rho list) sorted; builds padded arrays."""
    indices = np.zeros((rows, cols, k, 2), dtype=np.int64)
    rho = np.zeros((rows, cols, k), dtype=np.float64)
    counts = np.zeros((rows, cols), dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            coords, scores = per_cell(r, c)
            m = len(coords)
            counts[r, c] = m
            for i in range(k):
                j = min(i, m - 1)
                indices[r, c, i] = coords[j]
                rho[r, c, i] = scores[j]
    return TopKMatches(indices=indices, rho=rho, counts=counts, k=k, radius=radius)


def topk_search(primary, source, k, radius):
    """Windowed top-K correlation search from source patches onto the primary grid.

    Vectorized: clipped window cells carry the -2.0 sentinel, which sorts after
    every valid correlation (rho >= -1); the stable sort realizes the
    row-major-scan tie rule. Border cells with fewer than k candidates repeat
    their last candidate in the trailing slots (counts records the real number).
    """
    _check_congruent(primary, source)
    side = 2 * radius + 1
    if k < 1:
        raise DimensionError("topk_search needs k >= 1")
    if k > side * side:
        raise DimensionError(
            f"k={k} exceeds the {side}x{side} search window population")
    rows, cols = primary.rows, primary.cols
    scores = backend.window_scores(primary.vectors, source.vectors, radius)

    wi = np.arange(side * side)
    dy = wi // side - radius
    dx = wi % side - radius
    sr = np.arange(rows)[:, None, None] + dy[None, None, :]
    sc = np.arange(cols)[None, :, None] + dx[None, None, :]
    valid = (sr >= 0) & (sr < rows) & (sc >= 0) & (sc < cols)
    counts = np.minimum(valid.sum(axis=2), k).astype(np.int64)

    order = np.argsort(-scores, axis=2, kind="stable")
    slot = np.minimum(np.arange(k)[None, None, :], counts[:, :, None] - 1)
    take = np.take_along_axis(order, slot, axis=2)
    rho = np.take_along_axis(scores, take, axis=2)
    indices = np.stack([np.take_along_axis(np.broadcast_to(sr, scores.shape), take, 2),
                        np.take_along_axis(np.broadcast_to(sc, scores.shape), take, 2)],
                       axis=3).astype(np.int64)
    return TopKMatches(indices=indices, rho=rho, counts=counts, k=k, radius=radius)


def brute_force_oracle(primary, source, k, radius):
    """Exhaustive reference search: per-cell correlate() calls, same tie rule."""
    _check_congruent(primary, source)
    side = 2 * radius + 1
    if k > side * side:
        raise DimensionError(
            f"k={k} exceeds the {side}x{side} search window population")
    rows, cols = primary.rows, primary.cols

    def per_cell(r, c):
        cands = []
        pos = 0
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                sr, sc = r + dy, c + dx
                if 0 <= sr < rows and 0 <= sc < cols:
                    rho = correlate(primary.vectors[r, c], source.vectors[sr, sc])
                    cands.append((-rho, pos, (sr, sc)))
                pos += 1
        cands.sort()
        top = cands[:k]
        return [t[2] for t in top], [-t[0] for t in top]

    return _fill_result(rows, cols, k, radius, per_cell)


def weighted_average(candidates, conf):
    """Confidence-scaled arithmetic mean of candidate patch vectors."""
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.ndim < 2 or candidates.shape[0] < 1:
        raise DimensionError("weighted_average needs at least one candidate vector")
    return float(conf) * candidates.mean(axis=0)


def _gather_plane(source, matches, slot):
    p = source.patch
    planes = np.empty_like(source.feature)
    for r in range(matches.indices.shape[0]):
        for c in range(matches.indices.shape[1]):
            sr, sc = matches.indices[r, c, slot]
            planes[:, r * p:(r + 1) * p, c * p:(c + 1) * p] = \
                source.feature[:, sr * p:(sr + 1) * p, sc * p:(sc + 1) * p]
    return planes


def assemble_aligned(matches, source, conf=None):
    """Channel-stack the K gathered candidates plus the confidence-weighted
    average, in padded image layout.

    conf: per-patch scalars (rows, cols) or None (treated as 1). Returns
    (aligned ((K+1)*C, Hp, Wp), top1 (C, Hp, Wp)).
    """
    k = matches.k
    gathered = [_gather_plane(source, matches, i) for i in range(k)]
    avg = sum(gathered[1:], gathered[0].copy()) / k
    if conf is not None:
        conf = np.asarray(conf, dtype=source.feature.dtype)
        if conf.shape != (matches.indices.shape[0], matches.indices.shape[1]):
            raise DimensionError("confidence grid does not match the patch grid")
        avg = avg * np.repeat(np.repeat(conf, source.patch, 0), source.patch, 1)[None]
    aligned = np.concatenate(gathered + [avg], axis=0)
    return aligned, gathered[0]


@dataclass
class AlignResult:
    topk_idx: np.ndarray
    topk_rho: np.ndarray
    counts: np.ndarray
    aligned: np.ndarray
    top1: np.ndarray


def align_views(primary_feature, source_feature, k, radius, patch, conf=None):
    """Full alignment of one source view onto the primary: search + assembly."""
    pg = partition(primary_feature, patch)
    sg = partition(source_feature, patch)
    matches = topk_search(pg, sg, k, radius)
    aligned, top1 = assemble_aligned(matches, sg, conf=conf)
    return AlignResult(topk_idx=matches.indices, topk_rho=matches.rho,
                       counts=matches.counts, aligned=aligned, top1=top1)
