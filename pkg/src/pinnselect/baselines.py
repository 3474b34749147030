"""Baseline collocation strategies: uniform, random, residual top-K (+anchors), k-center."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .scoring import CandidatePool, top_indices
from .selection import ANCHOR, OPTIMIZED, Selection, anchor_count, snap_to_pool

UNIFORM = "uniform"
RANDOM = "random"


def uniform_select(K: int, bounds, seed: int, stratified: bool = True) -> Selection:
    """Jittered grid of ceil(sqrt K)^2 cells with one point in each of K distinct cells.

    When the grid has more cells than K, the occupied cells are a seeded random
    subset.  ``stratified=False`` draws K i.i.d. uniform points instead.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    x_lo, x_hi, t_lo, t_hi = bounds
    rng = np.random.default_rng(seed)
    if stratified:
        n = math.isqrt(K - 1) + 1
        cells = np.arange(n * n)
        if n * n > K:
            cells = np.sort(rng.choice(n * n, size=K, replace=False))
        ci, cj = cells // n, cells % n
        u = rng.uniform(size=(K, 2))
        u = np.where(u == 0.0, 0.5, u)
        x = x_lo + (x_hi - x_lo) * (ci + u[:, 0]) / n
        t = t_lo + (t_hi - t_lo) * (cj + u[:, 1]) / n
    else:
        x = rng.uniform(x_lo, x_hi, K)
        t = rng.uniform(t_lo, t_hi, K)
    pts = np.column_stack([x, t])
    return Selection(np.full(K, -1, dtype=np.int64), pts, (UNIFORM,) * K)


def random_select(pool: CandidatePool, K: int, seed: int) -> Selection:
    if K > len(pool):
        raise ValueError(f"K={K} exceeds pool size {len(pool)}")
    idx = np.random.default_rng(seed).choice(len(pool), size=K, replace=False)
    return Selection(idx, pool.points[idx], (RANDOM,) * K)


def topk_residual(scores, K: int, pool: CandidatePool | None = None) -> Selection:
    """The K largest scores, ties by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    if K > len(scores):
        raise ValueError(f"K={K} exceeds the number of scores {len(scores)}")
    idx = top_indices(scores, K)
    pts = pool.points[idx] if pool is not None else np.full((K, 2), np.nan)
    return Selection(idx, pts, (OPTIMIZED,) * K)


def topk_with_anchors(pool: CandidatePool, scores, K: int, rho: float, seed: int) -> Selection:
    """floor(rho K) LHS anchors snapped to the pool, the rest by residual among the others."""
    k_anchor = anchor_count(K, rho)
    anchors = snap_to_pool(geometry.lhs_anchors(k_anchor, pool.bounds, seed), pool)
    rest = top_indices(scores, K - k_anchor, exclude=anchors)
    idx = np.concatenate([anchors, rest])
    return Selection(idx, pool.points[idx], (ANCHOR,) * k_anchor + (OPTIMIZED,) * len(rest))


def greedy_kcenter(points, K: int, seed: int, ell: tuple[float, float] = (1.0, 1.0)) -> Selection:
    """Farthest-point traversal under the (ell_x, ell_t)-scaled metric from a random start."""
    pts = np.asarray(points, dtype=np.float64)
    if K > len(pts):
        raise ValueError(f"K={K} exceeds the number of points {len(pts)}")
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    scaled = pts / np.asarray(ell, dtype=np.float64)
    start = int(np.random.default_rng(seed).integers(len(pts)))
    chosen = [start]
    d2 = np.sum((scaled - scaled[start]) ** 2, axis=1)
    for _ in range(K - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((scaled - scaled[nxt]) ** 2, axis=1))
    idx = np.array(chosen, dtype=np.int64)
    return Selection(idx, pts[idx], (OPTIMIZED,) * K)


def covering_radius(selected, targets, ell: tuple[float, float] = (1.0, 1.0)) -> float:
    """max over targets of the scaled distance to the nearest selected point."""
    s = np.asarray(ell, dtype=np.float64)
    d, _ = cKDTree(np.asarray(selected) / s).query(np.asarray(targets) / s)
    return float(np.max(d))
