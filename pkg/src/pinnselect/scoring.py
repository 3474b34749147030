"""Candidate pool, residual importance scores, normalization and prefiltering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pinn import MlpParams, forward_jets


@dataclass(frozen=True)
class CandidatePool:
    points: np.ndarray  # (N, 2) array of (x, t)
    seed: int | None
    bounds: tuple[float, float, float, float]  # x_lo, x_hi, t_lo, t_hi

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, indices) -> "CandidatePool":
        return CandidatePool(self.points[np.asarray(indices, dtype=np.int64)], self.seed, self.bounds)


@dataclass(frozen=True)
class ScoringConfig:
    mode: str = "minmax"  # "minmax" or "robust"
    clip_quantile: float = 0.99
    M: int = 4000
    beta: float = 0.7

    def __post_init__(self):
        if self.mode not in ("minmax", "robust"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")
        if not 0 < self.clip_quantile <= 1:
            raise ValueError(f"clip quantile must lie in (0, 1], got {self.clip_quantile}")
        if not 0 <= self.beta <= 1:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.M < 1:
            raise ValueError(f"M must be positive, got {self.M}")


def sample_pool(n: int, bounds: tuple[float, float, float, float], seed: int) -> CandidatePool:
    """``n`` i.i.d. uniform points in the open space-time interior."""
    if n < 1:
        raise ValueError(f"pool size must be >= 1, got {n}")
    x_lo, x_hi, t_lo, t_hi = bounds
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 2))
    while len(pts) < n:
        m = n - len(pts)
        cand = np.column_stack([rng.uniform(x_lo, x_hi, m), rng.uniform(t_lo, t_hi, m)])
        # uniform() can return the lower edge, which lies on the IC/BC locus
        cand = cand[(cand[:, 0] > x_lo) & (cand[:, 1] > t_lo)]
        pts = np.concatenate([pts, cand])
        _, first = np.unique(pts, axis=0, return_index=True)
        pts = pts[np.sort(first)]
    return CandidatePool(pts, seed, tuple(float(b) for b in bounds))


def score_candidates(params: MlpParams, pool: CandidatePool, nu: float,
                     chunk: int = 8192) -> np.ndarray:
    """Squared Burgers residual at every candidate."""
    pts = pool.points
    out = np.empty(len(pts))
    for lo in range(0, len(pts), chunk):
        p = pts[lo:lo + chunk]
        j = forward_jets(params, p[:, 0], p[:, 1])
        r = j.u_t + j.u * j.u_x - nu * j.u_xx
        out[lo:lo + chunk] = r * r
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.argmax(bad))
        raise FloatingPointError(f"non-finite residual at candidate {i} "
                                 f"(x={float(pts[i, 0])!r}, t={float(pts[i, 1])!r})")
    return out


def normalize_scores(raw, config: ScoringConfig = ScoringConfig()) -> np.ndarray:
    """Clip at ``config.clip_quantile`` and rescale to [0, 1].

    ``minmax`` maps the minimum to 0 and the clip value to 1.  ``robust`` uses
    the 1st percentile as the floor instead of the minimum.  A constant input
    maps to 0.5 everywhere.
    """
    s = np.asarray(raw, dtype=np.float64)
    if s.size == 0:
        raise ValueError("need at least one score")
    hi = float(np.quantile(s, config.clip_quantile))
    lo = float(np.min(s)) if config.mode == "minmax" else float(np.quantile(s, 0.01))
    if hi <= lo:
        if np.all(s == s[0]):
            return np.full(s.shape, 0.5)
        hi = float(np.max(s))
    return (np.clip(s, lo, hi) - lo) / (hi - lo)


def top_indices(scores: np.ndarray, k: int, exclude=None) -> np.ndarray:
    """Indices of the ``k`` largest scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.arange(scores.size)
    if exclude is not None and len(exclude):
        mask = np.ones(scores.size, dtype=bool)
        mask[np.asarray(exclude, dtype=np.int64)] = False
        idx = idx[mask]
    order = np.lexsort((idx, -scores[idx]))
    return idx[order[:k]]


def prefilter(pool: CandidatePool, scores, config: ScoringConfig, seed: int) -> np.ndarray:
    """Working set of exactly M pool indices: top ceil(beta*M) by score plus uniform fill."""
    n = len(pool)
    M = config.M
    if M > n:
        raise ValueError(f"prefilter size M={M} exceeds pool size N={n}")
    n_top = min(M, math.ceil(config.beta * M - 1e-12))
    top = top_indices(scores, n_top)
    rest = np.setdiff1d(np.arange(n), top)
    rng = np.random.default_rng(seed)
    fill = rng.choice(rest, size=M - n_top, replace=False)
    return np.concatenate([top, np.sort(fill)])
