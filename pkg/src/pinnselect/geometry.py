"""Space-time similarity kernel, kNN graphs and Latin hypercube anchors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class SimilarityConfig:
    ell_x: float
    ell_t: float
    k: int = 12

    def __post_init__(self):
        if not (self.ell_x > 0 and self.ell_t > 0):
            raise ValueError(f"length scales must be positive, got ({self.ell_x}, {self.ell_t})")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


def similarity(p, q, config: SimilarityConfig) -> float:
    dx = (p[0] - q[0]) / config.ell_x
    dt = (p[1] - q[1]) / config.ell_t
    return float(np.exp(-dx * dx - dt * dt))


def pairwise_similarity(points: np.ndarray, i: np.ndarray, j: np.ndarray,
                        config: SimilarityConfig) -> np.ndarray:
    """Vectorized kernel for index pairs; evaluates exactly like `similarity`."""
    dx = (points[i, 0] - points[j, 0]) / config.ell_x
    dt = (points[i, 1] - points[j, 1]) / config.ell_t
    return np.exp(-dx * dx - dt * dt)


def default_length_scales(points: np.ndarray, factor: float = 2.0) -> tuple[float, float]:
    """``factor`` times the median per-axis offset to each point's nearest neighbor."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        raise ValueError("need at least two points to estimate length scales")
    _, nn = cKDTree(pts).query(pts, k=2)
    off = np.abs(pts - pts[nn[:, 1]])
    ell = factor * np.median(off, axis=0)
    # guard against degenerate (e.g. collinear) sets
    ell = np.where(ell > 0, ell, factor * np.median(np.linalg.norm(off, axis=1)))
    return float(ell[0]), float(ell[1])


@dataclass(frozen=True)
class KnnGraph:
    """Undirected kNN graph with edges ``i < j`` and CSR adjacency."""

    n: int
    edge_i: np.ndarray
    edge_j: np.ndarray
    weight: np.ndarray
    indptr: np.ndarray
    nbr: np.ndarray
    nbr_w: np.ndarray
    nbr_edge: np.ndarray  # position of each adjacency entry in the edge list

    @property
    def n_edges(self) -> int:
        return len(self.edge_i)

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.nbr[a:b], self.nbr_w[a:b]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("i,j,w\n")
            for a, b, w in zip(self.edge_i, self.edge_j, self.weight):
                fh.write(f"{a},{b},{float(w)!r}\n")


def graph_from_edges(n: int, ei, ej, w) -> KnnGraph:
    """Assemble a graph from undirected edges (any orientation, no duplicates)."""
    ei = np.asarray(ei, dtype=np.int64)
    ej = np.asarray(ej, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
    order = np.lexsort((hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    if np.any(lo == hi):
        raise ValueError("self-edges are not allowed")
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    eid = np.concatenate([np.arange(len(lo)), np.arange(len(lo))])
    adj = np.lexsort((dst, src))
    src, dst, eid = src[adj], dst[adj], eid[adj]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    return KnnGraph(n, lo, hi, w, indptr, dst, w[eid], eid)


def build_knn_graph(points, config: SimilarityConfig) -> KnnGraph:
    """Union-symmetrized kNN graph under d^2 = (dx/ell_x)^2 + (dt/ell_t)^2."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    m = len(pts)
    if m < 2:
        raise ValueError(f"need at least two points, got {m}")
    scaled = pts / np.array([config.ell_x, config.ell_t])
    k = min(config.k, m - 1)
    tree = cKDTree(scaled)
    dist, idx = tree.query(scaled, k=k + 1)
    if np.any(dist[:, 1] == 0.0):
        i = int(np.argmax(dist[:, 1] == 0.0))
        raise ValueError(f"duplicate point at index {i}: {tuple(pts[i])}")
    rows = np.repeat(np.arange(m), k)
    # under distance ties a point need not come back first; drop it wherever it is
    not_self = idx != np.arange(m)[:, None]
    pick = np.argsort(~not_self, axis=1, kind="stable")[:, :k]
    cols = np.take_along_axis(idx, pick, axis=1).ravel()
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    key = np.unique(lo * m + hi)
    lo, hi = key // m, key % m
    w = pairwise_similarity(pts, lo, hi, config)
    return graph_from_edges(m, lo, hi, w)


def lhs_anchors(k_anchor: int, bounds, seed: int) -> np.ndarray:
    """Jittered 2D Latin hypercube: one point per axis stratum."""
    if k_anchor < 0:
        raise ValueError(f"anchor count must be >= 0, got {k_anchor}")
    if k_anchor == 0:
        return np.empty((0, 2))
    x_lo, x_hi, t_lo, t_hi = bounds
    rng = np.random.default_rng(seed)
    cols = []
    for lo, hi in ((x_lo, x_hi), (t_lo, t_hi)):
        strata = rng.permutation(k_anchor)
        u = rng.uniform(size=k_anchor)
        # keep strictly inside the open interior
        u = np.where(u == 0.0, 0.5, u)
        cols.append(lo + (hi - lo) * (strata + u) / k_anchor)
    return np.column_stack(cols)
