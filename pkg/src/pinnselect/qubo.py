"""Dense k-hot QUBO and sparse soft-K BQM selection models, plus simulated annealing.

Both model types use the convention ``E(z) = sum_i linear_i z_i + sum_{i<j} Q_ij z_i z_j
+ offset`` over binary ``z``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .geometry import KnnGraph


@dataclass(frozen=True)
class SelectionWeights:
    alpha: float = 1.0
    gamma: float = 0.5
    lambda_card: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.lambda_card > 0:
            raise ValueError(f"lambda_card must be positive, got {self.lambda_card}")


@dataclass(frozen=True)
class SparseBqm:
    linear: np.ndarray
    quadratic: np.ndarray  # aligned with graph.edge_i / graph.edge_j
    graph: KnnGraph
    offset: float = 0.0

    @property
    def num_variables(self) -> int:
        return len(self.linear)


@dataclass(frozen=True)
class DenseQubo:
    linear: np.ndarray
    quadratic: np.ndarray  # (M, M), only the strict upper triangle is used
    offset: float = 0.0
    k_hot: int | None = None  # cardinality target, used for the annealer's start state

    @property
    def num_variables(self) -> int:
        return len(self.linear)


@dataclass(frozen=True)
class SaConfig:
    sweeps: int = 2000
    restarts: int = 8
    beta_init: float = 0.1
    beta_final: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ValueError(f"sweeps and restarts must be >= 1, got {self.sweeps}, {self.restarts}")
        if not self.beta_final > self.beta_init > 0:
            raise ValueError("need beta_final > beta_init > 0, got "
                             f"{self.beta_final}, {self.beta_init}")

    def betas(self) -> np.ndarray:
        return np.geomspace(self.beta_init, self.beta_final, self.sweeps)


def build_dense_khot(scores, graph: KnnGraph, weights: SelectionWeights, K: int) -> DenseQubo:
    """Expanded form of -alpha s.z + gamma sum_E w z_i z_j + lambda (sum z - K)^2."""
    s = np.asarray(scores, dtype=np.float64)
    M = len(s)
    if K > M:
        raise ValueError(f"K={K} exceeds the number of variables M={M}")
    lam = weights.lambda_card
    linear = -weights.alpha * s + lam * (1 - 2 * K)
    Q = np.triu(np.full((M, M), 2.0 * lam), k=1)
    Q[graph.edge_i, graph.edge_j] += weights.gamma * graph.weight
    return DenseQubo(linear, Q, float(lam * K * K), K)


def build_sparse_bqm(scores, graph: KnnGraph, weights: SelectionWeights) -> SparseBqm:
    s = np.asarray(scores, dtype=np.float64)
    if len(s) != graph.n:
        raise ValueError(f"{len(s)} scores for a graph with {graph.n} nodes")
    linear = -weights.alpha * s + weights.mu
    return SparseBqm(linear, weights.gamma * graph.weight, graph, 0.0)


def energy(model, z) -> float:
    z = np.asarray(z)
    if z.shape != (model.num_variables,):
        raise ValueError(f"bit vector has shape {z.shape}, expected ({model.num_variables},)")
    zf = z.astype(np.float64)
    e = float(model.linear @ zf) + model.offset
    if isinstance(model, SparseBqm):
        g = model.graph
        e += float(np.sum(model.quadratic * zf[g.edge_i] * zf[g.edge_j]))
    else:
        e += float(zf @ np.triu(model.quadratic, k=1) @ zf)
    return e


def _csr_couplers(model: SparseBqm) -> np.ndarray:
    return model.quadratic[model.graph.nbr_edge]


# Metropolis acceptance exp(-x) for x above this is below the resolution of random()
_REJECT_CUTOFF = 40.0


@njit(cache=True)
def _sa_sparse(linear, indptr, nbr, coup, betas, z, seed):
    np.random.seed(seed)
    M = linear.shape[0]
    # local field h_i = linear_i + sum_j J_ij z_j, updated on every accepted flip
    h = linear.copy()
    e = 0.0
    for i in range(M):
        if z[i]:
            e += linear[i]
            for p in range(indptr[i], indptr[i + 1]):
                h[nbr[p]] += coup[p]
                if nbr[p] > i and z[nbr[p]]:
                    e += coup[p]
    best_e = e
    best_z = z.copy()
    for beta in betas:
        for i in range(M):
            delta = -h[i] if z[i] else h[i]
            if delta > 0.0:
                x = beta * delta
                if x > _REJECT_CUTOFF or np.random.random() >= np.exp(-x):
                    continue
            sign = -1.0 if z[i] else 1.0
            z[i] = 1 - z[i]
            e += delta
            for p in range(indptr[i], indptr[i + 1]):
                h[nbr[p]] += sign * coup[p]
        if e < best_e:
            best_e = e
            best_z[:] = z
    return best_z, best_e


@njit(cache=True)
def _sa_dense(linear, sym, betas, z, seed):
    np.random.seed(seed)
    M = linear.shape[0]
    h = linear.copy()
    e = 0.0
    for i in range(M):
        if z[i]:
            e += linear[i]
            for j in range(M):
                h[j] += sym[i, j]
                if j > i and z[j]:
                    e += sym[i, j]
    best_e = e
    best_z = z.copy()
    for beta in betas:
        for i in range(M):
            delta = -h[i] if z[i] else h[i]
            if delta > 0.0:
                x = beta * delta
                if x > _REJECT_CUTOFF or np.random.random() >= np.exp(-x):
                    continue
            sign = -1.0 if z[i] else 1.0
            z[i] = 1 - z[i]
            e += delta
            row = sym[i]
            for j in range(M):
                h[j] += sign * row[j]
        if e < best_e:
            best_e = e
            best_z[:] = z
    return best_z, best_e


def restart_seeds(seed: int, restarts: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(restarts)]


def anneal(model, config: SaConfig, K_init: int | None = None):
    """Metropolis single-flip annealing; returns ``(best_z, best_energy, seconds)``.

    Sparse models start from all zeros.  Dense models start from a random
    ``K_init``-hot state (default: the model's ``k_hot``, else all zeros).
    """
    t0 = time.perf_counter()
    betas = config.betas()
    M = model.num_variables
    best_z, best_e = None, np.inf
    if isinstance(model, SparseBqm):
        g = model.graph
        coup = _csr_couplers(model)
        for rs in restart_seeds(config.seed, config.restarts):
            z0 = np.zeros(M, dtype=np.int8)
            z, e = _sa_sparse(model.linear, g.indptr, g.nbr, coup, betas, z0, rs % (2**32))
            if e < best_e:
                best_z, best_e = z, e
    else:
        Q = np.triu(model.quadratic, k=1)
        sym = Q + Q.T
        if K_init is None:
            K_init = model.k_hot or 0
        for rs in restart_seeds(config.seed, config.restarts):
            rng = np.random.default_rng(rs)
            z0 = np.zeros(M, dtype=np.int8)
            z0[rng.choice(M, size=min(max(K_init, 0), M), replace=False)] = 1
            z, e = _sa_dense(model.linear, sym, betas, z0, rs % (2**32))
            if e < best_e:
                best_z, best_e = z, e
    return best_z, float(best_e + model.offset), time.perf_counter() - t0


def calibrate_mu(scores, K: int, M: int, mode: str = "heuristic", alpha: float = 1.0,
                 graph: KnnGraph | None = None, gamma: float = 0.0,
                 sa: SaConfig | None = None, tol: float = 0.2, max_iter: int = 8) -> float:
    """Linear occupancy bias steering the soft-K model toward about K selections.

    ``heuristic``: alpha * (mean score - K/M).  ``search``: bisection on mu with
    short anneals until the selection size is within ``tol * K`` of K.
    """
    s = np.asarray(scores, dtype=np.float64)
    if not 1 <= K <= M:
        raise ValueError(f"need 1 <= K <= M, got K={K}, M={M}")
    mu0 = alpha * (float(np.mean(s)) - K / M)
    if mode == "heuristic":
        return mu0
    if mode != "search":
        raise ValueError(f"unknown calibration mode {mode!r}")
    if graph is None:
        raise ValueError("search mode needs the kNN graph")
    sa = sa or SaConfig(sweeps=200, restarts=1)

    def size_at(mu):
        bqm = build_sparse_bqm(s, graph, SelectionWeights(alpha=alpha, gamma=gamma, mu=mu))
        z, _, _ = anneal(bqm, sa)
        return int(z.sum())

    rowsum = np.zeros(graph.n)
    np.add.at(rowsum, graph.edge_i, graph.weight)
    np.add.at(rowsum, graph.edge_j, graph.weight)
    lo = -gamma * float(rowsum.max()) - 1e-9   # everything selected below this
    hi = alpha * float(s.max()) + 1e-9         # nothing selected above this
    mu = min(max(mu0, lo), hi)
    for _ in range(max_iter):
        n = size_at(mu)
        if abs(n - K) <= tol * K:
            return mu
        if n > K:
            lo = mu
        else:
            hi = mu
        mu = 0.5 * (lo + hi)
    return mu


def dump_bqm_csv(model: SparseBqm, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>_linear.csv`` (variable,bias) and ``<prefix>_quadratic.csv`` (u,v,bias)."""
    prefix = Path(prefix)
    lin_path = prefix.with_name(prefix.name + "_linear.csv")
    quad_path = prefix.with_name(prefix.name + "_quadratic.csv")
    with lin_path.open("w") as fh:
        fh.write("variable,bias\n")
        for i, b in enumerate(model.linear):
            fh.write(f"{i},{float(b)!r}\n")
    with quad_path.open("w") as fh:
        fh.write("u,v,bias\n")
        g = model.graph
        for a, b, c in zip(g.edge_i, g.edge_j, model.quadratic):
            fh.write(f"{a},{b},{float(c)!r}\n")
    return lin_path, quad_path
