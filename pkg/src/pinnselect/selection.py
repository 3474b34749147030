"""Exact-K repair, one-shot and hybrid-anchor selection pipelines, refresh schedule."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import geometry, qubo, scoring
from .geometry import KnnGraph, SimilarityConfig
from .pinn import MlpParams
from .qubo import SaConfig, SelectionWeights
from .scoring import CandidatePool, ScoringConfig

ANCHOR = "anchor"
OPTIMIZED = "optimized"
REPAIRED = "repaired-in"


@dataclass(frozen=True)
class Selection:
    """Selected candidate indices (into the pool; -1 for synthesized points)."""

    indices: np.ndarray
    points: np.ndarray
    provenance: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.points)

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("index,x,t,provenance\n")
            for i, (x, t), tag in zip(self.indices, self.points, self.provenance):
                fh.write(f"{int(i)},{float(x)!r},{float(t)!r},{tag}\n")


def read_selection_csv(path) -> Selection:
    rows = Path(path).read_text().splitlines()[1:]
    idx, pts, tags = [], [], []
    for row in rows:
        i, x, t, tag = row.split(",")
        idx.append(int(i))
        pts.append((float(x), float(t)))
        tags.append(tag)
    return Selection(np.array(idx, dtype=np.int64), np.array(pts).reshape(-1, 2), tuple(tags))


def _neighbor_sums(members: np.ndarray, graph: KnnGraph) -> np.ndarray:
    """For every node, sum of w_ij over graph neighbors j flagged in ``members``."""
    src = np.repeat(np.arange(graph.n), np.diff(graph.indptr))
    return np.bincount(src, weights=graph.nbr_w * members[graph.nbr], minlength=graph.n)


def marginal_utility(i: int, S, scores, graph: KnnGraph, weights: SelectionWeights) -> float:
    """alpha s_i - gamma * sum of w_ij over selected graph neighbors j != i."""
    S = set(int(j) for j in S)
    if i not in S:
        raise ValueError(f"index {i} is not in the selection")
    nb, w = graph.neighbors(i)
    red = sum(float(wj) for j, wj in zip(nb, w) if int(j) in S and int(j) != i)
    return weights.alpha * float(scores[i]) - weights.gamma * red


def marginal_gain(i: int, S, scores, graph: KnnGraph, weights: SelectionWeights) -> float:
    """alpha s_i - gamma * sum of w_ij over selected graph neighbors j."""
    S = set(int(j) for j in S)
    if i in S:
        raise ValueError(f"index {i} is already selected")
    nb, w = graph.neighbors(i)
    red = sum(float(wj) for j, wj in zip(nb, w) if int(j) in S)
    return weights.alpha * float(scores[i]) - weights.gamma * red


@dataclass
class RepairResult:
    selected: np.ndarray   # sorted working-set indices, exactly K
    added: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    neighbor_sum: np.ndarray | None = None


def repair_exact_k(z, K: int, scores, graph: KnnGraph, weights: SelectionWeights,
                   trace: list | None = None) -> RepairResult:
    """Greedy drop (smallest utility) / add (largest gain) until exactly K are selected.

    Neighbor sums are updated incrementally along graph edges.  Ties go to the
    lower index.  If ``trace`` is a list, each step's ``(action, index, sel_mask,
    neighbor_sum)`` snapshot before the step is appended to it.
    """
    z = np.asarray(z).astype(bool).copy()
    s = np.asarray(scores, dtype=np.float64)
    M = len(s)
    if K > M:
        raise ValueError(f"K={K} exceeds the number of candidates M={M}")
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    nsum = _neighbor_sums(z.astype(np.float64), graph)
    base = weights.alpha * s
    removed, added = [], []
    n_sel = int(z.sum())
    while n_sel > K:
        val = np.where(z, base - weights.gamma * nsum, np.inf)
        i = int(np.argmin(val))
        if trace is not None:
            trace.append(("remove", i, z.copy(), nsum.copy()))
        z[i] = False
        nb, w = graph.neighbors(i)
        nsum[nb] -= w
        removed.append(i)
        n_sel -= 1
    while n_sel < K:
        val = np.where(z, -np.inf, base - weights.gamma * nsum)
        i = int(np.argmax(val))
        if trace is not None:
            trace.append(("add", i, z.copy(), nsum.copy()))
        z[i] = True
        nb, w = graph.neighbors(i)
        nsum[nb] += w
        added.append(i)
        n_sel += 1
    return RepairResult(np.flatnonzero(z), added, removed, nsum)


@dataclass(frozen=True)
class PipelineConfig:
    N: int = 20000
    M: int = 4000
    K: int = 1000
    beta: float = 0.7
    rho: float = 0.2
    k: int = 12
    weights: SelectionWeights = SelectionWeights()
    sa: SaConfig = SaConfig()
    mu_mode: str = "heuristic"
    clip_quantile: float = 0.99
    norm_mode: str = "minmax"
    ell_x: float | None = None   # None: derived from the working set
    ell_t: float | None = None
    ell_factor: float = 2.0
    S_warm: int = 1000
    refresh_every: int = 2000
    burn_in: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.K <= self.M <= self.N:
            raise ValueError(f"need K <= M <= N, got K={self.K}, M={self.M}, N={self.N}")

    @property
    def scoring(self) -> ScoringConfig:
        return ScoringConfig(self.norm_mode, self.clip_quantile, self.M, self.beta)


STAGES = ("t_score", "t_prefilter", "t_graph", "t_qubo_build", "t_qubo_solve", "t_repair")


def stage_seed(seed: int, tag: str) -> int:
    """Independent, order-free seed for one pipeline stage."""
    return int(np.random.SeedSequence([seed, *tag.encode()]).generate_state(1)[0])


@dataclass
class SelectionRun:
    selection: Selection
    timing: dict[str, float]
    working_set: np.ndarray | None = None
    pre_repair_size: int | None = None
    mu: float | None = None


def score_pool(params: MlpParams, pool: CandidatePool, nu: float, config: PipelineConfig):
    """Raw and normalized residual scores for every candidate, with elapsed time."""
    t0 = time.perf_counter()
    raw = scoring.score_candidates(params, pool, nu)
    norm = scoring.normalize_scores(raw, config.scoring)
    return raw, norm, time.perf_counter() - t0


def one_shot_select(pool: CandidatePool, params: MlpParams | None, config: PipelineConfig,
                    nu: float | None = None, *, scores=None, exclude=None, K: int | None = None,
                    dense: bool = False) -> SelectionRun:
    """Score, prefilter, build the kNN graph, anneal the soft-K model, repair to exactly K.

    ``scores`` (normalized, one per pool candidate) skips the scoring stage.
    ``exclude`` removes pool indices from consideration.  ``dense=True``
    solves the k-hot QUBO on the working set instead of the sparse model.
    """
    K = config.K if K is None else K
    timing = dict.fromkeys(STAGES, 0.0)
    if scores is None:
        _, scores, timing["t_score"] = score_pool(params, pool, nu, config)
    scores = np.asarray(scores, dtype=np.float64)

    t0 = time.perf_counter()
    avail = np.arange(len(pool))
    if exclude is not None and len(exclude):
        avail = np.setdiff1d(avail, np.asarray(exclude, dtype=np.int64))
    M = min(config.M, len(avail))
    if K > M:
        raise ValueError(f"budget K={K} exceeds the {M} available candidates")
    sub = pool.subset(avail)
    local = scoring.prefilter(sub, scores[avail], replace(config.scoring, M=M),
                              stage_seed(config.seed, "prefilter"))
    work = avail[local]
    pts = pool.points[work]
    s = scores[work]
    timing["t_prefilter"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.ell_x is None or config.ell_t is None:
        ell_x, ell_t = geometry.default_length_scales(pts, config.ell_factor)
    else:
        ell_x, ell_t = config.ell_x, config.ell_t
    graph = geometry.build_knn_graph(pts, SimilarityConfig(ell_x, ell_t, config.k))
    timing["t_graph"] = time.perf_counter() - t0

    w = config.weights
    t0 = time.perf_counter()
    sa = replace(config.sa, seed=stage_seed(config.seed, "anneal"))
    if dense:
        model = qubo.build_dense_khot(s, graph, w, K)
        mu = None
    else:
        mu = qubo.calibrate_mu(s, max(K, 1), M, config.mu_mode, w.alpha, graph, w.gamma,
                               replace(sa, sweeps=max(1, sa.sweeps // 10), restarts=1))
        w = replace(w, mu=mu)
        model = qubo.build_sparse_bqm(s, graph, w)
    timing["t_qubo_build"] = time.perf_counter() - t0

    z, _, timing["t_qubo_solve"] = qubo.anneal(model, sa)

    t0 = time.perf_counter()
    rep = repair_exact_k(z, K, s, graph, w)
    timing["t_repair"] = time.perf_counter() - t0

    added = set(rep.added)
    tags = tuple(REPAIRED if i in added else OPTIMIZED for i in rep.selected)
    sel = Selection(work[rep.selected], pool.points[work[rep.selected]], tags)
    return SelectionRun(sel, timing, work, int(z.sum()), mu)


def snap_to_pool(anchors: np.ndarray, pool: CandidatePool) -> np.ndarray:
    """Nearest distinct pool candidate for each anchor (domain-normalized metric)."""
    if len(anchors) == 0:
        return np.empty(0, dtype=np.int64)
    if len(anchors) > len(pool):
        raise ValueError("more anchors than pool candidates")
    x_lo, x_hi, t_lo, t_hi = pool.bounds
    scale = np.array([x_hi - x_lo, t_hi - t_lo])
    tree = cKDTree(pool.points / scale)
    taken: set[int] = set()
    out = []
    for a in anchors / scale:
        k = 8
        while True:
            _, idx = tree.query(a, k=min(k, len(pool)))
            idx = np.atleast_1d(idx)
            free = [int(i) for i in idx if int(i) not in taken]
            if free:
                break
            k *= 4
        taken.add(free[0])
        out.append(free[0])
    return np.array(out, dtype=np.int64)


def anchor_count(K: int, rho: float) -> int:
    return int(np.floor(rho * K + 1e-9))


def hybrid_select(pool: CandidatePool, params: MlpParams | None, config: PipelineConfig,
                  nu: float | None = None, *, scores=None) -> SelectionRun:
    """floor(rho K) LHS anchors snapped to the pool, the rest by one-shot selection."""
    K = config.K
    t0 = time.perf_counter()
    k_anchor = anchor_count(K, config.rho)
    anchors = snap_to_pool(geometry.lhs_anchors(k_anchor, pool.bounds,
                                                stage_seed(config.seed, "anchors")), pool)
    t_anchor = time.perf_counter() - t0
    k_select = K - k_anchor
    if k_select == 0:
        timing = dict.fromkeys(STAGES, 0.0)
        timing["t_prefilter"] = t_anchor
        sel = Selection(anchors, pool.points[anchors], (ANCHOR,) * k_anchor)
        return SelectionRun(sel, timing)
    run = one_shot_select(pool, params, config, nu, scores=scores, exclude=anchors, K=k_select)
    run.timing["t_prefilter"] += t_anchor
    rest = run.selection
    sel = Selection(np.concatenate([anchors, rest.indices]),
                    np.concatenate([pool.points[anchors], rest.points]),
                    (ANCHOR,) * k_anchor + rest.provenance)
    return SelectionRun(sel, run.timing, run.working_set, run.pre_repair_size, run.mu)


def refresh_schedule(step: int, burn_in: int, refresh_every: int) -> bool:
    if refresh_every <= 0:
        raise ValueError(f"refresh period must be positive, got {refresh_every}")
    if step < 0 or burn_in < 0:
        raise ValueError("step and burn-in must be nonnegative")
    return step > burn_in and (step - burn_in) % refresh_every == 0
