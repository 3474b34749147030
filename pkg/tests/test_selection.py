import itertools

import numpy as np
import pytest

from pinnselect.geometry import SimilarityConfig, build_knn_graph, graph_from_edges
from pinnselect.pinn import init_params
from pinnselect.qubo import SaConfig, SelectionWeights
from pinnselect.scoring import CandidatePool, sample_pool
from pinnselect.selection import (ANCHOR, OPTIMIZED, PipelineConfig, Selection, anchor_count,
                                  hybrid_select, marginal_gain, marginal_utility,
                                  one_shot_select, read_selection_csv, refresh_schedule,
                                  repair_exact_k, snap_to_pool, stage_seed)

BOUNDS = (-1.0, 1.0, 0.0, 1.0)
NU = 0.01 / np.pi
FAST_SA = SaConfig(sweeps=100, restarts=2)


def random_graph(rng, M, k=3):
    pts = np.column_stack([rng.uniform(-1, 1, M), rng.uniform(0, 1, M)])
    return build_knn_graph(pts, SimilarityConfig(0.5, 0.3, k=min(k, M - 1)))


def brute_utility(i, S, s, g, w):
    W = np.zeros((g.n, g.n))
    W[g.edge_i, g.edge_j] = g.weight
    W = W + W.T
    return w.alpha * s[i] - w.gamma * sum(W[i, j] for j in S if j != i)


# hand instance: path 0-1-2-3 with weights 0.5, 0.25, 0.125
HAND = graph_from_edges(4, [0, 1, 2], [1, 2, 3], [0.5, 0.25, 0.125])
HAND_S = np.array([0.9, 0.8, 0.4, 0.1])


def test_utility_hand_instance():
    w = SelectionWeights(alpha=2.0, gamma=4.0)
    assert marginal_utility(1, {0, 1, 2}, HAND_S, HAND, w) == pytest.approx(1.6 - 4 * 0.75)
    assert marginal_utility(3, {3}, HAND_S, HAND, w) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        marginal_utility(3, {0, 1}, HAND_S, HAND, w)


def test_gain_hand_instance():
    w = SelectionWeights(alpha=2.0, gamma=4.0)
    assert marginal_gain(2, {1, 3}, HAND_S, HAND, w) == pytest.approx(0.8 - 4 * 0.375)
    assert marginal_gain(2, set(), HAND_S, HAND, w) == pytest.approx(0.8)
    assert marginal_gain(1, {0}, HAND_S, HAND, SelectionWeights(gamma=100)) < 0
    with pytest.raises(ValueError):
        marginal_gain(1, {1}, HAND_S, HAND, w)


def test_utility_without_redundancy():
    w = SelectionWeights(alpha=1.5, gamma=0.0)
    assert marginal_utility(1, {0, 1, 2}, HAND_S, HAND, w) == pytest.approx(1.2)
    iso = graph_from_edges(3, [0], [1], [1.0])
    assert marginal_utility(2, {0, 1, 2}, np.ones(3), iso, SelectionWeights(gamma=9)) == 1.0


def test_repair_noop_and_separable():
    s = np.array([0.3, 0.9, 0.1, 0.7])
    z = np.array([1, 0, 1, 0])
    assert list(repair_exact_k(z, 2, s, HAND, SelectionWeights()).selected) == [0, 2]
    res = repair_exact_k(np.zeros(4), 3, s, HAND, SelectionWeights(gamma=0))
    assert set(res.selected) == {0, 1, 3}
    with pytest.raises(ValueError):
        repair_exact_k(z, 5, s, HAND, SelectionWeights())


def test_repair_single_removal_brute_force(rng):
    for _ in range(20):
        g = random_graph(rng, 8)
        s = rng.uniform(size=8)
        w = SelectionWeights(gamma=rng.uniform(0, 2))
        z = np.zeros(8, dtype=int)
        z[rng.choice(8, 5, replace=False)] = 1
        S = set(np.flatnonzero(z))
        u = {i: brute_utility(i, S, s, g, w) for i in S}
        want = min(sorted(u), key=lambda i: u[i])
        res = repair_exact_k(z, 4, s, g, w)
        assert res.removed == [want]


def test_repair_fuzz_steps_match_brute_force(rng):
    for trial in range(500):
        M = int(rng.integers(2, 11)) if trial % 2 == 0 else int(rng.integers(11, 40))
        g = random_graph(rng, M, k=int(rng.integers(1, 5)))
        s = rng.uniform(size=M)
        w = SelectionWeights(alpha=rng.uniform(0.5, 2), gamma=rng.uniform(0, 3))
        z = (rng.uniform(size=M) < rng.uniform()).astype(int)
        K = int(rng.integers(0, M + 1))
        trace = []
        res = repair_exact_k(z, K, s, g, w, trace=trace)
        assert len(res.selected) == K
        if M > 10:
            continue
        for action, i, mask, _ in trace:
            S = set(np.flatnonzero(mask))
            if action == "remove":
                vals = {j: brute_utility(j, S, s, g, w) for j in S}
                best = min(vals.values())
            else:
                vals = {j: brute_utility(j, S, s, g, w) for j in set(range(M)) - S}
                best = max(vals.values())
            assert vals[i] == pytest.approx(best, abs=1e-12)
            assert i == min(j for j, v in vals.items() if abs(v - best) <= 1e-12)


def test_refresh_schedule():
    assert not refresh_schedule(1000, 1000, 2000)
    assert refresh_schedule(3000, 1000, 2000)
    n = sum(refresh_schedule(s, 1000, 2000) for s in range(10001))
    assert n == (10000 - 1000) // 2000
    with pytest.raises(ValueError):
        refresh_schedule(5, 1, 0)


def test_stage_seed_is_order_free():
    assert stage_seed(3, "pool") == stage_seed(3, "pool")
    assert stage_seed(3, "pool") != stage_seed(3, "anchors")
    assert stage_seed(3, "pool") != stage_seed(4, "pool")


def small_config(**kw):
    base = dict(N=600, M=200, K=50, k=6, sa=FAST_SA, weights=SelectionWeights(gamma=0.5))
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def pool():
    return sample_pool(600, BOUNDS, 0)


@pytest.fixture(scope="module")
def params():
    return init_params((2, 16, 16, 1), seed=0)


def test_one_shot_exact_budget_and_determinism(pool, params):
    cfg = small_config()
    a = one_shot_select(pool, params, cfg, NU)
    b = one_shot_select(pool, params, cfg, NU)
    assert len(a.selection) == 50 and len(set(a.selection.indices)) == 50
    assert np.array_equal(a.selection.indices, b.selection.indices)
    assert set(a.selection.indices) <= set(a.working_set)
    assert all(v >= 0 for v in a.timing.values())
    assert np.array_equal(a.selection.points, pool.points[a.selection.indices])


def test_one_shot_K_equals_M(pool, params):
    cfg = small_config(M=120, K=120)
    run = one_shot_select(pool, params, cfg, NU)
    assert set(run.selection.indices) == set(run.working_set)


def test_one_shot_dense(pool, params):
    run = one_shot_select(pool, params, small_config(M=100, K=20), NU, dense=True)
    assert len(run.selection) == 20


def cluster_pool(rng):
    bg = np.column_stack([rng.uniform(-1, 1, 400), rng.uniform(0, 1, 400)])
    cl = np.column_stack([rng.normal(0.3, 0.05, 200), rng.normal(0.5, 0.05, 200)])
    cl = np.clip(cl, [-0.99, 0.01], [0.99, 0.99])
    pts = np.concatenate([cl, bg])
    scores = np.concatenate([rng.uniform(0.6, 1.0, 200), rng.uniform(0, 0.3, 400)])
    return CandidatePool(pts, 0, BOUNDS), scores


def mean_pair_distance(p):
    d = np.linalg.norm(p[:, None] - p[None], axis=-1)
    return d[np.triu_indices(len(p), 1)].mean()


def test_selection_is_more_dispersed_than_topk(rng):
    pool, scores = cluster_pool(rng)
    cfg = small_config(N=600, M=300, K=40, weights=SelectionWeights(gamma=2.0),
                       sa=SaConfig(sweeps=300, restarts=2))
    run = one_shot_select(pool, None, cfg, scores=scores)
    in_cluster = run.selection.indices[run.selection.indices < 200]
    top = np.argsort(-scores)[:40]
    assert len(in_cluster) >= 2
    assert mean_pair_distance(pool.points[in_cluster]) > mean_pair_distance(pool.points[top])


def test_hybrid_split_and_endpoints(pool, params):
    cfg = small_config(K=100, M=300, rho=0.2)
    run = hybrid_select(pool, params, cfg, NU)
    sel = run.selection
    assert len(sel) == 100 and len(set(sel.indices)) == 100
    assert sel.provenance.count(ANCHOR) == 20
    assert anchor_count(100, 0.2) == 20
    pure = hybrid_select(pool, params, small_config(rho=1.0), NU).selection
    assert set(pure.provenance) == {ANCHOR} and len(pure) == 50
    zero = hybrid_select(pool, params, small_config(rho=0.0), NU).selection
    one = one_shot_select(pool, params, small_config(), NU).selection
    assert np.array_equal(zero.indices, one.indices)


def test_snap_is_distinct_nearest(pool):
    anchors = np.array([[0.0, 0.5], [0.0, 0.5000001], [0.9, 0.1]])
    idx = snap_to_pool(anchors, pool)
    assert len(set(idx)) == 3
    d = np.linalg.norm((pool.points - anchors[0]) / [2, 1], axis=1)
    assert idx[0] == np.argmin(d)


def test_selection_csv_round_trip(tmp_path):
    sel = Selection(np.array([4, 7]), np.array([[0.1, 0.2], [-0.3, 0.9]]), (ANCHOR, OPTIMIZED))
    sel.to_csv(tmp_path / "s.csv")
    back = read_selection_csv(tmp_path / "s.csv")
    assert np.array_equal(back.indices, sel.indices)
    assert np.array_equal(back.points, sel.points) and back.provenance == sel.provenance


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(N=10, M=20, K=5)
    with pytest.raises(ValueError):
        PipelineConfig(rho=1.5)
