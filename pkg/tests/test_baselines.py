import numpy as np
import pytest

from pinnselect.baselines import (covering_radius, greedy_kcenter, random_select,
                                  topk_residual, topk_with_anchors, uniform_select)
from pinnselect.scoring import sample_pool
from pinnselect.selection import ANCHOR

BOUNDS = (-1.0, 1.0, 0.0, 1.0)


def fill_distance(points, probes):
    return covering_radius(points, probes)


def test_uniform_small_cases():
    (p,) = uniform_select(1, BOUNDS, 0).points
    assert -1 < p[0] < 1 and 0 < p[1] < 1
    pts = uniform_select(16, BOUNDS, 2).points
    cells = {(int((x + 1) / 0.5), int(t / 0.25)) for x, t in pts}
    assert cells == {(i, j) for i in range(4) for j in range(4)}
    with pytest.raises(ValueError):
        uniform_select(0, BOUNDS, 0)


def test_uniform_non_square_budget():
    sel = uniform_select(1000, BOUNDS, 1)
    assert len(sel) == 1000 and len(np.unique(sel.points, axis=0)) == 1000
    x, t = sel.points.T
    assert np.all((-1 < x) & (x < 1) & (0 < t) & (t < 1))


def test_uniform_fills_better_than_random():
    g = np.linspace(-1, 1, 81)
    probes = np.array([(x, t) for x in g for t in np.linspace(0, 1, 41)])
    pool = sample_pool(5000, BOUNDS, 0)
    fu = [fill_distance(uniform_select(100, BOUNDS, s).points, probes) for s in range(20)]
    fr = [fill_distance(random_select(pool, 100, s).points, probes) for s in range(20)]
    assert np.median(fu) < np.median(fr)


def test_random_select():
    pool = sample_pool(50, BOUNDS, 0)
    whole = random_select(pool, 50, 1)
    assert set(whole.indices) == set(range(50))
    a, b = random_select(pool, 10, 3), random_select(pool, 10, 3)
    assert np.array_equal(a.indices, b.indices) and len(set(a.indices)) == 10
    with pytest.raises(ValueError):
        random_select(pool, 51, 0)


def test_topk_residual(rng):
    assert set(topk_residual([0.1, 0.9, 0.5], 2).indices) == {1, 2}
    assert set(topk_residual([0.1, 0.9, 0.5], 3).indices) == {0, 1, 2}
    s = rng.uniform(size=300)
    assert set(topk_residual(s, 40).indices) == set(np.argsort(s)[::-1][:40])


def test_topk_with_anchors(rng):
    pool = sample_pool(400, BOUNDS, 0)
    s = rng.uniform(size=400)
    assert np.array_equal(topk_with_anchors(pool, s, 30, 0.0, 1).indices,
                          topk_residual(s, 30).indices)
    pure = topk_with_anchors(pool, s, 30, 1.0, 1)
    assert set(pure.provenance) == {ANCHOR}
    mix = topk_with_anchors(pool, s, 30, 0.2, 1)
    assert len(mix) == 30 and len(set(mix.indices)) == 30
    assert mix.provenance.count(ANCHOR) == 6


def test_kcenter_examples():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    first = greedy_kcenter(corners, 1, seed=0)
    start = int(np.random.default_rng(0).integers(4))
    assert list(first.indices) == [start]
    two = greedy_kcenter(corners, 2, seed=0)
    assert two.indices[1] == 3 - start   # opposite corner is farthest


def test_kcenter_radius_monotone():
    pool = sample_pool(500, BOUNDS, 4)
    radii = [covering_radius(greedy_kcenter(pool.points, k, 0).points, pool.points)
             for k in (1, 5, 20, 80)]
    assert all(a >= b for a, b in zip(radii, radii[1:]))
