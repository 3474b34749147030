import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pinnselect.pinn import init_params, residual
from pinnselect.scoring import (CandidatePool, ScoringConfig, normalize_scores, prefilter,
                                sample_pool, score_candidates, top_indices)

BOUNDS = (-1.0, 1.0, 0.0, 1.0)
NU = 0.01 / np.pi


def test_pool_bounds_and_determinism():
    with pytest.raises(ValueError):
        sample_pool(0, BOUNDS, 0)
    a = sample_pool(5000, BOUNDS, 3)
    x, t = a.points.T
    assert len(a) == 5000
    assert np.all((-1 < x) & (x < 1) & (0 < t) & (t < 1))
    assert np.array_equal(a.points, sample_pool(5000, BOUNDS, 3).points)
    assert len(np.unique(a.points, axis=0)) == 5000


def test_constant_network_scores_zero():
    p = init_params((2, 8, 1)).zeros_like()
    p.flat[-1] = 1.5
    assert np.all(score_candidates(p, sample_pool(100, BOUNDS, 0), NU) == 0)


def test_scores_are_squared_residuals():
    p = init_params((2, 16, 16, 1), seed=2)
    pool = sample_pool(300, BOUNDS, 1)
    s = score_candidates(p, pool, NU, chunk=64)
    assert np.all(s >= 0)
    want = np.array([residual(p, x, t, NU) ** 2 for x, t in pool.points[:40]])
    np.testing.assert_allclose(s[:40], want, rtol=1e-12)


def test_non_finite_score_names_point():
    p = init_params((2, 4, 1))
    p.flat[0] = np.nan
    with pytest.raises(FloatingPointError, match="candidate 0"):
        score_candidates(p, sample_pool(10, BOUNDS, 0), NU)


def test_normalize_examples():
    np.testing.assert_allclose(normalize_scores([0, 2, 4], ScoringConfig(clip_quantile=1.0)),
                               [0, 0.5, 1])
    np.testing.assert_array_equal(normalize_scores([3, 3, 3]), [0.5, 0.5, 0.5])


def test_normalize_clips_outlier():
    raw = np.linspace(0, 1, 1000)
    raw[-1] = 1e6
    q99 = np.quantile(raw, 0.99)
    out = normalize_scores(raw)
    assert out[-1] == 1.0
    assert out[np.argmin(np.abs(raw - q99))] == pytest.approx(1.0, abs=2e-3)
    assert out[0] == 0.0


def test_normalize_robust_mode():
    raw = np.r_[-50.0, np.linspace(0, 1, 199)]
    out = normalize_scores(raw, ScoringConfig(mode="robust", clip_quantile=0.99))
    assert out[0] == 0.0 and out.max() == 1.0
    with pytest.raises(ValueError):
        ScoringConfig(mode="zscore")


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(0, 1e6)))
def test_normalize_range_and_order(raw):
    out = normalize_scores(raw)
    assert np.all((0 <= out) & (out <= 1))
    hi = np.quantile(raw, 0.99)
    below = raw < hi
    a, b = raw[below], out[below]
    order = np.argsort(a, kind="stable")
    assert np.all(np.diff(b[order]) >= 0)


def test_top_indices_ties_to_lower_index():
    assert list(top_indices(np.array([1.0, 2.0, 2.0, 0.5]), 2)) == [1, 2]
    assert list(top_indices(np.array([5.0, 5.0, 5.0]), 2, exclude=[0])) == [1, 2]


def make_pool(n, seed=0):
    return sample_pool(n, BOUNDS, seed)


def test_prefilter_mixture_against_sort():
    pool = make_pool(100)
    scores = np.random.default_rng(4).uniform(size=100)
    w = prefilter(pool, scores, ScoringConfig(M=10, beta=0.7), seed=1)
    oracle_top = set(np.argsort(-scores)[:7])
    assert len(w) == 10 and len(set(w)) == 10
    assert set(w[:7]) == oracle_top
    assert not set(w[7:]) & oracle_top


def test_prefilter_endpoints():
    pool = make_pool(50)
    scores = np.random.default_rng(5).uniform(size=50)
    top = prefilter(pool, scores, ScoringConfig(M=8, beta=1.0), seed=0)
    assert set(top) == set(np.argsort(-scores)[:8])
    unif = prefilter(pool, scores, ScoringConfig(M=8, beta=0.0), seed=0)
    assert len(set(unif)) == 8
    with pytest.raises(ValueError):
        prefilter(pool, scores, ScoringConfig(M=51), seed=0)


def test_pool_subset():
    pool = make_pool(20)
    sub = pool.subset([3, 1])
    assert isinstance(sub, CandidatePool)
    assert np.array_equal(sub.points, pool.points[[3, 1]])
