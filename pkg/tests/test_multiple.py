"""FDR procedure: marginal statistics, p-values, threshold, rejections."""
import numpy as np
import pytest
from scipy.stats import norm

from pcovtest.errors import ValidationError
from pcovtest.estimator import IndexSetPair, SubgroupStatMatrix
from pcovtest.families import build_family_custom
from pcovtest.longrun import LongRunEstimates
from pcovtest.multiple_test import (MultipleTestResult, fdp_hat, l_effective,
                                    marginal_pvalue, marginal_statistic,
                                    restrict_stats, run_multiple_test,
                                    threshold_search)
from pcovtest.oracles import threshold_grid


def make_stats(mean, M=16):
    mean = np.asarray(mean, dtype=float)
    return SubgroupStatMatrix(B=5, M=M, values=np.tile(mean, (M, 1)),
                              mean=mean)


def make_estimates(d):
    eye = np.eye(d)
    return LongRunEstimates(sigma_hat=eye, diag_hat=np.ones(d), corr_hat=eye,
                            corr_repaired=eye)


def test_l_effective_caps_at_hypothesis_size():
    assert l_effective(3, 5) == 3
    assert l_effective(3, 2) == 2
    assert l_effective(5, 1) == 1


def test_marginal_statistic_singleton_ignores_requested_l():
    stats = make_stats([0.5], M=16)
    for L in (1, 2, 5):
        got = marginal_statistic(stats, make_estimates(1), L)
        assert got == pytest.approx(4 * 0.5, abs=1e-12)  # sqrt(16) * 0.5


def test_marginal_statistic_top_two_sum():
    # standardized vector (2, -1, 0): the top-2 sum is 2 + 0.
    stats = make_stats(np.array([2.0, -1.0, 0.0]) / 4.0, M=16)
    got = marginal_statistic(stats, make_estimates(3), L=2)
    assert got == pytest.approx(2.0, abs=1e-12)


def test_restrict_stats_slices_columns():
    stats = make_stats([1.0, 2.0, 3.0, 4.0], M=8)
    sub = restrict_stats(stats, slice(1, 3))
    assert sub.d == 2
    assert np.allclose(sub.mean, [2.0, 3.0], atol=0.0)
    assert sub.M == 8 and sub.B == 5


def test_marginal_pvalue_clamps_at_boundaries():
    corr = np.eye(1)
    N = 200
    low = marginal_pvalue(0, corr, 1e9, L=1, N=N, seed=0)
    high = marginal_pvalue(0, corr, -1e9, L=1, N=N, seed=0)
    assert low == pytest.approx(1.0 / (2 * N))
    assert high == pytest.approx(1.0 - 1.0 / (2 * N))


def test_marginal_pvalue_standard_normal_tail():
    got = marginal_pvalue(0, np.eye(1), 1.645, L=1, N=100000, seed=1)
    assert got == pytest.approx(0.05, abs=0.005)


def test_marginal_pvalue_deterministic_per_hypothesis():
    corr = np.eye(2)
    a = marginal_pvalue(3, corr, 1.0, L=1, N=500, seed=2)
    b = marginal_pvalue(3, corr, 1.0, L=1, N=500, seed=2)
    c = marginal_pvalue(4, corr, 1.0, L=1, N=500, seed=2)
    assert a == b
    assert a != c  # different hypothesis, different sub-stream


def test_fdp_hat_floors_the_denominator():
    scores = np.array([0.2, -0.5])
    t = 1.0
    assert fdp_hat(scores, t) == pytest.approx(2.0 * norm.sf(1.0))


def test_fdp_hat_hand_value():
    got = fdp_hat(np.array([3.0, 0.5]), 1.0)
    assert got == pytest.approx(2.0 * 0.15865525393145707, abs=1e-12)


def test_fdp_hat_vanishes_in_the_tail():
    scores = np.array([1.0, 2.0, 3.0])
    assert fdp_hat(scores, 40.0) == 0.0
    with pytest.raises(ValidationError):
        fdp_hat(scores, np.inf)


def test_threshold_search_fallback_on_nonpositive_scores():
    scores = np.array([-1.0, 0.0, -2.5])
    t_hat, fallback = threshold_search(scores, alpha=0.05)
    assert fallback
    assert t_hat == pytest.approx(np.sqrt(2.0 * np.log(3)))
    assert not np.any(scores >= t_hat)


def test_threshold_search_needs_three_hypotheses():
    with pytest.raises(ValidationError):
        threshold_search(np.array([1.0, 2.0]), alpha=0.05)


def test_threshold_search_alpha_monotonicity():
    rng = np.random.default_rng(60)
    for _ in range(20):
        scores = rng.standard_normal(12) + 1.0
        t_loose, _ = threshold_search(scores, alpha=0.2)
        t_tight, _ = threshold_search(scores, alpha=0.02)
        assert t_loose <= t_tight + 1e-12


def test_threshold_search_matches_grid_oracle():
    rng = np.random.default_rng(61)
    for _ in range(25):
        Q = int(rng.integers(3, 30))
        scores = rng.standard_normal(Q) * 1.5 + rng.uniform(-0.5, 2.0)
        t_hat, _ = threshold_search(scores, alpha=0.1)
        t_grid = threshold_grid(scores, alpha=0.1)
        got = set(np.flatnonzero(scores >= t_hat))
        want = set(np.flatnonzero(scores >= t_grid))
        assert got == want


def test_run_multiple_test_shapes_and_consistency(two_block_family, null_data):
    family = two_block_family
    res = run_multiple_test(null_data, family, B=5, L=1, N=300, seed=3)
    assert isinstance(res, MultipleTestResult)
    assert len(res.marginals) == family.Q
    assert res.engine == "monolithic"
    assert res.rejected == frozenset(
        int(q) for q in np.flatnonzero(res.scores >= res.t_hat))
    assert res.t_max == pytest.approx(
        np.sqrt(2 * np.log(3) - 2 * np.log(np.log(3))))
    for m in res.marginals:
        assert 0.0 < m.pvalue < 1.0
        assert m.score == pytest.approx(norm.isf(m.pvalue), abs=1e-12)
        assert np.isfinite(m.score)


def test_run_multiple_test_respects_l_cap(two_block_family, null_data):
    family = two_block_family
    res = run_multiple_test(null_data, family, B=5, L=2, N=300, seed=4)
    assert res.marginals[0].L_used == 2
    assert res.marginals[1].L_used == 1
    assert res.marginals[2].L_used == 1


def test_run_multiple_test_deterministic(two_block_family, null_data):
    family = two_block_family
    a = run_multiple_test(null_data, family, B=5, L=1, N=300, seed=5)
    b = run_multiple_test(null_data, family, B=5, L=1, N=300, seed=5)
    assert a.t_hat == b.t_hat
    assert a.rejected == b.rejected
    assert [m.pvalue for m in a.marginals] == [m.pvalue for m in b.marginals]


def test_run_multiple_test_order_permutation(null_data):
    # Permuting the hypothesis list permutes marginals but leaves the
    # threshold and the identity of the rejected hypotheses unchanged.
    base = build_family_custom(
        [[IndexSetPair([0], [1])], [IndexSetPair([2], [3])],
         [IndexSetPair([4], [5])]],
        labels=("h0", "h1", "h2"))
    perm = build_family_custom(
        [[IndexSetPair([4], [5])], [IndexSetPair([0], [1])],
         [IndexSetPair([2], [3])]],
        labels=("h2", "h0", "h1"))
    res_a = run_multiple_test(null_data, base, B=5, L=1, N=300, seed=6)
    res_b = run_multiple_test(null_data, perm, B=5, L=1, N=300, seed=6)
    stats_a = {lab: m.statistic for lab, m in zip(base.labels, res_a.marginals)}
    stats_b = {lab: m.statistic for lab, m in zip(perm.labels, res_b.marginals)}
    assert stats_a == pytest.approx(stats_b)


def test_scores_decrease_in_pvalue():
    ps = np.linspace(0.01, 0.99, 25)
    scores = norm.isf(ps)
    assert np.all(np.diff(scores) < 0)
