"""Projection-covariance estimators: validation, identities, invariances."""
import numpy as np
import pytest

from pcovtest.errors import ValidationError
from pcovtest.estimator import (IndexSetPair, SubgroupStatMatrix,
                                moving_estimates, pcov_full, pcov_subgroup,
                                u_matrix)
from pcovtest.oracles import pcov_literal

PAIR = IndexSetPair([0, 1], [2, 3])


def test_index_set_pair_sorts_and_freezes():
    pr = IndexSetPair([3, 1], [0, 2])
    assert pr.s1 == (1, 3)
    assert pr.s2 == (0, 2)
    assert pr.swapped().s1 == (0, 2)


def test_index_set_pair_rejects_bad_sets():
    with pytest.raises(ValidationError):
        IndexSetPair([], [1])
    with pytest.raises(ValidationError):
        IndexSetPair([0], [])
    with pytest.raises(ValidationError):
        IndexSetPair([0, 1], [1, 2])
    with pytest.raises(ValidationError):
        IndexSetPair([0, 0], [1])
    with pytest.raises(ValidationError):
        IndexSetPair([-1], [0])


def test_pcov_full_constant_data_is_zero():
    data = np.ones((6, 4))
    assert pcov_full(data, PAIR) == 0.0


def test_pcov_full_needs_five_rows():
    with pytest.raises(ValidationError):
        pcov_full(np.zeros((4, 4)), PAIR)


def test_pcov_full_rejects_non_finite():
    data = np.zeros((6, 4))
    data[2, 1] = np.inf
    with pytest.raises(ValidationError):
        pcov_full(data, PAIR)


def test_pcov_full_rejects_out_of_range_columns():
    with pytest.raises(ValidationError):
        pcov_full(np.zeros((6, 3)), PAIR)


def test_pcov_full_matches_literal_loops():
    rng = np.random.default_rng(10)
    for _ in range(5):
        data = rng.standard_normal((6, 4))
        got = pcov_full(data, PAIR)
        want = pcov_literal(data, PAIR)
        assert got == pytest.approx(want, abs=1e-10)


def test_pcov_full_symmetric_in_sets():
    rng = np.random.default_rng(11)
    for _ in range(5):
        data = rng.standard_normal((8, 4))
        assert pcov_full(data, PAIR) == pytest.approx(
            pcov_full(data, PAIR.swapped()), abs=1e-12)


def test_pcov_full_row_shuffle_invariant():
    rng = np.random.default_rng(12)
    data = rng.standard_normal((8, 4))
    base = pcov_full(data, PAIR)
    for _ in range(5):
        shuffled = data[rng.permutation(8)]
        assert pcov_full(shuffled, PAIR) == pytest.approx(base, abs=1e-12)


def test_pcov_full_accepts_plain_pair_tuple():
    rng = np.random.default_rng(13)
    data = rng.standard_normal((6, 4))
    assert pcov_full(data, ([0, 1], [2, 3])) == pcov_full(data, PAIR)


def test_pcov_subgroup_equals_full_on_whole_sample():
    rng = np.random.default_rng(14)
    data = rng.standard_normal((7, 4))
    assert pcov_subgroup(data, PAIR) == pcov_full(data, PAIR)


def test_pcov_subgroup_needs_five_rows():
    with pytest.raises(ValidationError):
        pcov_subgroup(np.zeros((4, 4)), PAIR)


def test_moving_estimates_window_count(small_family):
    rng = np.random.default_rng(15)
    stats = moving_estimates(rng.standard_normal((10, 8)), small_family, B=5)
    assert stats.M == 6
    assert stats.values.shape == (6, small_family.d)


def test_moving_estimates_single_window(one_pair_family):
    rng = np.random.default_rng(16)
    data = rng.standard_normal((6, 4))
    stats = moving_estimates(data, one_pair_family, B=6)
    assert stats.M == 1
    assert stats.mean == pytest.approx(stats.values[0], abs=0.0)


def test_moving_estimates_mean_is_column_mean(small_family, null_data):
    stats = moving_estimates(null_data, small_family, B=5)
    assert np.allclose(stats.mean, stats.values.mean(axis=0), atol=1e-12)


def test_moving_estimates_matches_per_window_estimator(one_pair_family):
    rng = np.random.default_rng(17)
    data = rng.standard_normal((9, 4))
    stats = moving_estimates(data, one_pair_family, B=5)
    pair = one_pair_family.flat_pairs[0]
    for m in range(stats.M):
        want = pcov_subgroup(data[m:m + 5], pair)
        assert stats.values[m, 0] == pytest.approx(want, abs=1e-12)


def test_moving_estimates_full_window_equals_pcov_full(small_family):
    rng = np.random.default_rng(18)
    data = rng.standard_normal((8, 8))
    stats = moving_estimates(data, small_family, B=8)
    for j, pair in enumerate(small_family.flat_pairs):
        assert stats.values[0, j] == pytest.approx(
            pcov_full(data, pair), abs=1e-12)


def test_moving_estimates_window_length_limits(small_family):
    data = np.zeros((10, 8))
    with pytest.raises(ValidationError):
        moving_estimates(data, small_family, B=4)
    with pytest.raises(ValidationError):
        moving_estimates(data, small_family, B=11)


def test_estimates_bounded_by_angle_range(small_family, null_data):
    stats = moving_estimates(null_data, small_family, B=5)
    assert np.all(np.abs(stats.values) <= 4 * np.pi ** 2)


def test_estimates_invariant_to_orthogonal_transforms(one_pair_family):
    rng = np.random.default_rng(19)
    data = rng.standard_normal((12, 4))
    base = moving_estimates(data, one_pair_family, B=5).values
    q1, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    q2, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    rotated = data.copy()
    rotated[:, :2] = data[:, :2] @ q1.T
    rotated[:, 2:] = data[:, 2:] @ q2.T
    got = moving_estimates(rotated, one_pair_family, B=5).values
    assert np.allclose(got, base, atol=1e-10)


def test_estimates_invariant_to_positive_scaling(one_pair_family):
    rng = np.random.default_rng(20)
    data = rng.standard_normal((12, 4))
    base = moving_estimates(data, one_pair_family, B=5).values
    scaled = data.copy()
    scaled[:, :2] *= 37.5
    scaled[:, 2:] *= 0.004
    got = moving_estimates(scaled, one_pair_family, B=5).values
    assert np.allclose(got, base, atol=1e-10)


def test_null_estimates_center_at_zero(one_pair_family):
    # Independent index sets make the estimator mean zero; the averaged
    # subgroup estimates over many replicates should sit inside a
    # Monte-Carlo band around 0.
    rng = np.random.default_rng(21)
    reps = 200
    means = np.empty(reps)
    for r in range(reps):
        data = rng.standard_normal((200, 4))
        means[r] = moving_estimates(data, one_pair_family, B=5).mean[0]
    band = 3.0 * means.std(ddof=1) / np.sqrt(reps)
    assert abs(means.mean()) < band


def test_u_matrix_validates_starts(one_pair_family):
    data = np.random.default_rng(22).standard_normal((10, 4))
    pairs = one_pair_family.flat_pairs
    with pytest.raises(ValidationError):
        u_matrix(data, pairs, 5, np.array([], dtype=int))
    with pytest.raises(ValidationError):
        u_matrix(data, pairs, 5, np.array([6]))  # window runs past the data
    with pytest.raises(ValidationError):
        u_matrix(data, pairs, 5, np.array([-1]))


def test_u_matrix_respects_start_selection(one_pair_family):
    rng = np.random.default_rng(23)
    data = rng.standard_normal((12, 4))
    pairs = one_pair_family.flat_pairs
    full = u_matrix(data, pairs, 5, np.arange(8))
    picked = u_matrix(data, pairs, 5, np.array([0, 3, 7]))
    assert np.allclose(picked, full[[0, 3, 7]], atol=0.0)


def test_subgroup_stat_matrix_reports_dimension(small_family, null_data):
    stats = moving_estimates(null_data, small_family, B=5)
    assert isinstance(stats, SubgroupStatMatrix)
    assert stats.d == small_family.d
