"""Long-run covariance of the window-mean sequence and its PSD repair."""
import numpy as np
import pytest

from pcovtest.errors import DegenerateVarianceError, ValidationError
from pcovtest.longrun import (LongRunEstimates, lag_cov, longrun_diag,
                              longrun_sigma, psd_repair)
from pcovtest.oracles import sigma_double_sum


def test_lag_cov_constant_columns_vanish():
    U = np.full((8, 3), 2.5)
    for j in range(-3, 4):
        assert np.all(lag_cov(U, j, U.mean(axis=0)) == 0.0)


def test_lag_cov_hand_value():
    # (1, 2, 3) centered is (-1, 0, 1); lag 0 gives ((-1)^2 + 0 + 1^2)/3.
    U = np.array([[1.0], [2.0], [3.0]])
    got = lag_cov(U, 0, U.mean(axis=0))
    assert got[0, 0] == pytest.approx(2.0 / 3.0)


def test_lag_cov_negative_lag_transposes():
    rng = np.random.default_rng(30)
    U = rng.standard_normal((10, 3))
    mean = U.mean(axis=0)
    for j in (1, 2, 5):
        assert np.allclose(lag_cov(U, -j, mean), lag_cov(U, j, mean).T, atol=0.0)


def test_lag_cov_rejects_lag_at_row_count():
    U = np.zeros((4, 2))
    with pytest.raises(ValidationError):
        lag_cov(U, 4, U.mean(axis=0))


def test_longrun_sigma_single_lag_is_plain_covariance():
    rng = np.random.default_rng(31)
    U = rng.standard_normal((50, 4))
    est = longrun_sigma(U, B=1)
    assert np.allclose(est.sigma_hat, lag_cov(U, 0, U.mean(axis=0)), atol=1e-14)


def test_longrun_sigma_matches_double_sum():
    rng = np.random.default_rng(32)
    for M, d, B in ((20, 2, 3), (50, 5, 8), (100, 10, 4)):
        U = rng.standard_normal((M, d))
        est = longrun_sigma(U, B=B)
        want = sigma_double_sum(U, B)
        assert np.allclose(est.sigma_hat, want, atol=1e-10)


def test_longrun_diag_matches_sigma_diagonal():
    rng = np.random.default_rng(33)
    U = rng.standard_normal((40, 6))
    with np.errstate(all="raise"):
        diag = longrun_diag(U, B=5)
    assert np.allclose(diag, np.diag(longrun_sigma(U, B=5).sigma_hat), atol=1e-12)


def test_longrun_sigma_requires_all_lags_observable():
    U = np.random.default_rng(34).standard_normal((4, 2))
    with pytest.raises(ValidationError):
        longrun_sigma(U, B=5)


def test_longrun_sigma_warns_on_few_rows():
    # A trend keeps every truncated lag sum positive even at M = 8.
    U = np.arange(8.0)[:, None] * np.array([1.0, 2.0])
    with pytest.warns(UserWarning, match="fewer than 2B"):
        longrun_sigma(U, B=5)


def test_longrun_sigma_rejects_constant_column():
    rng = np.random.default_rng(36)
    U = rng.standard_normal((30, 3))
    U[:, 1] = 7.0
    with pytest.raises(DegenerateVarianceError, match="column 1"):
        longrun_sigma(U, B=2)


def test_longrun_sigma_names_degenerate_column():
    rng = np.random.default_rng(37)
    U = rng.standard_normal((30, 2))
    U[:, 0] = 0.0
    with pytest.raises(DegenerateVarianceError, match="pair foo"):
        longrun_sigma(U, B=2, labels=["pair foo", "pair bar"])


def test_correlation_has_unit_diagonal_and_is_psd():
    rng = np.random.default_rng(38)
    U = rng.standard_normal((80, 6))
    est = longrun_sigma(U, B=5)
    assert np.allclose(np.diag(est.corr_hat), 1.0, atol=0.0)
    assert np.allclose(np.diag(est.corr_repaired), 1.0, atol=0.0)
    w = np.linalg.eigvalsh(est.corr_repaired)
    assert w[0] >= -1e-12


def test_psd_repair_leaves_psd_matrices_alone():
    corr = np.array([[1.0, 0.3], [0.3, 1.0]])
    assert np.allclose(psd_repair(corr), corr, atol=0.0)


def test_psd_repair_clips_indefinite_matrices():
    # Equicorrelation -0.6 in d=3 has eigenvalue 1 - 2*0.6 < 0.
    corr = np.full((3, 3), -0.6)
    np.fill_diagonal(corr, 1.0)
    repaired = psd_repair(corr)
    w = np.linalg.eigvalsh(repaired)
    assert w[0] >= -1e-12
    assert np.allclose(np.diag(repaired), 1.0, atol=0.0)
    # repair is idempotent once the matrix is PSD
    assert np.allclose(psd_repair(repaired), repaired, atol=1e-12)


def test_psd_repair_rejects_asymmetric_input():
    m = np.array([[1.0, 0.5], [0.2, 1.0]])
    with pytest.raises(ValidationError):
        psd_repair(m)
    with pytest.raises(ValidationError):
        psd_repair(np.zeros((2, 3)))


def test_restrict_re_repairs_the_slice():
    rng = np.random.default_rng(39)
    U = rng.standard_normal((80, 6))
    est = longrun_sigma(U, B=5)
    sub = est.restrict(slice(1, 4))
    assert isinstance(sub, LongRunEstimates)
    assert sub.d == 3
    assert np.allclose(sub.sigma_hat, est.sigma_hat[1:4, 1:4], atol=0.0)
    assert np.allclose(sub.corr_hat, est.corr_hat[1:4, 1:4], atol=0.0)
    assert np.allclose(sub.corr_repaired, psd_repair(est.corr_hat[1:4, 1:4]),
                       atol=0.0)
