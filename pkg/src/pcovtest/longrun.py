"""Long-run covariance of the moving-subgroup estimates.

Rows of the M×d estimate matrix form a (B−1)-dependent sequence because
consecutive windows share B−1 observations, so the covariance of
√M·(column means) is estimated by the truncated lag sum

    Σ̂ = Σ_{j=−B+1}^{B−1} Ĥ_j,
    Ĥ_j = M⁻¹ Σ_{m=j+1}^{M} (U_m − Ū)(U_{m−j} − Ū)ᵀ   (j ≥ 0, Ĥ_{−j} = Ĥ_jᵀ).

The flat truncation is not guaranteed positive semidefinite (a 0/1
alternating column with B=2 already yields a negative "variance"), so
the correlation matrix used for Gaussian sampling passes through
psd_repair, and variances at or below the floor raise instead of being
silently regularized.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, ValidationError

VARIANCE_FLOOR = 1e-12
PSD_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class LongRunEstimates:
    """Σ̂ with its diagonal, correlation, and the repaired sampling matrix."""

    sigma_hat: np.ndarray       # (d, d) symmetric
    diag_hat: np.ndarray        # (d,)   sigma_hat diagonal (long-run variances)
    corr_hat: np.ndarray        # (d, d) D^{-1/2} Σ̂ D^{-1/2}
    corr_repaired: np.ndarray   # (d, d) PSD, unit diagonal, used for sampling

    @property
    def d(self) -> int:
        return self.diag_hat.shape[0]

    def restrict(self, sl) -> "LongRunEstimates":
        """Estimates for a contiguous sub-block of the statistic vector.

        Σ̂ and R̂ restrict by slicing; the sampling matrix is re-repaired
        from the sliced correlation (repair of the restriction, not
        restriction of the repair).
        """
        return LongRunEstimates(
            sigma_hat=self.sigma_hat[sl, sl],
            diag_hat=self.diag_hat[sl],
            corr_hat=self.corr_hat[sl, sl],
            corr_repaired=psd_repair(self.corr_hat[sl, sl]),
        )


def lag_cov(U: np.ndarray, j: int, mean: np.ndarray) -> np.ndarray:
    """Lag-j cross-product matrix Ĥ_j of the centered rows of U."""
    U = np.asarray(U, dtype=float)
    M = U.shape[0]
    j = int(j)
    if abs(j) >= M:
        raise ValidationError(f"lag |{j}| must be smaller than the row count M={M}")
    if j < 0:
        return lag_cov(U, -j, mean).T
    centered = U - np.asarray(mean, dtype=float)
    return centered[j:].T @ centered[: M - j] / M


def flat_lag_diag(G: np.ndarray, B: int) -> np.ndarray:
    """Diagonal flat truncated lag sum of an already-centered matrix.

    Computes M⁻¹ Σ_{|m1−m2|<B} G_{m1,j} G_{m2,j} per column without
    forming d×d matrices.  The caller chooses the centering: the
    monolithic estimate subtracts the column means (longrun_diag), the
    distributed engine subtracts the pooled mean across blocks.  Lags
    that exceed the row count contribute no pairs and are skipped.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise ValidationError("flat_lag_diag expects an M×d matrix")
    M = G.shape[0]
    if B < 1 or M < 1:
        raise ValidationError(f"need B >= 1 and M >= 1, got B={B}, M={M}")
    out = (G * G).sum(axis=0)
    for lag in range(1, min(int(B), M)):
        out = out + 2.0 * (G[lag:] * G[: M - lag]).sum(axis=0)
    return out / M


def longrun_diag(U: np.ndarray, B: int) -> np.ndarray:
    """Diagonal of the truncated lag sum without forming d×d matrices.

    Equals np.diag of longrun_sigma's Σ̂; used where only the per-column
    long-run variances are needed.
    """
    U = np.asarray(U, dtype=float)
    M = U.shape[0]
    if not 1 <= B <= M:
        raise ValidationError(f"need 1 <= B <= M, got B={B}, M={M}")
    return flat_lag_diag(U - U.mean(axis=0), B)


def longrun_sigma(U: np.ndarray, B: int, labels=None) -> LongRunEstimates:
    """Truncated lag-sum estimate Σ̂ plus derived correlation matrices.

    Requires M ≥ B so every lag up to B−1 is observable; below 2B the
    estimate rests on very few effective degrees of freedom, which is
    worth a warning rather than an error.  `labels` (optional, length d)
    names columns in degenerate-variance errors.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValidationError("U must be an M×d matrix")
    M, d = U.shape
    B = int(B)
    if B < 1:
        raise ValidationError(f"B must be positive, got {B}")
    if M < B:
        raise ValidationError(
            f"need M >= B to observe all lags up to B-1, got M={M}, B={B}"
        )
    if M < 2 * B:
        warnings.warn(
            f"long-run covariance from M={M} subgroups with B={B}: fewer than 2B "
            f"rows, the lag-sum estimate will be noisy",
            stacklevel=2,
        )
    mean = U.mean(axis=0)
    sigma = lag_cov(U, 0, mean)
    for lag in range(1, B):
        h = lag_cov(U, lag, mean)
        sigma = sigma + h + h.T
    sigma = (sigma + sigma.T) / 2.0

    diag = np.diag(sigma).copy()
    bad = np.flatnonzero(diag <= VARIANCE_FLOOR)
    if bad.size:
        j = int(bad[0])
        name = labels[j] if labels is not None else f"column {j}"
        raise DegenerateVarianceError(
            f"long-run variance for {name} is {diag[j]:.3e} <= {VARIANCE_FLOOR:.0e}; "
            f"the standardized statistic is undefined (constant or degenerate data?)"
        )
    scale = np.sqrt(diag)
    corr = sigma / np.outer(scale, scale)
    np.fill_diagonal(corr, 1.0)
    corr = (corr + corr.T) / 2.0
    return LongRunEstimates(
        sigma_hat=sigma,
        diag_hat=diag,
        corr_hat=corr,
        corr_repaired=psd_repair(corr),
    )


def psd_repair(corr: np.ndarray) -> np.ndarray:
    """Clip eigenvalues below 1e−10 and rescale to unit diagonal.

    Matrices that are already PSD (smallest eigenvalue above the floor)
    pass through unchanged apart from exact symmetrization.  The repair
    is the minimal intervention that makes N(0, R̂) sampling well posed;
    it is idempotent up to the floor.
    """
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValidationError("psd_repair expects a square matrix")
    asym = float(np.abs(corr - corr.T).max()) if corr.size else 0.0
    if asym > 1e-8:
        raise ValidationError(
            f"matrix is not symmetric (max asymmetry {asym:.3e} > 1e-08)"
        )
    sym = (corr + corr.T) / 2.0
    w, v = np.linalg.eigh(sym)
    if w[0] >= PSD_EIG_FLOOR:
        return sym
    repaired = (v * np.maximum(w, PSD_EIG_FLOOR)) @ v.T
    scale = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(scale, scale)
    repaired = (repaired + repaired.T) / 2.0
    np.fill_diagonal(repaired, 1.0)
    return repaired
