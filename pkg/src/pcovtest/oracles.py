"""Brute-force reference implementations, used only by the test suite.

Everything here trades speed for transparency: literal loops over the
displayed sums, exhaustive subset enumeration, and dense grids.  None
of these functions is called from a production code path; tests import
both sides and compare.  The only shared code is the scalar `angle`
primitive.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np
from scipy.stats import norm

from .angles import angle
from .errors import ValidationError


@dataclass(frozen=True)
class OracleTolerance:
    abs: float = 1e-10
    rel: float = 1e-8

    def __post_init__(self):
        if self.abs <= 0 or self.rel <= 0:
            raise ValidationError("tolerances must be positive")


def pcov_literal(data, pair) -> float:
    """Three-term estimator by literal loops over distinct index tuples.

    Each term averages angle products over ordered tuples of pairwise
    distinct rows (three, five, and four rows respectively), which is
    what makes the estimate exactly unbiased for Pcov².
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n > 12:
        raise ValidationError(f"literal oracle refuses n={n} > 12 (O(n^5) cost)")
    if n < 5:
        raise ValidationError(f"the estimator needs n >= 5, got {n}")
    s1 = list(pair.s1) if hasattr(pair, "s1") else list(pair[0])
    s2 = list(pair.s2) if hasattr(pair, "s2") else list(pair[1])
    x1 = data[:, s1]
    x2 = data[:, s2]

    a1 = [[[angle(x1[i] - x1[k], x1[l] - x1[k]) for l in range(n)]
           for k in range(n)] for i in range(n)]
    a2 = [[[angle(x2[i] - x2[k], x2[l] - x2[k]) for l in range(n)]
           for k in range(n)] for i in range(n)]

    term1 = 0.0
    for i in range(n):
        for k in range(n):
            for l in range(n):
                if len({i, k, l}) == 3:
                    term1 += a1[i][k][l] * a2[i][k][l]

    term2 = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    for r in range(n):
                        if len({i, j, k, l, r}) == 5:
                            term2 += a1[i][k][l] * a2[j][k][r]

    term3 = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    if len({i, j, k, l}) == 4:
                        term3 += a1[i][k][l] * a2[j][k][l]

    f3 = n * (n - 1) * (n - 2)
    f4 = f3 * (n - 3)
    f5 = f4 * (n - 4)
    return term1 / f3 + term2 / f5 - 2.0 * term3 / f4


def f_L_enumerate(z, L: int) -> float:
    """Maximum of all size-L index-subset sums."""
    z = np.asarray(z, dtype=float)
    d = z.size
    L = int(L)
    if not 1 <= L <= d:
        raise ValidationError(f"L must satisfy 1 <= L <= {d}, got {L}")
    if comb(d, L) > 10 ** 6:
        raise ValidationError(
            f"subset enumeration refuses C({d},{L}) = {comb(d, L)} > 1e6 subsets"
        )
    return max(sum(z[i] for i in subset) for subset in combinations(range(d), L))


def sigma_double_sum(U, B: int) -> np.ndarray:
    """Direct double sum M⁻¹ Σ_{|m1−m2|<B} (U_m1 − Ū)(U_m2 − Ū)ᵀ."""
    U = np.asarray(U, dtype=float)
    M, d = U.shape
    if M > 200:
        raise ValidationError(f"double-sum oracle refuses M={M} > 200")
    centered = U - U.mean(axis=0)
    out = np.zeros((d, d))
    for m1 in range(M):
        for m2 in range(M):
            if abs(m1 - m2) < B:
                out += np.outer(centered[m1], centered[m2])
    return out / M


def threshold_grid(scores, alpha: float, grid_step: float = 1e-4) -> float:
    """Dense-grid evaluation of the FDP threshold infimum."""
    if grid_step > 1e-4:
        raise ValidationError(f"grid step must be <= 1e-4, got {grid_step}")
    scores = np.asarray(scores, dtype=float)
    Q = scores.size
    if Q < 3:
        raise ValidationError(f"need Q >= 3, got Q={Q}")
    t_max = float(np.sqrt(2.0 * np.log(Q) - 2.0 * np.log(np.log(Q))))
    grid = np.arange(grid_step, t_max, grid_step)
    grid = np.append(grid, t_max)
    exceed = (scores[None, :] >= grid[:, None]).sum(axis=1)
    fdp = Q * norm.sf(grid) / np.maximum(1, exceed)
    ok = np.flatnonzero(fdp <= alpha)
    if ok.size:
        return float(grid[ok[0]])
    return float(np.sqrt(2.0 * np.log(Q)))
