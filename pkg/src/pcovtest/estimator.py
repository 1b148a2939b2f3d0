"""Squared projection covariance estimators.

For an index-set pair (S1, S2) the estimator averages products of
angles A_s(i,k,l) = ∠(X_{i,S_s} − X_{k,S_s}, X_{l,S_s} − X_{k,S_s})
over tuples of distinct rows of a sample of B rows:

      mean over distinct (i,k,l)     of  A₁(i,k,l) A₂(i,k,l)
    + mean over distinct (i,j,k,l,r) of  A₁(i,k,l) A₂(j,k,r)
    − 2 · mean over distinct (i,j,k,l) of  A₁(i,k,l) A₂(j,k,l)

Restricting each sum to distinct tuples makes it match its population
counterpart (a moment over three, five, or four independent copies)
exactly, so the estimate is unbiased for Pcov² at every sample size; in
particular it is centered at zero under independence, which is what
lets √M·Ū/σ̂ serve as a test statistic without any bias correction.
It is also why subgroups need B ≥ 5: the middle term draws five
distinct rows.

Every tensor entry with a repeated index vanishes (∠(v, v) = 0, and an
angle with a zero difference vector is 0 by convention), and the tensor
is symmetric in (i, l) because the angle is symmetric in its arguments.
Inclusion–exclusion over coinciding indices between the A₁ tuple and
the A₂ tuple therefore collapses onto the same three contractions the
unrestricted sums factorize into:

    S  = Σ_{i,k,l} A₁(i,k,l) A₂(i,k,l)
    C₄ = Σ_{k,l} [Σ_i A₁(i,k,l)] · [Σ_j A₂(j,k,l)]
    C₅ = Σ_k [Σ_{i,l} A₁(i,k,l)] · [Σ_{j,r} A₂(j,k,r)]

    U = S/(B)₃ + (C₅ − 4·C₄ + 2·S)/(B)₅ − 2·(C₄ − S)/(B)₄

with (B)_r the falling factorial B(B−1)···(B−r+1), so each pair costs
O(B³) once the two angle tensors exist.  The tensors themselves are
built per (window, index set) from window Gram matrices and shared
across every pair that touches the same index set; the literal
distinct-tuple-loop equivalence is covered by the oracle tests.

`moving_estimates` evaluates the estimator on every length-B moving
window of consecutive rows and stacks the results into an M×d matrix
(d = number of pairs, in family flattening order).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .angles import ZERO_NORM_FLOOR, tensors_from_deltas_1d, tensors_from_grams
from .errors import ValidationError

# Cap on cached angle-tensor entries across all index sets of one window
# batch; batches larger than this are processed in window chunks.
_TENSOR_BUDGET = 1 << 24


@dataclass(frozen=True)
class IndexSetPair:
    """Disjoint, nonempty sorted column index sets (S1, S2)."""

    s1: tuple
    s2: tuple

    def __init__(self, s1: Iterable[int], s2: Iterable[int]):
        s1 = tuple(sorted(int(c) for c in s1))
        s2 = tuple(sorted(int(c) for c in s2))
        for name, s in (("s1", s1), ("s2", s2)):
            if not s:
                raise ValidationError(f"index set {name} is empty")
            if s[0] < 0:
                raise ValidationError(f"index set {name} has negative column {s[0]}")
            if len(set(s)) != len(s):
                raise ValidationError(f"index set {name} has duplicate columns")
        overlap = set(s1) & set(s2)
        if overlap:
            raise ValidationError(
                f"index sets overlap in columns {sorted(overlap)}; S1 and S2 must be disjoint"
            )
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)

    def swapped(self) -> "IndexSetPair":
        return IndexSetPair(self.s2, self.s1)


@dataclass(frozen=True)
class SubgroupStatMatrix:
    """Moving-subgroup estimates: values[m, j] = U_m for the j-th pair."""

    B: int
    M: int
    values: np.ndarray  # (M, d)
    mean: np.ndarray    # (d,), column means of values

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _ustat_coeffs(n: int):
    """Weights turning the contractions (S, C₄, C₅) into the unbiased
    estimate S·c_s + C₄·c_4 + C₅·c_5 (inclusion–exclusion, see module
    docstring).  Requires n ≥ 5 so all falling factorials are positive.
    """
    f3 = n * (n - 1) * (n - 2)
    f4 = f3 * (n - 3)
    f5 = f4 * (n - 4)
    return 1.0 / f3 + 2.0 / f4 + 2.0 / f5, -2.0 / f4 - 4.0 / f5, 1.0 / f5


def _as_pairs(family) -> list:
    """Accept a HypothesisFamily-like object or a plain pair sequence."""
    pairs = list(family.flat_pairs if hasattr(family, "flat_pairs") else family)
    if not pairs:
        raise ValidationError("no index-set pairs to estimate")
    for pr in pairs:
        if not isinstance(pr, IndexSetPair):
            raise ValidationError(f"expected IndexSetPair, got {type(pr).__name__}")
    return pairs


def _check_data(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValidationError("observation data must be a 2-D matrix (rows = subjects)")
    if not np.isfinite(data).all():
        raise ValidationError("observation data contains non-finite values")
    return data


def _check_columns(pairs: Sequence[IndexSetPair], p: int) -> None:
    for pr in pairs:
        hi = max(pr.s1[-1], pr.s2[-1])
        if hi >= p:
            raise ValidationError(
                f"pair references column {hi} but the data has only {p} columns"
            )


def u_matrix(data: np.ndarray, pairs: Sequence[IndexSetPair], B: int,
             starts: np.ndarray) -> np.ndarray:
    """Estimates for every window given by its start row; shape (W, d).

    Window w covers rows starts[w] .. starts[w]+B−1.  Angle tensors are
    computed once per (window chunk, index set) and reused by all pairs.
    """
    data = _check_data(data)
    n, p = data.shape
    pairs = _as_pairs(pairs)
    _check_columns(pairs, p)
    starts = np.asarray(starts, dtype=np.intp)
    if starts.ndim != 1 or starts.size == 0:
        raise ValidationError("starts must be a nonempty 1-D index array")
    if starts.min() < 0 or starts.max() + B > n:
        raise ValidationError("window exceeds the data rows")

    centered = data - data.mean(axis=0)
    sets = []
    seen = {}
    for pr in pairs:
        for s in (pr.s1, pr.s2):
            if s not in seen:
                seen[s] = len(sets)
                sets.append(s)

    W = starts.size
    d = len(pairs)
    U = np.empty((W, d))
    chunk_w = max(1, min(W, _TENSOR_BUDGET // (B ** 3 * len(sets))))
    offs = np.arange(B, dtype=np.intp)
    c_s, c_4, c_5 = _ustat_coeffs(B)

    for lo in range(0, W, chunk_w):
        idx = starts[lo:lo + chunk_w, None] + offs[None, :]
        cache = {}
        for s in sets:
            xw = centered[:, s][idx]                      # (w, B, |s|)
            if len(s) == 1:
                col = xw[..., 0]                          # (w, B)
                t = tensors_from_deltas_1d(col[:, :, None] - col[:, None, :])
            else:
                gram = xw @ xw.transpose(0, 2, 1)         # (w, B, B)
                t = tensors_from_grams(gram)              # (w, B, B, B)
            cache[s] = (t, t.sum(axis=1), t.sum(axis=(1, 3)))
        for j, pr in enumerate(pairs):
            t1, r1, s1 = cache[pr.s1]
            t2, r2, s2 = cache[pr.s2]
            elem = np.einsum("wikl,wikl->w", t1, t2)
            five = np.einsum("wk,wk->w", s1, s2)
            four = np.einsum("wkl,wkl->w", r1, r2)
            U[lo:lo + chunk_w, j] = c_s * elem + c_4 * four + c_5 * five
    return U


def _angle_chunk(prep, rows):
    """Angle tensor slices T[i, :, :] for i in `rows` of one subgroup."""
    if len(prep) == 2:  # one-column set: exact sign-based angles
        zero, neg = prep
        nonzero = ~(zero[rows][:, :, None] | zero.T[None, :, :])
        opposite = neg[rows][:, :, None] ^ neg.T[None, :, :]
        return np.where(nonzero & opposite, np.pi, 0.0)
    gram, nm, zero = prep
    g_diag = np.diagonal(gram)
    ip = (gram[rows][:, None, :] - gram[rows][:, :, None]
          - gram[None, :, :] + g_diag[None, :, None])
    den = nm[rows][:, :, None] * nm.T[None, :, :]
    mask = zero[rows][:, :, None] | zero.T[None, :, :]
    mask |= den <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = ip / den
    np.clip(cos, -1.0, 1.0, out=cos)
    ang = np.arccos(cos)
    ang[mask] = 0.0
    ang[np.arange(rows.size), :, rows] = 0.0  # a difference with itself: exactly 0
    return ang


def pcov_full(data, pair: IndexSetPair) -> float:
    """Full-sample estimator on all n rows (n ≥ 5).

    Evaluated by streaming over the first tensor index, so memory stays
    O(n²) and large n is fine.
    """
    data = _check_data(data)
    n = data.shape[0]
    if n < 5:
        raise ValidationError(
            f"the estimator needs at least 5 observations (it is built from "
            f"five independent copies), got n={n}"
        )
    if not isinstance(pair, IndexSetPair):
        pair = IndexSetPair(*pair)
    _check_columns([pair], data.shape[1])

    centered = data - data.mean(axis=0)
    prepared = []
    for s in (pair.s1, pair.s2):
        xs = centered[:, s]
        if len(s) == 1:
            delta = xs[:, 0][:, None] - xs[:, 0][None, :]
            prepared.append((np.abs(delta) < ZERO_NORM_FLOOR, delta < 0))
            continue
        gram = xs @ xs.T
        g_diag = np.diagonal(gram)
        d2 = g_diag[:, None] - 2.0 * gram + g_diag[None, :]
        np.maximum(d2, 0.0, out=d2)
        nm = np.sqrt(d2)
        prepared.append((gram, nm, nm <= ZERO_NORM_FLOOR))

    elem = 0.0
    r_sum = [np.zeros((n, n)), np.zeros((n, n))]
    chunk = max(1, 4_000_000 // (n * n))
    for lo in range(0, n, chunk):
        rows = np.arange(lo, min(lo + chunk, n))
        a1 = _angle_chunk(prepared[0], rows)
        a2 = _angle_chunk(prepared[1], rows)
        elem += float(np.einsum("ikl,ikl->", a1, a2))
        r_sum[0] += a1.sum(axis=0)
        r_sum[1] += a2.sum(axis=0)
    s1 = r_sum[0].sum(axis=1)  # s[k] = sum over (i, l)
    s2 = r_sum[1].sum(axis=1)
    five = float(s1 @ s2)
    four = float(np.einsum("kl,kl->", r_sum[0], r_sum[1]))
    c_s, c_4, c_5 = _ustat_coeffs(n)
    return c_s * elem + c_4 * four + c_5 * five


def pcov_subgroup(block, pair: IndexSetPair) -> float:
    """Estimator on a single subgroup of B consecutive rows (B ≥ 5)."""
    block = _check_data(block)
    if block.shape[0] < 5:
        raise ValidationError(
            f"subgroup length must be at least 5, got B={block.shape[0]}"
        )
    return pcov_full(block, pair)


def moving_estimates(data, family, B: int) -> SubgroupStatMatrix:
    """Estimates over all M = n − B + 1 moving subgroups, stacked M×d.

    Consecutive windows overlap in B−1 rows, so the rows of the result
    form a (B−1)-dependent sequence; the long-run covariance module
    accounts for that when standardizing the column means.
    """
    data = _check_data(data)
    n = data.shape[0]
    B = int(B)
    if B < 5:
        raise ValidationError(f"subgroup length must be at least 5, got B={B}")
    if B > n:
        raise ValidationError(f"subgroup length B={B} exceeds the sample size n={n}")
    pairs = _as_pairs(family)
    M = n - B + 1
    U = u_matrix(data, pairs, B, np.arange(M, dtype=np.intp))
    return SubgroupStatMatrix(B=B, M=M, values=U, mean=U.mean(axis=0))
