"""Greedy sparse coding: OMP, Gram-driven batch OMP, and hard thresholding.

OMP works against any object exposing the dictionary interface
(``signal_dim``, ``natoms``, ``adjoint``, ``column``), so explicit
matrices and implicit separable/composed operators code identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, InconsistentGramError

__all__ = [
    "SparseVec",
    "SparseCodeMatrix",
    "hard_threshold",
    "omp",
    "batch_omp",
    "batch_omp_many",
    "least_squares_code",
]

# Cholesky pivots below this are treated as a numerical breakdown of the
# selected-atom Gram; pursuit stops gracefully with the current code.
CHOLESKY_BREAKDOWN = 1e-12

_ZERO_MAG = 1e-15


@dataclass(frozen=True)
class SparseVec:
    """Sparse representation vector: sorted support indices plus values."""

    dim: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64)
        val = np.asarray(self.values, dtype=float)
        if sup.shape != val.shape or sup.ndim != 1:
            raise DimensionMismatchError("support and values must be 1-d and congruent")
        keep = np.abs(val) > _ZERO_MAG
        sup, val = sup[keep], val[keep]
        order = np.argsort(sup)
        sup, val = sup[order], val[order]
        if sup.size and (sup[0] < 0 or sup[-1] >= self.dim):
            raise DimensionMismatchError("support index out of range")
        if sup.size > 1 and np.any(np.diff(sup) == 0):
            raise DimensionMismatchError("support indices must be unique")
        if not np.all(np.isfinite(val)):
            raise ValueError("sparse values must be finite")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "values", val)

    @property
    def nnz(self) -> int:
        return self.support.size

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.support] = self.values
        return out

    @classmethod
    def from_dense(cls, v: np.ndarray) -> "SparseVec":
        v = np.asarray(v, dtype=float)
        idx = np.where(np.abs(v) > _ZERO_MAG)[0]
        return cls(dim=v.size, support=idx, values=v[idx])


@dataclass
class SparseCodeMatrix:
    """Per-example sparse codes (one column of X per example)."""

    dim: int
    codes: list[SparseVec]

    @property
    def n_examples(self) -> int:
        return len(self.codes)

    def to_dense(self) -> np.ndarray:
        X = np.zeros((self.dim, len(self.codes)))
        for i, c in enumerate(self.codes):
            X[c.support, i] = c.values
        return X

    def supports_union(self) -> np.ndarray:
        if not self.codes:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([c.support for c in self.codes]))


def hard_threshold(v: np.ndarray, k: int) -> SparseVec:
    """Keep the k entries of largest magnitude (ties -> lowest index)."""
    v = np.asarray(v, dtype=float)
    if k <= 0:
        return SparseVec(dim=v.size, support=np.zeros(0, dtype=np.int64),
                         values=np.zeros(0))
    if k >= v.size:
        return SparseVec.from_dense(v)
    # stable sort on -|v| keeps the earliest index among tied magnitudes
    order = np.argsort(-np.abs(v), kind="stable")[:k]
    return SparseVec(dim=v.size, support=order, values=v[order])


def least_squares_code(dictionary, y: np.ndarray, support) -> SparseVec:
    """Least-squares coefficients of ``y`` on a fixed atom support."""
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        return SparseVec(dim=dictionary.natoms, support=support, values=np.zeros(0))
    cols = np.column_stack([dictionary.column(int(j)) for j in support])
    coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
    return SparseVec(dim=dictionary.natoms, support=support, values=coef)


def omp(dictionary, y: np.ndarray, max_atoms: int | None = None,
        resid_tol: float = 0.0) -> SparseVec:
    """Orthogonal matching pursuit with per-step least-squares refit.

    Selects the atom of maximal absolute correlation with the residual,
    re-solves the coefficients on the selected support through an
    incrementally-updated Cholesky factor, and stops at ``max_atoms``
    atoms or when the residual norm drops to ``resid_tol``.  A Cholesky
    pivot below the breakdown threshold (near-dependent selection) stops
    the pursuit and returns the code built so far.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != dictionary.signal_dim:
        raise DimensionMismatchError(
            f"signal has length {y.size}, dictionary expects {dictionary.signal_dim}")
    m = dictionary.natoms
    if max_atoms is None:
        max_atoms = min(m, y.size)
    max_atoms = min(max_atoms, m)
    if max_atoms < 1 and resid_tol <= 0.0:
        raise ValueError("need max_atoms >= 1 or resid_tol > 0")

    resid = y.copy()
    resid_norm = np.linalg.norm(resid)
    selected: list[int] = []
    atoms = np.zeros((y.size, max_atoms))
    Lch = np.zeros((max_atoms, max_atoms))
    coef = np.zeros(0)

    while len(selected) < max_atoms and resid_norm > resid_tol:
        corr = dictionary.adjoint(resid)
        if selected:
            corr[selected] = 0.0
        j = int(np.argmax(np.abs(corr)))
        if abs(corr[j]) <= _ZERO_MAG:
            break
        col = dictionary.column(j)
        s = len(selected)
        if s == 0:
            piv = col @ col
            if piv < CHOLESKY_BREAKDOWN:
                break
            Lch[0, 0] = np.sqrt(piv)
        else:
            w = solve_triangular(Lch[:s, :s], atoms[:, :s].T @ col, lower=True)
            piv = col @ col - w @ w
            if piv < CHOLESKY_BREAKDOWN:
                break
            Lch[s, :s] = w
            Lch[s, s] = np.sqrt(piv)
        atoms[:, s] = col
        selected.append(j)
        ns = len(selected)
        rhs = atoms[:, :ns].T @ y
        z = solve_triangular(Lch[:ns, :ns], rhs, lower=True)
        coef = solve_triangular(Lch[:ns, :ns].T, z, lower=False)
        resid = y - atoms[:, :ns] @ coef
        new_norm = np.linalg.norm(resid)
        if new_norm > resid_norm + 1e-10 * max(1.0, resid_norm):
            # orthogonal projections cannot increase the residual; treat
            # any rise as numerical breakdown and keep the previous code
            selected.pop()
            break
        resid_norm = new_norm

    if not selected:
        return SparseVec(dim=m, support=np.zeros(0, dtype=np.int64), values=np.zeros(0))
    ns = len(selected)
    rhs = atoms[:, :ns].T @ y
    z = solve_triangular(Lch[:ns, :ns], rhs, lower=True)
    coef = solve_triangular(Lch[:ns, :ns].T, z, lower=False)
    return SparseVec(dim=m, support=np.array(selected), values=coef)


def batch_omp(G: np.ndarray, alpha0: np.ndarray, norm_y2: float,
              max_atoms: int | None = None, resid_tol: float = 0.0,
              check_gram: bool = True) -> SparseVec:
    """OMP driven by a precomputed Gram matrix (no explicit residuals).

    ``alpha0`` is D^T y and ``norm_y2`` is ||y||^2; the squared residual
    norm is tracked through the Gram recurrence.  Output matches
    :func:`omp` on the same dictionary and signal.
    """
    G = np.asarray(G)
    alpha0 = np.asarray(alpha0, dtype=float)
    m = G.shape[0]
    if G.shape != (m, m) or alpha0.shape != (m,):
        raise DimensionMismatchError("Gram/correlation shapes are inconsistent")
    if check_gram and np.max(np.abs(np.diag(G) - 1.0)) > 1e-6:
        raise InconsistentGramError("Gram diagonal deviates from 1 beyond 1e-6")
    if max_atoms is None:
        max_atoms = m
    max_atoms = min(max_atoms, m)
    if max_atoms < 1 and resid_tol <= 0.0:
        raise ValueError("need max_atoms >= 1 or resid_tol > 0")

    alpha = alpha0.copy()
    selected: list[int] = []
    Lch = np.zeros((max_atoms, max_atoms))
    coef = np.zeros(0)
    resid2 = float(norm_y2)
    tol2 = resid_tol * resid_tol

    while len(selected) < max_atoms and resid2 > tol2:
        a = np.abs(alpha)
        if selected:
            a[selected] = 0.0
        j = int(np.argmax(a))
        if a[j] <= _ZERO_MAG:
            break
        s = len(selected)
        if s == 0:
            Lch[0, 0] = 1.0
        else:
            w = solve_triangular(Lch[:s, :s], G[selected, j], lower=True)
            piv = 1.0 - w @ w
            if piv < CHOLESKY_BREAKDOWN:
                break
            Lch[s, :s] = w
            Lch[s, s] = np.sqrt(piv)
        selected.append(j)
        ns = len(selected)
        z = solve_triangular(Lch[:ns, :ns], alpha0[selected], lower=True)
        coef = solve_triangular(Lch[:ns, :ns].T, z, lower=False)
        alpha = alpha0 - G[:, selected] @ coef
        resid2 = float(norm_y2 - coef @ alpha0[selected])

    if not selected:
        return SparseVec(dim=m, support=np.zeros(0, dtype=np.int64), values=np.zeros(0))
    return SparseVec(dim=m, support=np.array(selected), values=coef)
