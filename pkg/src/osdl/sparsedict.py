"""The double-sparsity dictionary D = Phi A and its effective Gram matrix.

Phi (the base) is applied implicitly: either an explicit matrix or the
two-sided separable operator of a 1-D dictionary.  A is stored
column-major sparse (per-column index/value arrays) since every update
and product traverses columns.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError
from .pursuit import SparseVec
from .wavelets import CroppedWaveletDictionary

__all__ = [
    "ExplicitBase",
    "SeparableBase",
    "make_base",
    "SparseDictionary",
    "EffectiveGram",
    "dict_apply",
    "dict_adjoint",
    "gram_full",
    "gram_update",
]


class ExplicitBase:
    """Base dictionary given as an explicit n x L matrix."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise DimensionMismatchError("base matrix must be 2-d")
        self._gram = None

    @property
    def signal_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def natoms(self) -> int:
        return self.matrix.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.matrix[:, j]

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        if coeffs.shape[0] != self.natoms:
            raise DimensionMismatchError("coefficient dimension mismatch")
        return self.matrix @ coeffs

    def adjoint(self, signals: np.ndarray) -> np.ndarray:
        signals = np.asarray(signals)
        if signals.shape[0] != self.signal_dim:
            raise DimensionMismatchError("signal dimension mismatch")
        return self.matrix.T @ signals

    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = self.matrix.T @ self.matrix
        return self._gram

    def gram_times_sparse(self, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
        return self.gram()[:, idx] @ vals

    def quad_norm2(self, idx: np.ndarray, vals: np.ndarray) -> float:
        G = self.gram()
        return float(vals @ (G[np.ix_(idx, idx)] @ vals))


class SeparableBase:
    """Kronecker-square base: a 1-D dictionary applied to rows and columns.

    Coefficient vectors of length L^2 are column-major vectorizations of
    L x L arrays; the operator is C -> Phi C Phi^T on the unvectorized
    array, which equals (Phi (x) Phi) vec(C).  The full base Gram
    G1 (x) G1 is never materialized.
    """

    def __init__(self, dict1d):
        if isinstance(dict1d, CroppedWaveletDictionary):
            self.matrix1d = dict1d.atoms
            self.dict1d = dict1d
        else:
            self.matrix1d = np.asarray(dict1d, dtype=float)
            self.dict1d = None
        self.side = self.matrix1d.shape[0]
        self.ncols1d = self.matrix1d.shape[1]
        self._gram1 = None

    @property
    def signal_dim(self) -> int:
        return self.side * self.side

    @property
    def natoms(self) -> int:
        return self.ncols1d * self.ncols1d

    def gram1(self) -> np.ndarray:
        if self._gram1 is None:
            self._gram1 = self.matrix1d.T @ self.matrix1d
        return self._gram1

    def column(self, j: int) -> np.ndarray:
        # column j = vec_F(phi_i phi_j'^T) with i = j % L, j' = j // L
        i, jc = j % self.ncols1d, j // self.ncols1d
        return np.outer(self.matrix1d[:, i], self.matrix1d[:, jc]).ravel(order="F")

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs)
        single = coeffs.ndim == 1
        if single:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != self.natoms:
            raise DimensionMismatchError("coefficient dimension mismatch")
        L = self.ncols1d
        C = coeffs.reshape(L, L, -1, order="F")
        out = np.einsum("ab,bcn,dc->adn", self.matrix1d, C, self.matrix1d,
                        optimize=True)
        out = out.reshape(self.signal_dim, -1, order="F")
        return out[:, 0] if single else out

    def adjoint(self, signals: np.ndarray) -> np.ndarray:
        signals = np.asarray(signals)
        single = signals.ndim == 1
        if single:
            signals = signals[:, None]
        if signals.shape[0] != self.signal_dim:
            raise DimensionMismatchError("signal dimension mismatch")
        n = self.side
        P = signals.reshape(n, n, -1, order="F")
        out = np.einsum("ba,bcn,cd->adn", self.matrix1d, P, self.matrix1d,
                        optimize=True)
        out = out.reshape(self.natoms, -1, order="F")
        return out[:, 0] if single else out

    def gram_times_sparse(self, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
        """(G1 (x) G1) applied to a sparse coefficient vector."""
        L = self.ncols1d
        G1 = self.gram1()
        rows = idx % L
        cols = idx // L
        # G1 M G1 with M holding vals at (rows, cols)
        Z = np.zeros((L, L))
        # accumulate G1[:, r] v into column c, then right-multiply
        for r, c, v in zip(rows, cols, vals):
            Z[:, c] += G1[:, r] * v
        return (Z @ G1).ravel(order="F")

    def quad_norm2(self, idx: np.ndarray, vals: np.ndarray) -> float:
        L = self.ncols1d
        G1 = self.gram1()
        rows = idx % L
        cols = idx // L
        blocks = G1[np.ix_(rows, rows)] * G1[np.ix_(cols, cols)]
        return float(vals @ (blocks @ vals))


def make_base(obj) -> ExplicitBase | SeparableBase:
    """Wrap a 1-D cropped dictionary (separable, 2-D) or a plain matrix."""
    if isinstance(obj, (ExplicitBase, SeparableBase)):
        return obj
    if isinstance(obj, CroppedWaveletDictionary):
        return ExplicitBase(obj.atoms)
    return ExplicitBase(np.asarray(obj, dtype=float))


class SparseDictionary:
    """Column-sparse A over a base dictionary; effective atoms Phi a_j."""

    def __init__(self, base, col_idx: list[np.ndarray], col_val: list[np.ndarray],
                 atom_sparsity: int):
        self.base = base
        self.col_idx = [np.asarray(ix, dtype=np.int64) for ix in col_idx]
        self.col_val = [np.asarray(v, dtype=float) for v in col_val]
        self.atom_sparsity = int(atom_sparsity)
        for ix, v in zip(self.col_idx, self.col_val):
            if ix.shape != v.shape:
                raise DimensionMismatchError("column index/value arrays mismatched")
            if ix.size > self.atom_sparsity:
                raise ValueError("column exceeds atom sparsity")
        self._csc = None

    @classmethod
    def from_dense(cls, base, A: np.ndarray, atom_sparsity: int) -> "SparseDictionary":
        A = np.asarray(A, dtype=float)
        if A.shape[0] != base.natoms:
            raise DimensionMismatchError(
                f"A has {A.shape[0]} rows, base provides {base.natoms} atoms")
        col_idx, col_val = [], []
        for j in range(A.shape[1]):
            idx = np.where(A[:, j] != 0.0)[0]
            if idx.size > atom_sparsity:
                order = np.argsort(-np.abs(A[idx, j]), kind="stable")[:atom_sparsity]
                idx = np.sort(idx[order])
            col_idx.append(idx)
            col_val.append(A[idx, j])
        return cls(base, col_idx, col_val, atom_sparsity)

    @property
    def natoms(self) -> int:
        return len(self.col_idx)

    @property
    def signal_dim(self) -> int:
        return self.base.signal_dim

    @property
    def base_dim(self) -> int:
        return self.base.natoms

    def nnz_per_column(self) -> np.ndarray:
        return np.array([ix.size for ix in self.col_idx])

    def to_csc(self) -> sp.csc_matrix:
        if self._csc is None:
            indptr = np.zeros(self.natoms + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([ix.size for ix in self.col_idx])
            indices = (np.concatenate(self.col_idx) if self.natoms else
                       np.zeros(0, dtype=np.int64))
            data = (np.concatenate(self.col_val) if self.natoms else np.zeros(0))
            self._csc = sp.csc_matrix((data, indices, indptr),
                                      shape=(self.base_dim, self.natoms))
        return self._csc

    def dense_a(self) -> np.ndarray:
        return self.to_csc().toarray()

    def set_column(self, j: int, idx: np.ndarray, vals: np.ndarray) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if idx.size > self.atom_sparsity:
            raise ValueError("column exceeds atom sparsity")
        order = np.argsort(idx)
        self.col_idx[j] = idx[order]
        self.col_val[j] = vals[order]
        self._csc = None

    def column_vec(self, j: int) -> np.ndarray:
        """Column a_j of A as a dense base-coefficient vector."""
        out = np.zeros(self.base_dim)
        out[self.col_idx[j]] = self.col_val[j]
        return out

    def column(self, j: int) -> np.ndarray:
        """Effective atom Phi a_j (dictionary interface for pursuit)."""
        cols = self.col_idx[j]
        vals = self.col_val[j]
        out = np.zeros(self.signal_dim)
        for i, v in zip(cols, vals):
            out += v * self.base.column(int(i))
        return out

    def apply_code(self, x: SparseVec) -> np.ndarray:
        """D x for a sparse representation x, exploiting both sparsities."""
        if x.dim != self.natoms:
            raise DimensionMismatchError("code dimension mismatch")
        acc = np.zeros(self.base_dim)
        for j, v in zip(x.support, x.values):
            acc[self.col_idx[j]] += v * self.col_val[j]
        return self.base.apply(acc)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """D X for dense code matrices (columns are codes)."""
        X = np.asarray(X)
        if X.shape[0] != self.natoms:
            raise DimensionMismatchError("code dimension mismatch")
        return self.base.apply(self.to_csc() @ X)

    def adjoint(self, R: np.ndarray) -> np.ndarray:
        """D^T R = A^T (Phi^T R)."""
        return self.to_csc().T @ self.base.adjoint(R)

    def effective_norm(self, j: int) -> float:
        return float(np.sqrt(max(
            self.base.quad_norm2(self.col_idx[j], self.col_val[j]), 0.0)))

    def renormalize(self, columns=None, tol: float = 1e-12) -> np.ndarray:
        """Rescale columns so effective atoms are unit norm; returns scales.

        Columns whose effective atom is numerically zero are left
        untouched and report scale 1.
        """
        if columns is None:
            columns = range(self.natoms)
        columns = list(columns)
        scales = np.ones(len(columns))
        for i, j in enumerate(columns):
            nrm = self.effective_norm(j)
            if nrm > tol:
                self.col_val[j] = self.col_val[j] / nrm
                scales[i] = nrm
        self._csc = None
        return scales

    def copy(self) -> "SparseDictionary":
        return SparseDictionary(self.base,
                                [ix.copy() for ix in self.col_idx],
                                [v.copy() for v in self.col_val],
                                self.atom_sparsity)


class EffectiveGram:
    """Dense Gram (Phi A)^T (Phi A), maintainable under column edits."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix

    @classmethod
    def full(cls, sd: SparseDictionary) -> "EffectiveGram":
        m = sd.natoms
        W = np.zeros((sd.base_dim, m))
        for j in range(m):
            W[:, j] = sd.base.gram_times_sparse(sd.col_idx[j], sd.col_val[j])
        G = sd.to_csc().T @ W
        G = 0.5 * (G + G.T)
        return cls(G)

    def update(self, sd: SparseDictionary, changed) -> None:
        """Recompute rows/columns in ``changed``; leave the rest untouched."""
        changed = np.asarray(sorted(set(int(j) for j in changed)), dtype=np.int64)
        if changed.size == 0:
            return
        W = np.zeros((sd.base_dim, changed.size))
        for i, j in enumerate(changed):
            W[:, i] = sd.base.gram_times_sparse(sd.col_idx[j], sd.col_val[j])
        block = sd.to_csc().T @ W  # m x |changed|
        self.matrix[:, changed] = block
        self.matrix[changed, :] = block.T
        # changed-changed block appears in both writes; symmetrize exactly
        sub = block[changed, :]
        self.matrix[np.ix_(changed, changed)] = 0.5 * (sub + sub.T)


def dict_apply(sd: SparseDictionary, x: SparseVec) -> np.ndarray:
    return sd.apply_code(x)


def dict_adjoint(sd: SparseDictionary, r: np.ndarray) -> np.ndarray:
    return sd.adjoint(np.asarray(r, dtype=float))


def gram_full(sd: SparseDictionary) -> EffectiveGram:
    return EffectiveGram.full(sd)


def gram_update(gram: EffectiveGram, sd: SparseDictionary, changed) -> EffectiveGram:
    gram.update(sd, changed)
    return gram
