"""Sparse Cholesky factorisation and constrained GMRF sampling.

The factorisation is a simplicial up-looking Cholesky on a fill-reducing
permutation: ``Q[p][:, p] = L L^T``. The symbolic part (ordering,
elimination tree, pattern of ``L``) depends only on the sparsity pattern
and is computed once by :class:`SymbolicFactor`; refactorising a matrix
with the same pattern only redoes the numeric phase.

Random numbers come from :class:`numpy.random.Generator` (PCG64 by
default); normal variates use numpy's ziggurat ``standard_normal``.
Independent chains should use ``numpy.random.SeedSequence.spawn``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.linalg import splu


class FactorizationError(np.linalg.LinAlgError):
    """Non-positive or numerically vanishing pivot during factorisation."""

    def __init__(self, message: str, index: int = -1):
        super().__init__(message)
        self.index = index


class ConstraintError(ArithmeticError):
    pass


# --- numba kernels ------------------------------------------------------
# All kernels take the upper triangle of the permuted matrix in CSC form
# (column k holds rows i <= k), following the classic CSparse layout.


@njit(cache=True)
def _etree(n, Cp, Ci):
    parent = np.full(n, -1, np.int64)
    ancestor = np.full(n, -1, np.int64)
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


@njit(cache=True)
def _ereach(Cp, Ci, k, parent, s, w, n):
    """Pattern of row k of L, topologically ordered in s[top:n]."""
    top = n
    w[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = Ci[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            s[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


@njit(cache=True)
def _column_counts(n, Cp, Ci, parent):
    counts = np.ones(n, np.int64)
    s = np.empty(n, np.int64)
    w = np.full(n, -1, np.int64)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w, n)
        for t in range(top, n):
            counts[s[t]] += 1
    return counts


@njit(cache=True)
def _numeric(n, Cp, Ci, Cx, parent, Lp, Li, Lx):
    """Up-looking Cholesky. Returns -1 on success or the failing column."""
    x = np.zeros(n)
    s = np.empty(n, np.int64)
    w = np.full(n, -1, np.int64)
    c = Lp[:-1].copy()
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w, n)
        x[k] = 0.0
        for p in range(Cp[k], Cp[k + 1]):
            if Ci[p] <= k:
                x[Ci[p]] = Cx[p]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = s[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > 0.0:
            return k
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return -1


@njit(cache=True)
def _lsolve(n, Lp, Li, Lx, x):
    for j in range(n):
        x[j] /= Lx[Lp[j]]
        xj = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj


@njit(cache=True)
def _ltsolve(n, Lp, Li, Lx, x):
    for j in range(n - 1, -1, -1):
        acc = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            acc -= Lx[p] * x[Li[p]]
        x[j] = acc / Lx[Lp[j]]


@njit(cache=True)
def _lsolve_many(n, Lp, Li, Lx, X):
    k = X.shape[1]
    for j in range(n):
        d = Lx[Lp[j]]
        for c in range(k):
            X[j, c] /= d
        for p in range(Lp[j] + 1, Lp[j + 1]):
            i, l = Li[p], Lx[p]
            for c in range(k):
                X[i, c] -= l * X[j, c]


@njit(cache=True)
def _ltsolve_many(n, Lp, Li, Lx, X):
    k = X.shape[1]
    for j in range(n - 1, -1, -1):
        for p in range(Lp[j] + 1, Lp[j + 1]):
            i, l = Li[p], Lx[p]
            for c in range(k):
                X[j, c] -= l * X[i, c]
        d = Lx[Lp[j]]
        for c in range(k):
            X[j, c] /= d


@njit(cache=True)
def _inverse_diagonal(n, Lp, Li, Lx):
    """diag((L L^T)^-1) = column sums of squares of L^-1, one solve per column."""
    out = np.zeros(n)
    x = np.zeros(n)
    for i in range(n):
        x[i] = 1.0
        acc = 0.0
        for j in range(i, n):
            xj = x[j]
            if xj == 0.0:
                continue
            xj /= Lx[Lp[j]]
            x[j] = 0.0
            acc += xj * xj
            for p in range(Lp[j] + 1, Lp[j + 1]):
                x[Li[p]] -= Lx[p] * xj
        out[i] = acc
    return out


# --- orderings ------------------------------------------------------------


def fill_reducing_ordering(A: sp.spmatrix, method: str = "mmd") -> np.ndarray:
    """Symmetric permutation ``p`` such that ``A[p][:, p]`` factors sparsely.

    ``"mmd"`` is SuperLU's multiple minimum degree on the pattern of
    ``A + A^T``; ``"rcm"`` is reverse Cuthill-McKee; ``"natural"`` keeps
    the input order.
    """
    n = A.shape[0]
    if method == "natural":
        return np.arange(n)
    # diagonally dominant stand-in with A's pattern: ordering depends on pattern only
    S = abs(sp.csc_matrix(A, dtype=float))
    S = (S + S.T).tocsc()
    S.setdiag(0.0)
    S.eliminate_zeros()
    S.data[:] = 1.0
    pattern = (sp.diags(S.sum(axis=1).A1 + 1.0) - S).tocsc()
    if method == "mmd":
        lu = splu(
            pattern,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
        # perm_c maps original column -> position; we want position -> original
        return np.argsort(lu.perm_c).astype(np.int64)
    if method == "rcm":
        from scipy.sparse.csgraph import reverse_cuthill_mckee

        return np.asarray(reverse_cuthill_mckee(pattern.tocsr(), symmetric_mode=True), np.int64)
    raise ValueError(f"unknown ordering {method!r}")


# --- factor objects -------------------------------------------------------


class SymbolicFactor:
    """Ordering, elimination tree and pattern of ``L`` for a fixed pattern.

    ``A`` fixes the pattern; later matrices passed to :meth:`factorize`
    must have the same pattern (same CSC ``indptr``/``indices`` after
    sorting), or their values can be given directly in the order of
    :attr:`indptr`/:attr:`indices`.
    """

    def __init__(self, A: sp.spmatrix, ordering: str = "mmd"):
        A = sp.csc_matrix(A, dtype=float, copy=True)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        A.sum_duplicates()
        A.sort_indices()
        self.n = A.shape[0]
        self.indptr = A.indptr.copy()
        self.indices = A.indices.copy()
        self.perm = fill_reducing_ordering(A, ordering)

        # track where each stored entry of A lands in the permuted upper triangle
        tracker = sp.csc_matrix(
            (np.arange(1, A.nnz + 1, dtype=float), self.indices, self.indptr), shape=A.shape
        )
        upper = sp.triu(tracker[self.perm][:, self.perm]).tocsc()
        upper.sort_indices()
        self._Cp = upper.indptr.astype(np.int64)
        self._Ci = upper.indices.astype(np.int64)
        self._source = upper.data.astype(np.int64) - 1

        self.parent = _etree(self.n, self._Cp, self._Ci)
        counts = _column_counts(self.n, self._Cp, self._Ci, self.parent)
        self.Lp = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @property
    def nnz_L(self) -> int:
        return int(self.Lp[-1])

    def same_pattern(self, A: sp.spmatrix) -> bool:
        return (
            A.shape == (self.n, self.n)
            and np.array_equal(A.indptr, self.indptr)
            and np.array_equal(A.indices, self.indices)
        )

    def values_of(self, A: sp.spmatrix) -> np.ndarray:
        """Values of ``A`` laid out on the analysed pattern (zeros where absent)."""
        A = sp.coo_matrix(A, dtype=float)
        if A.shape != (self.n, self.n):
            raise ValueError(f"expected shape {(self.n, self.n)}, got {A.shape}")
        cols = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        keys = cols * self.n + self.indices
        want = A.col.astype(np.int64) * self.n + A.row
        pos = np.searchsorted(keys, want)
        pos_ok = np.minimum(pos, len(keys) - 1)
        if len(want) and (len(keys) == 0 or np.any(keys[pos_ok] != want)):
            raise ValueError("matrix has entries outside the analysed pattern")
        out = np.zeros(len(keys))
        np.add.at(out, pos, A.data)
        return out

    def factorize(self, A=None, values=None, pivot_tol: float = 1e-14) -> "SparseFactor":
        """Numeric factorisation of a matrix with the analysed pattern.

        Raises :class:`FactorizationError` with the offending (original)
        row index if a pivot is non-positive, or if the smallest squared
        pivot is below ``pivot_tol`` times the largest diagonal entry.
        """
        if values is None:
            values = self.values_of(A)
        Cx = np.ascontiguousarray(np.asarray(values, dtype=float)[self._source])
        Li = np.empty(self.nnz_L, np.int64)
        Lx = np.empty(self.nnz_L)
        bad = _numeric(self.n, self._Cp, self._Ci, Cx, self.parent, self.Lp, Li, Lx)
        if bad >= 0:
            raise FactorizationError(
                f"non-positive pivot at row {int(self.perm[bad])} "
                f"(permuted column {bad}); matrix is not positive definite",
                int(self.perm[bad]),
            )
        diag = Lx[self.Lp[:-1]] ** 2
        scale = np.abs(Cx).max() if len(Cx) else 1.0
        j = int(np.argmin(diag)) if self.n else 0
        if self.n and diag[j] < pivot_tol * scale:
            raise FactorizationError(
                f"pivot {diag[j]:.3e} at row {int(self.perm[j])} is numerically zero "
                f"(largest entry {scale:.3e}); matrix is singular",
                int(self.perm[j]),
            )
        return SparseFactor(self, Li, Lx)


class SparseFactor:
    """``Q[p][:, p] = L L^T`` with ``L`` stored in CSC, diagonal first."""

    def __init__(self, symbolic: SymbolicFactor, Li: np.ndarray, Lx: np.ndarray):
        self.symbolic = symbolic
        self.perm = symbolic.perm
        self.n = symbolic.n
        self._Li = Li
        self._Lx = Lx

    @property
    def L(self) -> sp.csc_matrix:
        s = self.symbolic
        return sp.csc_matrix((self._Lx, self._Li, s.Lp), shape=(self.n, self.n))

    def logdet(self) -> float:
        return 2.0 * float(np.log(self._Lx[self.symbolic.Lp[:-1]]).sum())

    def solve(self, b) -> np.ndarray:
        """``Q^{-1} b`` for a vector or an ``(n, k)`` array."""
        b = np.asarray(b, dtype=float)
        x = np.ascontiguousarray(b[self.perm])
        Lp = self.symbolic.Lp
        if x.ndim == 2:
            _lsolve_many(self.n, Lp, self._Li, self._Lx, x)
            _ltsolve_many(self.n, Lp, self._Li, self._Lx, x)
        else:
            _lsolve(self.n, Lp, self._Li, self._Lx, x)
            _ltsolve(self.n, Lp, self._Li, self._Lx, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def solve_Lt(self, z) -> np.ndarray:
        """``P^T L^{-T} z``: maps standard normals to ``N(0, Q^{-1})``.

        ``z`` may be a vector or an ``(n, k)`` array of ``k`` columns.
        """
        x = np.array(z, dtype=float, order="C")
        if x.ndim == 2:
            _ltsolve_many(self.n, self.symbolic.Lp, self._Li, self._Lx, x)
        else:
            _ltsolve(self.n, self.symbolic.Lp, self._Li, self._Lx, x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out

    def inverse_diagonal(self) -> np.ndarray:
        """``diag(Q^{-1})`` via one sparse forward solve per column."""
        d = _inverse_diagonal(self.n, self.symbolic.Lp, self._Li, self._Lx)
        out = np.empty_like(d)
        out[self.perm] = d
        return out


def factorize(Q: sp.spmatrix, ordering: str = "mmd") -> SparseFactor:
    """Analyse and factorise a symmetric positive-definite sparse matrix."""
    return SymbolicFactor(Q, ordering).factorize(Q)


def sample_gaussian(b, factor: SparseFactor, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from ``N(Q^{-1} b, Q^{-1})`` given the factor of ``Q``.

    With ``size`` the result is a ``(size, n)`` array of independent draws.
    """
    mean = factor.solve(b)
    if size is None:
        return mean + factor.solve_Lt(rng.standard_normal(factor.n))
    z = rng.standard_normal((size, factor.n)).T
    return mean + factor.solve_Lt(z).T


def constrain(x, a, factor: SparseFactor, Qinv_a: np.ndarray | None = None) -> np.ndarray:
    """Condition a draw on ``a^T x = 0`` (conditioning by kriging).

    ``x* = x - Q^{-1} a (a^T Q^{-1} a)^{-1} a^T x``. Pass a precomputed
    ``Q^{-1} a`` to avoid the extra solve. A 2-d ``x`` is treated as one
    draw per row.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    if not np.any(a):
        raise ConstraintError("constraint vector is zero")
    v = factor.solve(a) if Qinv_a is None else Qinv_a
    denom = float(a @ v)
    if not denom > 0.0:
        raise ConstraintError(f"a^T Q^-1 a = {denom!r} is not positive")
    if x.ndim == 2:
        return x - np.outer(x @ a / denom, v)
    return x - v * (float(a @ x) / denom)
