"""Symmetric positive-definite factorizations used by the inference engine.

Small systems go through a dense Cholesky; larger ones through SuperLU in
symmetric mode, which for SPD input with diagonal pivoting yields an LDL^T
factorization (U = D L^T, matching row/column permutations). Both factor
types expose the operations the engine needs: solves, log-determinants,
marginal variances of the inverse, selected inverse columns and Gaussian
sampling with covariance equal to the inverse of the factored matrix.

Marginal variances on the sparse path come from the Takahashi recursion
restricted to the factor's sparsity pattern.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.linalg import get_lapack_funcs
from scipy.sparse.linalg import splu

from .errors import NumericalError

DENSE_LIMIT = 2000


class DenseFactor:
    """Cholesky factor of a dense SPD matrix."""

    def __init__(self, A):
        if sps.issparse(A):
            A = A.toarray()
        A = np.asarray(A, dtype=float)
        try:
            self._chol = sla.cholesky(A, lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericalError(f"dense Cholesky failed: {exc}") from exc
        self.n = A.shape[0]
        self._inv_diag = None

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def solve(self, b):
        return sla.cho_solve((self._chol, True), b, check_finite=False)

    def inv_diag(self):
        """Diagonal of the inverse (marginal variances)."""
        if self._inv_diag is None:
            trtri = get_lapack_funcs("trtri", (self._chol,))
            Linv, info = trtri(self._chol, lower=1)
            if info != 0:
                raise NumericalError("triangular inversion failed")
            self._inv_diag = np.einsum("ij,ij->j", Linv, Linv)
        return self._inv_diag.copy()

    def inv_cols(self, idx):
        """Selected columns of the inverse."""
        idx = np.atleast_1d(idx)
        e = np.zeros((self.n, idx.size))
        e[idx, np.arange(idx.size)] = 1.0
        return self.solve(e)

    def quad_inv_diag(self, L):
        """diag(L A^-1 L^T) for a (m, n) sparse or dense L."""
        Lt = L.T.toarray() if sps.issparse(L) else np.asarray(L, float).T
        X = self.solve(Lt)
        return np.einsum("ij,ij->j", Lt, X)

    def sample(self, z):
        """Map iid standard normals (n, k) to draws with covariance A^-1."""
        return sla.solve_triangular(self._chol.T, z, lower=False, check_finite=False)


class SparseFactor:
    """LDL^T factorization of a sparse SPD matrix via SuperLU symmetric mode."""

    def __init__(self, A):
        A = sps.csc_matrix(A)
        self.n = A.shape[0]
        try:
            self._lu = splu(
                A,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise NumericalError(f"sparse factorization failed: {exc}") from exc
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NumericalError("symmetric factorization lost its permutation symmetry")
        self._d = self._lu.U.diagonal()
        if not np.all(np.isfinite(self._d)) or np.any(self._d <= 0.0):
            raise NumericalError("matrix is not positive definite")
        self._L = self._lu.L.tocsc()
        p = self._lu.perm_c
        self._ip = np.empty_like(p)
        self._ip[p] = np.arange(self.n)
        self._inv_diag = None

    @property
    def logdet(self) -> float:
        return float(np.sum(np.log(self._d)))

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.ndim == 1:
            return self._lu.solve(b)
        return np.column_stack([self._lu.solve(b[:, k]) for k in range(b.shape[1])])

    def inv_cols(self, idx):
        idx = np.atleast_1d(idx)
        e = np.zeros((self.n, idx.size))
        e[idx, np.arange(idx.size)] = 1.0
        return self.solve(e)

    def quad_inv_diag(self, L):
        Lt = L.T.toarray() if sps.issparse(L) else np.asarray(L, float).T
        X = self.solve(Lt)
        return np.einsum("ij,ij->j", Lt, X)

    def inv_diag(self):
        """Marginal variances via the Takahashi recursion on the factor pattern."""
        if self._inv_diag is None:
            self._inv_diag = _sparse_inv_diag(self)
        return self._inv_diag.copy()

    def sample(self, z):
        """Draws with covariance A^-1 from iid standard normals (n, k)."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        if single:
            z = z[:, None]
        u = self._L @ (np.sqrt(self._d)[:, None] * z)
        out = np.empty_like(u)
        scattered = np.empty_like(u)
        scattered[self._ip] = u
        for k in range(z.shape[1]):
            out[:, k] = self._lu.solve(scattered[:, k])
        return out[:, 0] if single else out


def _takahashi_diag(L: sps.csc_matrix, d: np.ndarray) -> np.ndarray:
    """Diagonal of (L D L^T)^-1 computed on the factor's sparsity pattern.

    L is unit lower triangular (CSC), d the positive diagonal of D. Entries
    Z_ij of the inverse are computed for the pattern of L, right to left:
        Z_ij = delta_ij / d_j - sum_{k > j, L_kj != 0} L_kj Z_ki,
    which is exact on the pattern because pattern columns form cliques in the
    filled graph.
    """
    n = L.shape[0]
    indptr, indices, data = L.indptr, L.indices, L.data
    Z = {}
    diag = np.empty(n)
    for j in range(n - 1, -1, -1):
        lo, hi = indptr[j], indptr[j + 1]
        rows = indices[lo:hi]
        vals = data[lo:hi]
        below = rows != j
        rows_b = rows[below]
        vals_b = vals[below]
        # column j entries, bottom-up so Z_ik (k > j) lookups are resolved
        order = np.argsort(rows_b)[::-1]
        for i in rows_b[order]:
            s = 0.0
            for k, lkj in zip(rows_b, vals_b):
                key = (i, k) if i >= k else (k, i)
                s += lkj * Z[key]
            Z[(i, j)] = -s
        s = 0.0
        for k, lkj in zip(rows_b, vals_b):
            s += lkj * Z[(k, j)]
        Z[(j, j)] = 1.0 / d[j] - s
        diag[j] = Z[(j, j)]
    return diag


def _sparse_inv_diag(factor: SparseFactor) -> np.ndarray:
    dperm = _takahashi_diag(factor._L, factor._d)
    out = np.empty(factor.n)
    out[factor._ip] = dperm
    return out


def factorize(A, dense_limit: int = DENSE_LIMIT, force: str | None = None):
    """Factor an SPD matrix, choosing dense below `dense_limit` unknowns."""
    n = A.shape[0]
    if force == "dense" or (force is None and n < dense_limit):
        return DenseFactor(A)
    return SparseFactor(A)
