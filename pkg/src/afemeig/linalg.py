"""Minimal sparse and small-dense linear algebra.

CSR symmetric matrices with deterministic products, a dense symmetric
generalized eigensolver, and an SPD solver with optional one-vector
deflation.  Everything here is a building block; nothing in this module
knows about meshes.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NumericalError
from . import kernels

# Direct dense factorization below this size, conjugate gradients above.
DENSE_SOLVE_LIMIT = 2000


class SparseMatrix:
    """Square CSR matrix assembled symmetrically.

    Column indices are strictly increasing within each row; products sum in
    that order, so results are reproducible bit for bit.
    """

    __slots__ = ("n", "indptr", "indices", "data")

    def __init__(self, n, indptr, indices, data, validate=True):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if validate:
            self._validate()

    def _validate(self):
        if self.indptr.shape[0] != self.n + 1:
            raise ValueError("indptr length must be n+1")
        if self.indices.shape[0] != self.data.shape[0]:
            raise ValueError("indices and data length mismatch")
        for i in range(self.n):
            cols = self.indices[self.indptr[i]:self.indptr[i + 1]]
            if cols.size and np.any(np.diff(cols) <= 0):
                raise ValueError(f"columns not strictly increasing in row {i}")

    @property
    def nnz(self):
        return self.data.shape[0]

    def matvec(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"dimension mismatch: matrix {self.n}, vector {x.shape}")
        out = np.empty(self.n)
        kernels.csr_matvec(self.indptr, self.indices, self.data, x, out)
        return out

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self):
        d = np.zeros(self.n)
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            k = np.searchsorted(self.indices[lo:hi], i)
            if k < hi - lo and self.indices[lo + k] == i:
                d[i] = self.data[lo + k]
        return d

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            a[i, self.indices[lo:hi]] = self.data[lo:hi]
        return a


def csr_from_coo(n, rows, cols, vals):
    """Coalesce COO triplets into CSR, summing duplicates in insertion
    order (stable sort), so symmetric entries accumulate identically."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.argsort(rows * np.int64(n) + cols, kind="stable")
    r, c, v = rows[order], cols[order], vals[order]
    if r.size:
        key = r * np.int64(n) + c
        first = np.concatenate(([True], key[1:] != key[:-1]))
        starts = np.flatnonzero(first)
        summed = np.add.reduceat(v, starts)
        r, c, v = r[starts], c[starts], summed
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, r + 1, 1)
    np.cumsum(indptr, out=indptr)
    return SparseMatrix(n, indptr, c, v, validate=False)


def spmv(a: SparseMatrix, x):
    """CSR matrix-vector product with ascending-column summation."""
    return a.matvec(x)


def _as_dense(a):
    return a.to_dense() if isinstance(a, SparseMatrix) else np.asarray(a, dtype=np.float64)


def dense_geneig(a, m, k):
    """First ``k`` eigenpairs of the dense symmetric pencil (a, m), ascending.

    Returns (lams, vecs) with vecs[:, i] the i-th eigenvector, normalized so
    that vecs.T @ m @ vecs = I.  Raises NumericalError when m is not SPD.
    """
    ad = _as_dense(a)
    md = _as_dense(m)
    if ad.shape != md.shape or ad.shape[0] != ad.shape[1]:
        raise ValueError("matrices must be square and of equal size")
    if not 1 <= k <= ad.shape[0]:
        raise ValueError(f"k={k} out of range for size {ad.shape[0]}")
    try:
        lams, vecs = scipy.linalg.eigh(ad, md)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"mass matrix not positive definite: {exc}") from exc
    return lams[:k].copy(), vecs[:, :k].copy()


def _cg(a, rhs, diag, tol, label):
    """Jacobi-scaled conjugate gradients; breakdown raises NumericalError."""
    n = rhs.shape[0]
    x = np.zeros(n)
    r = rhs.copy()
    dinv = 1.0 / diag
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    norm_rhs = float(np.linalg.norm(rhs))
    if norm_rhs == 0.0:
        return x
    for it in range(10 * n + 50):
        ap = a.matvec(p) if isinstance(a, SparseMatrix) else a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NumericalError(f"{label}: non-SPD detected at CG iteration {it} (p.T A p = {pap:.3e})")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * norm_rhs:
            return x
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NumericalError(f"{label}: CG failed to reach tolerance {tol:g}")


def _spd_solve(a, rhs_list):
    """Solve a x = rhs for each rhs; dense Cholesky when small, CG otherwise."""
    n = rhs_list[0].shape[0]
    if not isinstance(a, SparseMatrix) or n <= DENSE_SOLVE_LIMIT:
        ad = _as_dense(a)
        try:
            factor = scipy.linalg.cho_factor(ad, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"non-SPD matrix in solve_spd: {exc}") from exc
        return [scipy.linalg.cho_solve(factor, rhs) for rhs in rhs_list]
    diag = a.diagonal()
    if np.any(diag <= 0.0):
        bad = int(np.argmin(diag))
        raise NumericalError(f"non-SPD matrix in solve_spd: diagonal entry {bad} is {diag[bad]:.3e}")
    return [_cg(a, rhs, diag, 1e-12, "solve_spd") for rhs in rhs_list]


def solve_spd(a, rhs, deflate=None):
    """Solve ``a t = rhs`` for SPD ``a``, optionally deflated against one vector.

    With ``deflate=(w, m)`` the right-hand side is first projected,
    rhs' = rhs - (w.rhs) m w, and the returned t additionally satisfies
    w.T m t = 0 (the constrained Galerkin solution, eliminating the
    Lagrange multiplier through a second solve).
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    n = a.n if isinstance(a, SparseMatrix) else np.asarray(a).shape[0]
    if rhs.shape != (n,):
        raise ValueError(f"dimension mismatch: matrix {n}, rhs {rhs.shape}")
    if deflate is None:
        return _spd_solve(a, [rhs])[0]
    w, m = deflate
    w = np.asarray(w, dtype=np.float64)
    mw = m.matvec(w) if isinstance(m, SparseMatrix) else np.asarray(m) @ w
    rhs_p = rhs - (w @ rhs) * mw
    t1, t2 = _spd_solve(a, [rhs_p, mw])
    denom = float(w @ (m.matvec(t2) if isinstance(m, SparseMatrix) else np.asarray(m) @ t2))
    mt1 = float(w @ (m.matvec(t1) if isinstance(m, SparseMatrix) else np.asarray(m) @ t1))
    if denom == 0.0:
        raise NumericalError("deflation breakdown: w.T M A^{-1} M w = 0")
    return t1 - (mt1 / denom) * t2
