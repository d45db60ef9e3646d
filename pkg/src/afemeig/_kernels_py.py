"""Pure numpy implementations of the CSR kernels.

Fallback backend used when the compiled extension is unavailable (or when
``AFEMEIG_PURE=1``).  Semantics match ``_kernels.pyx``: row sums run over
ascending column index, transpose scatter runs in row order.
"""

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    """out <- A @ x for CSR (indptr, indices, data); out has len(indptr)-1."""
    out[:] = 0.0
    if data.size == 0:
        return
    y = data * x[indices]
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    out[nonempty] = np.add.reduceat(y, indptr[:-1][nonempty])


def csr_matvec_t(indptr, indices, data, x, out):
    """out <- A.T @ x; x has len(indptr)-1 entries, out is pre-sized."""
    out[:] = 0.0
    if data.size == 0:
        return
    xr = np.repeat(x, np.diff(indptr))
    out += np.bincount(indices, weights=data * xr, minlength=out.shape[0])


def csr_shifted_matvec(indptr, indices, data_a, data_m, lam, x, out):
    """out <- (A - lam*M) @ x for two CSR matrices sharing one sparsity."""
    out[:] = 0.0
    if data_a.size == 0:
        return
    y = (data_a - lam * data_m) * x[indices]
    nonempty = np.flatnonzero(np.diff(indptr) > 0)
    out[nonempty] = np.add.reduceat(y, indptr[:-1][nonempty])
