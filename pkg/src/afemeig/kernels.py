"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is missing or ``AFEMEIG_PURE=1`` is set.  Both backends share
one calling convention, so callers go through the module-level wrappers.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"pure": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

if _compiled is None or os.environ.get("AFEMEIG_PURE"):
    _active = _kernels_py
else:
    _active = _compiled


def backend_name():
    return "compiled" if _active is _compiled and _compiled is not None else "pure"


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name):
    """Swap the active backend ('compiled' or 'pure'); used by tests and
    the kernel benchmark."""
    global _active
    try:
        _active = _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")


def csr_matvec(indptr, indices, data, x, out):
    _active.csr_matvec(indptr, indices, data, x, out)


def csr_matvec_t(indptr, indices, data, x, out):
    _active.csr_matvec_t(indptr, indices, data, x, out)


def csr_shifted_matvec(indptr, indices, data_a, data_m, lam, x, out):
    _active.csr_shifted_matvec(indptr, indices, data_a, data_m, lam, x, out)
