"""String-algebra kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built; set ``TDRAS_PURE_PYTHON=1``
to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_ext = None
if os.environ.get("TDRAS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _ext

        BACKEND = "cython"
    except ImportError:  # extension not built
        _ext = None


def excite_all(c, table, backend=None):
    """Stack of E_p^q c for all pairs, shape (M*M, n_strings, n_strings)."""
    if _use_ext(backend):
        return _ext.excite_all(
            np.ascontiguousarray(c, dtype=np.complex128),
            table.ptr, table.src, table.dst, table.sgn, table.n_orbitals**2,
        )
    return _kernels_py.excite_all(c, table)


def deexcite_sum(g, table, backend=None):
    """Sum over pairs of E_p^q g[pq]."""
    if _use_ext(backend):
        return _ext.deexcite_sum(
            np.ascontiguousarray(g, dtype=np.complex128), table.ptr, table.src, table.dst, table.sgn
        )
    return _kernels_py.deexcite_sum(g, table)


def _use_ext(backend):
    if backend is None:
        return _ext is not None
    if backend == "cython" and _ext is None:
        raise RuntimeError("compiled kernels are not available")
    return backend == "cython"
