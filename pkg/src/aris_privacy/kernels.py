"""Hot-loop kernels with a compiled implementation and a numpy fallback.

``unit_modulus_ascent(D, z, tol, max_sweeps)`` maximises ``z^H D z`` over
vectors with ``|z_n| = 1`` for a Hermitian ``D`` by cyclic coordinate
updates ``z_n <- exp(j arg(sum_{m != n} D_nm z_m))``. ``z`` is updated in
place; the return value is ``(objective, sweeps)``. Each coordinate step
cannot lower the objective, and iteration stops once a full sweep gains
less than ``tol`` relative.

Set ``ARIS_PRIVACY_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _ascent_py

BACKEND = "python"
_impl = _ascent_py.unit_modulus_ascent

if not os.environ.get("ARIS_PRIVACY_PURE_PYTHON"):
    try:
        from . import _ascent as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled.unit_modulus_ascent
        BACKEND = "cython"


def unit_modulus_ascent(D, z, tol: float = 1e-10, max_sweeps: int = 2000, backend: str | None = None):
    D = np.ascontiguousarray(D, dtype=np.complex128)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or z.shape != (D.shape[0],):
        raise ValueError("D must be square and match z")
    if z.dtype != np.complex128 or not z.flags.c_contiguous:
        raise TypeError("z must be a contiguous complex128 array (updated in place)")
    fn = _impl
    if backend == "python":
        fn = _ascent_py.unit_modulus_ascent
    elif backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernel is not available")
    elif backend is not None:
        raise ValueError(f"unknown backend {backend!r}")
    obj, sweeps = fn(D, z, float(tol), int(max_sweeps))
    return float(obj), int(sweeps)
