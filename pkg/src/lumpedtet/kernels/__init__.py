"""Inner loops of explicit stepping with a compiled and a pure-Python backend.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when ``LUMPEDTET_BACKEND=python`` is set, the NumPy/SciPy versions in
``_pykernels`` are used.  ``LUMPEDTET_THREADS`` sets the OpenMP thread count
of the compiled backend.
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = ["BACKEND", "available_backends", "set_backend", "set_num_threads", "StepOperator"]


def available_backends() -> list[str]:
    return (["cython"] if _ckernels is not None else []) + ["python"]


def _initial_backend() -> str:
    forced = os.environ.get("LUMPEDTET_BACKEND", "").strip().lower()
    if forced:
        if forced not in available_backends():
            raise ImportError(f"LUMPEDTET_BACKEND={forced!r} is not available")
        return forced
    return "cython" if _ckernels is not None else "python"


BACKEND = _initial_backend()


def set_backend(name: str) -> None:
    global BACKEND
    if name not in available_backends():
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    BACKEND = name


def set_num_threads(n: int | None) -> None:
    if n is None:
        return
    for mod in (_ckernels, _pykernels):
        if mod is not None:
            mod.set_num_threads(int(n))


if os.environ.get("LUMPEDTET_THREADS"):
    set_num_threads(int(os.environ["LUMPEDTET_THREADS"]))


class StepOperator:
    """``x -> g - M^-1 A x`` on the interior nodes, plus a fused leap-frog update.

    Real CSR systems go through the selected backend; complex operators (Bloch
    symbols) always use the Python path.
    """

    def __init__(self, stiffness, inv_mass, backend: str | None = None):
        self.matrix = stiffness
        self.inv_mass = np.ascontiguousarray(inv_mass)
        self.backend = backend or BACKEND
        compiled = (
            self.backend == "cython"
            and _ckernels is not None
            and sp.issparse(stiffness)
            and stiffness.dtype == np.float64
            and self.inv_mass.dtype == np.float64
        )
        if compiled:
            csr = sp.csr_matrix(stiffness)
            csr.sort_indices()
            self._indptr = csr.indptr.astype(np.int64)
            self._indices = csr.indices.astype(np.int32)  # column ids < n
            self._data = np.ascontiguousarray(csr.data, dtype=np.float64)
        else:
            self.backend = "python"
        self.n = len(self.inv_mass)
        self.dtype = np.result_type(stiffness.dtype, self.inv_mass.dtype)
        self._zeros = np.zeros(self.n, dtype=self.dtype)

    def apply(self, x, g=None, out=None) -> np.ndarray:
        if g is None:
            g = self._zeros
        if out is None:
            out = np.empty(self.n, dtype=np.result_type(self.dtype, x.dtype))
        if self.backend == "cython":
            _ckernels.apply_operator(self._indptr, self._indices, self._data, self.inv_mass,
                                     x, g, out)
        else:
            _pykernels.apply_operator(self.matrix, self.inv_mass, x, g, out)
        return out

    def leapfrog(self, u_prev, u, g, dt2: float, out=None) -> np.ndarray:
        """``2u - u_prev + dt2 (g - M^-1 A u)``; ``out`` may alias ``u_prev``."""
        if g is None:
            g = self._zeros
        if out is None:
            out = np.empty_like(u)
        if self.backend == "cython":
            _ckernels.leapfrog_update(self._indptr, self._indices, self._data, self.inv_mass,
                                      u_prev, u, g, float(dt2), out)
        else:
            _pykernels.leapfrog_update(self.matrix, self.inv_mass, u_prev, u, g, dt2, out)
        return out

    def matvec(self, x, out=None) -> np.ndarray:
        if out is None:
            out = np.empty(self.n, dtype=np.result_type(self.dtype, x.dtype))
        if self.backend == "cython":
            _ckernels.csr_matvec(self._indptr, self._indices, self._data, x, out)
        else:
            _pykernels.csr_matvec(self.matrix, x, out)
        return out
