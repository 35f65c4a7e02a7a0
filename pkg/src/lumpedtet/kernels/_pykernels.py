"""Pure NumPy/SciPy versions of the compiled stepping kernels.

Signatures mirror ``_ckernels`` so the two are interchangeable; the CSR
arrays are wrapped into a SciPy matrix once per call site by the caller.
"""

from __future__ import annotations

import numpy as np


def set_num_threads(n: int) -> None:
    # SciPy's CSR product is single threaded; nothing to configure
    pass


def get_max_threads() -> int:
    return 1


def apply_operator(matrix, inv_mass, x, g, out):
    np.subtract(g, inv_mass * (matrix @ x), out=out)


def leapfrog_update(matrix, inv_mass, u_prev, u, g, dt2, out):
    # out may alias u_prev, so finish reading u_prev before writing out
    au = matrix @ u
    np.multiply(inv_mass, au, out=au)
    np.subtract(g, au, out=au)
    au *= dt2
    au += 2.0 * u
    au -= u_prev
    out[:] = au


def csr_matvec(matrix, x, out):
    out[:] = matrix @ x
