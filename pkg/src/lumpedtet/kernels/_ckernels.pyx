# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops of explicit time stepping (CSR rows, fused updates)."""

cimport openmp
from cython.parallel cimport prange


def set_num_threads(int n):
    if n > 0:
        openmp.omp_set_num_threads(n)


def get_max_threads():
    return openmp.omp_get_max_threads()


def apply_operator(const long long[::1] indptr, const int[::1] indices,
                   const double[::1] data, const double[::1] inv_mass,
                   const double[::1] x, const double[::1] g, double[::1] out):
    """out = g - inv_mass * (A @ x)"""
    cdef Py_ssize_t n = inv_mass.shape[0]
    cdef Py_ssize_t i
    cdef long long jj
    cdef double acc
    for i in prange(n, nogil=True, schedule="static"):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc = acc + data[jj] * x[indices[jj]]
        out[i] = g[i] - inv_mass[i] * acc


def leapfrog_update(const long long[::1] indptr, const int[::1] indices,
                    const double[::1] data, const double[::1] inv_mass,
                    const double[::1] u_prev, const double[::1] u,
                    const double[::1] g, double dt2, double[::1] out):
    """out = 2 u - u_prev + dt2 * (g - inv_mass * (A @ u))"""
    cdef Py_ssize_t n = inv_mass.shape[0]
    cdef Py_ssize_t i
    cdef long long jj
    cdef double acc
    for i in prange(n, nogil=True, schedule="static"):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc = acc + data[jj] * u[indices[jj]]
        out[i] = 2.0 * u[i] - u_prev[i] + dt2 * (g[i] - inv_mass[i] * acc)


def csr_matvec(const long long[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    cdef Py_ssize_t n = out.shape[0]
    cdef Py_ssize_t i
    cdef long long jj
    cdef double acc
    for i in prange(n, nogil=True, schedule="static"):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc = acc + data[jj] * x[indices[jj]]
        out[i] = acc
