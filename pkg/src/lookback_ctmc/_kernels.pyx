# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: banded Poisson (uniformization) series and the
Crank-Nicolson sweep for the floating-strike lookback put PDE."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline void _band_step(const double* p, const long* offs, Py_ssize_t nb, Py_ssize_t n,
                            Py_ssize_t lo, Py_ssize_t hi, const double* u, double* nxt,
                            double* out, double w) noexcept nogil:
    """nxt = P u and out += w * nxt, one band at a time."""
    cdef Py_ssize_t i, b, j
    cdef long o
    cdef const double* pb
    for i in range(n):
        nxt[i] = 0.0
    for b in range(nb):
        o = offs[b]
        pb = p + b * n
        i = -o if o < 0 else 0
        j = n - o if o > 0 else n
        for i in range(i, j):
            nxt[i] += pb[i] * u[i + o]
    for i in range(n):
        out[i] += w * nxt[i]


def poisson_series_banded(const double[:, ::1] pbands, const long[::1] offsets, const double[::1] v,
                          double a, long n_terms):
    """sum_{k=0}^{n_terms} exp(-a) a^k / k! P^k v for a banded matrix P.

    ``pbands[b, i] = P[i, i + offsets[b]]``; entries whose column falls
    outside the matrix are ignored.
    """
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t nb = offsets.shape[0]
    cdef Py_ssize_t i
    cdef long k
    cdef double w
    out_arr = np.empty(n, dtype=np.float64)
    buf_arr = np.empty((2, n), dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[:, ::1] buf = buf_arr
    cdef double* u = &buf[0, 0]
    cdef double* nxt = &buf[1, 0]
    cdef double* tmp
    if n == 0:
        return out_arr

    with nogil:
        w = exp(-a)
        for i in range(n):
            u[i] = v[i]
            out[i] = w * v[i]
        for k in range(1, n_terms + 1):
            w *= a / k
            _band_step(&pbands[0, 0], &offsets[0], nb, n, 0, n, u, nxt, &out[0], w)
            tmp = u
            u = nxt
            nxt = tmp
    return out_arr


def fd_floating_put_sweep(const double[::1] mu, const double[::1] sig2, double r, double dx,
                          double dt, long n_t, double tau):
    """Backward Crank-Nicolson sweep on the (x, M) lattice.

    Returns ``u`` with ``u[j, i]`` the value at x = i dx, M = j dx (i <= j)
    at time-to-maturity ``tau``.
    """
    cdef Py_ssize_t nx = mu.shape[0] - 1
    cdef Py_ssize_t i, j, k, m
    cdef double disc, diag_val

    u_arr = np.zeros((nx + 1, nx + 1), dtype=np.float64)
    cdef double[:, ::1] u = u_arr
    ca_arr = np.zeros(nx + 1)
    cb_arr = np.zeros(nx + 1)
    cc_arr = np.zeros(nx + 1)
    cp_arr = np.zeros(nx + 1)
    den_arr = np.ones(nx + 1)
    rhs_arr = np.zeros(nx + 1)
    cdef double[::1] ca = ca_arr, cb = cb_arr, cc = cc_arr
    cdef double[::1] cp = cp_arr, den = den_arr, rhs = rhs_arr

    for i in range(1, nx):
        ca[i] = 0.5 * sig2[i] / (dx * dx) - mu[i] / (2.0 * dx)
        cb[i] = -sig2[i] / (dx * dx) - r
        cc[i] = 0.5 * sig2[i] / (dx * dx) + mu[i] / (2.0 * dx)
    # LU of the full tridiagonal (I/dt - L/2); leading blocks share it
    den[1] = 1.0 / dt - 0.5 * cb[1]
    cp[1] = -0.5 * cc[1] / den[1]
    for i in range(2, nx):
        den[i] = (1.0 / dt - 0.5 * cb[i]) - (-0.5 * ca[i]) * cp[i - 1]
        cp[i] = -0.5 * cc[i] / den[i]

    with nogil:
        for j in range(nx + 1):
            for i in range(j + 1):
                u[j, i] = (j - i) * dx
        for k in range(n_t - 1, -1, -1):
            disc = exp(-r * (tau - k * dt))
            for i in range(nx + 1):
                u[nx, i] = (nx - i) * dx
            for j in range(nx - 1, 0, -1):
                if j == nx - 1:
                    diag_val = dx
                else:
                    diag_val = (4.0 * u[j + 1, j] - u[j + 2, j]) / 3.0
                # right-hand side from the old plane j (interior i = 1..j-1)
                for i in range(1, j):
                    rhs[i] = u[j, i] / dt + 0.5 * (ca[i] * u[j, i - 1] + cb[i] * u[j, i]
                                                   + cc[i] * u[j, i + 1])
                u[j, 0] = disc * j * dx
                u[j, j] = diag_val
                if j >= 2:
                    rhs[1] += 0.5 * ca[1] * u[j, 0]
                    rhs[j - 1] += 0.5 * cc[j - 1] * u[j, j]
                    # forward substitution then back substitution
                    rhs[1] = rhs[1] / den[1]
                    for i in range(2, j):
                        rhs[i] = (rhs[i] + 0.5 * ca[i] * rhs[i - 1]) / den[i]
                    u[j, j - 1] = rhs[j - 1]
                    for m in range(j - 2, 0, -1):
                        u[j, m] = rhs[m] - cp[m] * u[j, m + 1]
            u[0, 0] = 0.0
    return u_arr
