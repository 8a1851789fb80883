"""NumPy fallback for the compiled kernels in ``_kernels.pyx``.

Signatures and results match the compiled versions; only speed differs.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def poisson_series_banded(pbands, offsets, v, a, n_terms):
    """sum_{k=0}^{n_terms} exp(-a) a^k / k! P^k v for a banded matrix P.

    ``pbands[b, i] = P[i, i + offsets[b]]``; entries whose column falls
    outside the matrix are ignored.
    """
    pbands = np.asarray(pbands, dtype=float)
    u = np.array(v, dtype=float)
    n = u.size
    slices = []
    for b, o in enumerate(np.asarray(offsets, dtype=np.int64)):
        lo, hi = max(0, -o), min(n, n - o)
        slices.append((pbands[b, lo:hi], lo, hi, o))
    w = np.exp(-a)
    out = w * u
    for k in range(1, int(n_terms) + 1):
        nxt = np.zeros(n)
        for band, lo, hi, o in slices:
            nxt[lo:hi] += band * u[lo + o : hi + o]
        w *= a / k
        out += w * nxt
        u = nxt
    return out


def fd_floating_put_sweep(mu, sig2, r, dx, dt, n_t, tau):
    """Backward Crank-Nicolson sweep on the (x, M) lattice.

    Returns ``u`` with ``u[j, i]`` the value at x = i dx, M = j dx (i <= j)
    at time-to-maturity ``tau``.
    """
    mu = np.asarray(mu, dtype=float)
    sig2 = np.asarray(sig2, dtype=float)
    nx = mu.size - 1
    ca = np.zeros(nx + 1)
    cb = np.zeros(nx + 1)
    cc = np.zeros(nx + 1)
    ca[1:nx] = 0.5 * sig2[1:nx] / dx**2 - mu[1:nx] / (2 * dx)
    cb[1:nx] = -sig2[1:nx] / dx**2 - r
    cc[1:nx] = 0.5 * sig2[1:nx] / dx**2 + mu[1:nx] / (2 * dx)

    idx = np.arange(nx + 1)
    u = np.where(idx[None, :] <= idx[:, None], (idx[:, None] - idx[None, :]) * dx, 0.0)
    top = (nx - idx) * dx
    for k in range(n_t - 1, -1, -1):
        disc = np.exp(-r * (tau - k * dt))
        u[nx, :] = top
        for j in range(nx - 1, 0, -1):
            diag_val = dx if j == nx - 1 else (4.0 * u[j + 1, j] - u[j + 2, j]) / 3.0
            row = u[j]
            i = np.arange(1, j)
            rhs = row[1:j] / dt + 0.5 * (ca[i] * row[0 : j - 1] + cb[i] * row[1:j] + cc[i] * row[2 : j + 1])
            row[0] = disc * j * dx
            row[j] = diag_val
            if j >= 2:
                rhs[0] += 0.5 * ca[1] * row[0]
                rhs[-1] += 0.5 * cc[j - 1] * row[j]
                ab = np.zeros((3, j - 1))
                ab[0, 1:] = -0.5 * cc[1 : j - 1]
                ab[1, :] = 1.0 / dt - 0.5 * cb[1:j]
                ab[2, :-1] = -0.5 * ca[2:j]
                row[1:j] = solve_banded((1, 1), ab, rhs, check_finite=False)
        u[0, 0] = 0.0
    return u
