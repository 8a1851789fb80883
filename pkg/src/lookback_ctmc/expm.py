"""Action of a (sub)generator exponential on a vector, exp(G t) v."""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from scipy import special

from .ctmc import Generator
from .kernels import poisson_series_banded

METHODS = ("uniformization", "scaling_squaring")
# Poisson means above this are split into chunks so exp(-a) stays representable
MAX_CHUNK_RATE = 500.0


class ExpmError(ValueError):
    pass


def _as_parts(matrix):
    """(dense matrix or None, Generator or None, diagonal)."""
    if isinstance(matrix, Generator):
        return None, matrix, matrix.diagonal()
    dense = np.asarray(matrix, dtype=float)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise ExpmError("matrix must be square")
    return dense, None, np.diag(dense).copy()


def _check_subgenerator(dense, gen, diag, tol=1e-10):
    if gen is not None:
        sums = gen.row_sums()
        off_ok = np.all(gen.bands[gen.offsets != 0] >= 0)
        if gen.jumps is not None:
            off = gen.jumps - np.diag(np.diag(gen.jumps))
            off_ok = off_ok and np.all(off >= 0)
    else:
        sums = dense.sum(axis=1)
        off = dense - np.diag(diag)
        off_ok = np.all(off >= 0)
    if not off_ok:
        raise ExpmError("not a sub-generator: negative off-diagonal rate")
    scale = np.maximum(1.0, np.abs(diag))
    if np.any(sums > tol * scale):
        raise ExpmError("not a sub-generator: positive row sum")


def poisson_terms(a: float, tol: float, vmax: float) -> int:
    """Smallest K with P(N > K) * vmax < tol for N ~ Poisson(a)."""
    if vmax == 0.0 or a == 0.0:
        return 0
    target = tol / vmax
    k = int(a)
    step = max(1, int(math.sqrt(a)))
    while special.pdtrc(k, a) >= target:
        k += step
    lo = max(0, k - step)
    # bisect back to the first admissible count
    while lo < k:
        mid = (lo + k) // 2
        if special.pdtrc(mid, a) < target:
            k = mid
        else:
            lo = mid + 1
    return k


def _uniformized_dense(P, v, a, n_terms):
    w = math.exp(-a)
    out = w * v
    u = v
    for k in range(1, n_terms + 1):
        u = P @ u
        w *= a / k
        out = out + w * u
    return out


def expm_action(matrix, t: float, v, method: str = "uniformization", tol: float = 1e-12,
                check: bool = True) -> np.ndarray:
    """Return exp(G t) v.

    ``matrix`` is a :class:`Generator` (banded with optional dense jumps) or a
    dense array.  ``uniformization`` sums the Poisson series in
    ``P = I + G / Lambda`` with ``Lambda = max |G_ii|`` until the remaining
    Poisson mass times ``max |v|`` is below ``tol``; long horizons are split
    into chunks with the tolerance shared among them.  ``scaling_squaring``
    forms the dense exponential.
    """
    if method not in METHODS:
        raise ExpmError(f"unknown method {method!r}")
    t = float(t)
    if not t >= 0.0:
        raise ExpmError("t must be nonnegative")
    if not tol > 0.0:
        raise ExpmError("tol must be positive")
    dense, gen, diag = _as_parts(matrix)
    v = np.array(v, dtype=float)
    n = diag.size
    if v.shape != (n,):
        raise ExpmError(f"vector has shape {v.shape}, expected ({n},)")
    if check:
        _check_subgenerator(dense, gen, diag)
    if t == 0.0 or n == 0:
        return v

    if method == "scaling_squaring":
        full = dense if dense is not None else gen.to_dense()
        return scipy.linalg.expm(full * t) @ v

    lam = float(np.max(np.abs(diag)))
    if lam == 0.0:
        return v
    total = lam * t
    chunks = max(1, math.ceil(total / MAX_CHUNK_RATE))
    a = total / chunks
    cap = int(a + 40.0 * math.sqrt(a) + 50.0)

    banded = gen is not None and gen.jumps is None
    if banded:
        pbands = np.ascontiguousarray(gen.bands / lam)
        pbands[int(np.flatnonzero(gen.offsets == 0)[0])] += 1.0
        offsets = np.ascontiguousarray(gen.offsets, dtype=np.int64)
    else:
        P = (dense if dense is not None else gen.to_dense()) / lam
        P[np.diag_indices(n)] += 1.0

    out = v
    for _ in range(chunks):
        vmax = float(np.max(np.abs(out)))
        # half the budget for truncation leaves room for rounding
        terms = poisson_terms(a, 0.5 * tol / chunks, vmax)
        if terms > cap:
            raise ExpmError(f"tolerance {tol} unreachable within {cap} terms")
        if banded:
            out = poisson_series_banded(pbands, offsets, np.ascontiguousarray(out), a, terms)
        else:
            out = _uniformized_dense(P, out, a, terms)
    return out
