"""CTMC generators approximating the price models, and barrier restrictions.

States are ordered ``index = i * R + e`` for grid point ``i`` and regime
``e`` (``R = 1`` without regimes).  The local (diffusion and regime) part is
stored as row-aligned bands, ``bands[b, k] = G[k, k + offsets[b]]``; jumps
of Levy models are a dense matrix added on top.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .grid import Grid
from .model import (
    CGMY,
    Kou,
    ModelError,
    ModelSpec,
    RegimeSwitchingBS,
    characteristics,
    is_levy,
)


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Generator:
    """Transition-rate matrix of a CTMC on ``grid`` (possibly restricted).

    ``start``/``stop`` delimit the grid indices kept by a restriction; a full
    generator keeps the whole grid.
    """

    grid: Grid
    offsets: np.ndarray
    bands: np.ndarray
    jumps: Optional[np.ndarray] = None
    regime_count: int = 1
    start: int = 0
    stop: Optional[int] = None
    log_space: bool = False

    def __post_init__(self):
        if self.stop is None:
            object.__setattr__(self, "stop", len(self.grid))
        object.__setattr__(self, "offsets", np.asarray(self.offsets, dtype=np.int64))
        for arr in (self.offsets, self.bands, self.jumps):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        return (self.stop - self.start) * self.regime_count

    @property
    def states(self) -> np.ndarray:
        return self.grid.points[self.start : self.stop]

    @property
    def is_restricted(self) -> bool:
        return self.start > 0 or self.stop < len(self.grid)

    def state_index(self, x: float, regime: int = 0) -> int:
        """Position of grid state ``x`` (and ``regime``) in this matrix."""
        i = self.grid.index(x)
        if not self.start <= i < self.stop:
            raise GeneratorError(f"state {x!r} is not kept by this restriction")
        if not 0 <= regime < self.regime_count:
            raise GeneratorError(f"regime {regime} out of range")
        return (i - self.start) * self.regime_count + regime

    def diagonal(self) -> np.ndarray:
        diag = self.bands[int(np.flatnonzero(self.offsets == 0)[0])].copy()
        if self.jumps is not None:
            diag += np.diag(self.jumps)
        return diag

    def to_dense(self) -> np.ndarray:
        n = self.dimension
        out = np.zeros((n, n)) if self.jumps is None else np.array(self.jumps, dtype=float)
        rows = np.arange(n)
        for band, o in zip(self.bands, self.offsets):
            ok = (rows + o >= 0) & (rows + o < n)
            out[rows[ok], rows[ok] + o] += band[ok]
        return out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        n = self.dimension
        out = np.zeros(n) if self.jumps is None else self.jumps @ v
        for band, o in zip(self.bands, self.offsets):
            lo, hi = max(0, -o), min(n, n - o)
            out[lo:hi] += band[lo:hi] * v[lo + o : hi + o]
        return out

    def row_sums(self) -> np.ndarray:
        return self.matvec(np.ones(self.dimension))


class SubGenerator(Generator):
    """Generator restricted to the states on one side of a barrier (killing outside)."""


def diffusion_rates(points: np.ndarray, mu: np.ndarray, sig2: np.ndarray):
    """Left and right jump rates of the three-point birth-death stencil.

    Matches drift ``mu`` and squared diffusion ``sig2`` on a non-uniform grid;
    rows whose central rates would be negative switch to upwinding.  The
    outer rows reflect: the mirrored ghost rate is redirected inward.
    """
    h = np.diff(points)
    hm = np.concatenate(([h[0]], h))
    hp = np.concatenate((h, [h[-1]]))
    span = hm + hp
    left = (sig2 - mu * hp) / (hm * span)
    right = (sig2 + mu * hm) / (hp * span)
    bad = (left < 0) | (right < 0)
    if np.any(bad):
        left = np.where(bad, sig2 / (hm * span) + np.maximum(-mu, 0.0) / hm, left)
        right = np.where(bad, sig2 / (hp * span) + np.maximum(mu, 0.0) / hp, right)
    right[0] += left[0]
    left[0] = 0.0
    left[-1] += right[-1]
    right[-1] = 0.0
    return left, right


def jump_rates(points: np.ndarray, upper_tail, lower_tail) -> np.ndarray:
    """Dense matrix of jump rates between log-price cells.

    Cell ``j`` spans the midpoints around ``points[j]`` (outer cells extend to
    infinity, so no mass leaves the grid).  ``upper_tail(a)`` and
    ``lower_tail(a)`` give the intensity of jumps above ``a`` and below
    ``-a``.  Jumps that stay in the own cell are dropped.  The diagonal holds
    minus the row sum.
    """
    n = points.size
    mids = 0.5 * (points[1:] + points[:-1])
    edges = np.concatenate(([-np.inf], mids, [np.inf]))
    dist = edges[None, :] - points[:, None]
    up = np.zeros_like(dist)
    pos = dist > 0
    with np.errstate(over="ignore", invalid="ignore"):
        up[pos] = upper_tail(dist[pos])
    down = np.zeros_like(dist)
    neg = dist < 0
    with np.errstate(over="ignore", invalid="ignore"):
        down[neg] = lower_tail(-dist[neg])
    rates = np.zeros((n, n))
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    lower = np.tril(np.ones((n, n), dtype=bool), -1)
    rates[upper] = (up[:, :-1] - up[:, 1:])[upper]
    rates[lower] = (down[:, 1:] - down[:, :-1])[lower]
    np.maximum(rates, 0.0, out=rates)
    rates[np.diag_indices(n)] = -rates.sum(axis=1)
    return rates


def jump_moment_excess(points: np.ndarray, rates: np.ndarray, upper_moment, lower_moment):
    """Per-row excess of the chain's jump moments over the Levy measure.

    Over every destination cell except the two unbounded outer ones, returns
    ``sum_j rate_ij d_ij**p - integral of z**p over the cell`` for ``p = 1, 2``
    with ``d_ij = x_j - x_i``.  ``upper_moment(a, p)`` and
    ``lower_moment(a, p)`` integrate ``|z|**p`` over ``z > a`` and ``z < -a``.
    """
    n = points.size
    mids = 0.5 * (points[1:] + points[:-1])
    lo = np.concatenate(([-np.inf], mids))[None, :] - points[:, None]
    hi = np.concatenate((mids, [np.inf]))[None, :] - points[:, None]
    inner = np.ones((n, n), dtype=bool)
    inner[:, [0, -1]] = False
    np.fill_diagonal(inner, False)
    pos = inner & (lo > 0)
    neg = inner & (hi < 0)
    dist = points[None, :] - points[:, None]
    out = []
    for p in (1, 2):
        exact = np.zeros((n, n))
        exact[pos] = upper_moment(lo[pos], p) - upper_moment(hi[pos], p)
        exact[neg] = (-1.0) ** p * (lower_moment(-hi[neg], p) - lower_moment(-lo[neg], p))
        chain = np.where(inner, rates * dist**p, 0.0)
        out.append(chain.sum(axis=1) - exact.sum(axis=1))
    return out[0], out[1]


def _half_cells(points: np.ndarray):
    h = np.diff(points)
    hm = np.concatenate(([h[0]], h))
    hp = np.concatenate((h, [h[-1]]))
    return 0.5 * hm, 0.5 * hp


def _assemble(grid, offsets, left, right, extra_diag=0.0, jumps=None, regimes=1, log_space=False,
              coupling=None):
    """Pack per-state rates into row-aligned bands."""
    n = len(grid) * regimes
    bands = np.zeros((offsets.size, n))
    pos = {int(o): b for b, o in enumerate(offsets)}
    bands[pos[-regimes]] = left
    bands[pos[regimes]] = right
    out_rate = left + right
    if coupling is not None:
        for o, rates in coupling.items():
            bands[pos[o]] = rates
            out_rate = out_rate + rates
    bands[pos[0]] = -out_rate + extra_diag
    return Generator(grid, offsets, bands, jumps, regimes, log_space=log_space)


CGMY_SMALL_JUMPS = ("matched", "folded")


def build_generator(model: ModelSpec, grid: Grid, log_space: Optional[bool] = None,
                    cgmy_eps_fraction: float = 1.0, cgmy_small_jumps: str = "matched") -> Generator:
    """CTMC generator approximating ``model`` on ``grid``.

    Levy models live in log-price; Black-Scholes may be put there too with
    ``log_space=True``.  For CGMY, jumps inside the own cell are dropped and
    the drift is corrected so the chain's mean displacement matches the
    Levy measure on the inner cells.  With ``cgmy_small_jumps="folded"`` the
    variance of the dropped jumps becomes a diffusion coefficient;
    ``"matched"`` subtracts from it the second moment that the discretized
    jumps already carry in excess, clipping at zero.  ``cgmy_eps_fraction``
    (in (0, 1]) scales the truncation width relative to the half cell.
    """
    if isinstance(model, RegimeSwitchingBS):
        if log_space:
            raise ModelError("regime-switching models are built in price space")
        return build_rs_generator(model, grid)
    if log_space is None:
        log_space = is_levy(model)
    if is_levy(model) and not log_space:
        raise ModelError(f"{type(model).__name__} must be built in log-price space")
    if not 0.0 < cgmy_eps_fraction <= 1.0:
        raise GeneratorError("cgmy_eps_fraction must lie in (0, 1]")
    if cgmy_small_jumps not in CGMY_SMALL_JUMPS:
        raise GeneratorError(f"cgmy_small_jumps must be one of {CGMY_SMALL_JUMPS}")

    ch = characteristics(model, log_space=log_space)
    x = grid.points
    mu = np.asarray(ch.mu(x), dtype=float)
    sig2 = np.asarray(ch.sig2(x), dtype=float)
    jumps = None
    if isinstance(model, Kou):
        jumps = jump_rates(x, model.upper_tail, model.lower_tail)
    elif isinstance(model, CGMY):
        eps_down, eps_up = _half_cells(x)
        jumps = jump_rates(x, model.upper_tail, model.lower_tail)
        excess1, excess2 = jump_moment_excess(x, jumps, model.upper_tail_moment,
                                              model.lower_tail_moment)
        small = model.small_jump_variance(cgmy_eps_fraction * eps_down, cgmy_eps_fraction * eps_up)
        if cgmy_small_jumps == "matched":
            small = np.maximum(small - excess2, 0.0)
        sig2 = sig2 + small
        mu = mu - model.large_jump_mean(eps_down, eps_up) - excess1
    left, right = diffusion_rates(x, mu, sig2)
    offsets = np.array([-1, 0, 1], dtype=np.int64)
    return _assemble(grid, offsets, left, right, jumps=jumps, log_space=log_space)


def build_rs_generator(model: RegimeSwitchingBS, grid: Grid) -> Generator:
    """Block generator on (price state, regime) pairs.

    Each regime carries its own birth-death diffusion; regime changes keep
    the price state and happen at the rates of ``model.q``.
    """
    if not isinstance(model, RegimeSwitchingBS):
        raise ModelError("build_rs_generator needs a regime-switching model")
    R = model.regime_count
    n = len(grid)
    q = model.rate_matrix
    left = np.zeros(n * R)
    right = np.zeros(n * R)
    for e in range(R):
        ch = characteristics(model, regime=e)
        le, ri = diffusion_rates(grid.points, ch.mu(grid.points), ch.sig2(grid.points))
        left[e::R] = le
        right[e::R] = ri
    offsets = np.arange(-R, R + 1, dtype=np.int64)
    coupling = {}
    regime_of_row = np.tile(np.arange(R), n)
    for o in range(-(R - 1), R):
        if o == 0:
            continue
        target = regime_of_row + o
        ok = (target >= 0) & (target < R)
        rates = np.zeros(n * R)
        rates[ok] = q[regime_of_row[ok], target[ok]]
        coupling[o] = rates
    return _assemble(grid, offsets, left, right, regimes=R, coupling=coupling)


def restrict(gen: Generator, lo: int, hi: int) -> SubGenerator:
    """Keep grid indices ``lo <= i < hi`` (absolute grid indices)."""
    lo = max(lo, gen.start)
    hi = min(hi, gen.stop)
    if hi <= lo:
        raise GeneratorError("restriction keeps no states")
    R = gen.regime_count
    a, b = (lo - gen.start) * R, (hi - gen.start) * R
    bands = np.array(gen.bands[:, a:b])
    rows = np.arange(b - a)
    for k, o in enumerate(gen.offsets):
        bands[k, (rows + o < 0) | (rows + o >= b - a)] = 0.0
    jumps = None if gen.jumps is None else np.array(gen.jumps[a:b, a:b])
    return SubGenerator(gen.grid, gen.offsets, bands, jumps, R, lo, hi, gen.log_space)


def restrict_below(gen: Generator, y: float) -> SubGenerator:
    """Keep the states ``<= y`` (all regimes)."""
    hi = int(np.searchsorted(gen.grid.points, y, side="right"))
    if hi <= gen.start:
        raise GeneratorError(f"no state at or below {y!r}")
    return restrict(gen, gen.start, hi)


def restrict_above(gen: Generator, y: float) -> SubGenerator:
    """Keep the states ``>= y`` (all regimes)."""
    lo = int(np.searchsorted(gen.grid.points, y, side="left"))
    if lo >= gen.stop:
        raise GeneratorError(f"no state at or above {y!r}")
    return restrict(gen, lo, gen.stop)


def hitting_prob_lower(gen: Generator, lower: float, upper: float, x: float, regime: int = 0) -> float:
    """Probability that the chain started at ``x`` reaches ``<= lower`` before ``>= upper``."""
    i_lo, i_up, i_x = gen.grid.index(lower), gen.grid.index(upper), gen.grid.index(x)
    if not i_lo <= i_x <= i_up or i_lo >= i_up:
        raise GeneratorError("need lower <= x <= upper on the grid")
    if i_x == i_lo:
        return 1.0
    if i_x == i_up:
        return 0.0
    R = gen.regime_count
    if gen.is_restricted:
        raise GeneratorError("hitting probabilities need the full generator")
    inner = restrict(gen, i_lo + 1, i_up)
    m = inner.dimension
    # source term: rates from interior states into states <= lower
    if gen.jumps is None:
        k = np.arange(m)
        rhs = np.zeros(m)
        first = (i_lo + 1) * R
        for band, o in zip(gen.bands, gen.offsets):
            rows = first + k
            tgt = rows + o
            hit = (tgt >= 0) & (tgt < first)
            rhs[hit] -= band[rows[hit]]
        ab = np.zeros((2 * R + 1, m))
        for band, o in zip(inner.bands, inner.offsets):
            # solve_banded layout: ab[u + i - j, j] = A[i, j], with j = i + o
            rows = k[(k + o >= 0) & (k + o < m)]
            ab[R - o, rows + o] = band[rows]
        h = solve_banded((R, R), ab, rhs, check_finite=False)
    else:
        dense = gen.to_dense()
        idx = np.arange((i_lo + 1) * R, i_up * R)
        below = np.arange(0, (i_lo + 1) * R)
        rhs = -dense[np.ix_(idx, below)].sum(axis=1)
        h = np.linalg.solve(dense[np.ix_(idx, idx)], rhs)
    h = np.clip(h, 0.0, 1.0)
    return float(h[(i_x - i_lo - 1) * R + regime])


def check_generator(gen: Generator, tol: float = 1e-12):
    """Raise if off-diagonal rates are negative or rows sum above zero."""
    dense = gen.to_dense()
    off = dense - np.diag(np.diag(dense))
    if np.any(off < 0):
        raise GeneratorError("negative off-diagonal rate")
    scale = np.maximum(1.0, np.abs(np.diag(dense)))
    if np.any(dense.sum(axis=1) > tol * scale):
        raise GeneratorError("positive row sum")


__all__ = [
    "Generator",
    "GeneratorError",
    "SubGenerator",
    "build_generator",
    "build_rs_generator",
    "check_generator",
    "diffusion_rates",
    "hitting_prob_lower",
    "jump_moment_excess",
    "jump_rates",
    "restrict",
    "restrict_above",
    "restrict_below",
]
