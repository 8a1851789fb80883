"""Lookback option prices from quadrature over CTMC first-passage probabilities.

For the maximum-based kinds the price is an integral over barrier levels
``y`` of ``P_x(M_tau < y)``; for the minimum-based kinds of
``P_x(m_tau > y)``.  Each quadrature node ``y_i`` is placed on the CTMC grid
and its probability is a barrier-survival probability of the chain:
survival below the left neighbour ``y_i^-`` (maximum) or above the right
neighbour ``y_i^+`` (minimum).
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from . import fpp
from .ctmc import Generator, build_generator
from .grid import Grid, build_aligned_grid, left_neighbor, right_neighbor
from .model import CEV, BlackScholes, ModelError, ModelSpec, RegimeSwitchingBS, effective_vol, is_levy
from .oracle import bs_max_exceedance
from .quad import QuadratureRule, make_rule, parse_rule_name

KINDS = ("floating_put", "floating_call", "fixed_put", "fixed_call")
MAX_KINDS = ("floating_put", "fixed_call")
MIN_KINDS = ("floating_call", "fixed_put")
SPACES = ("auto", "price", "log")


class PricingError(ValueError):
    pass


@dataclass(frozen=True)
class LookbackContract:
    """A seasoned, continuously monitored lookback option valued at time ``t``.

    ``M`` is the running maximum so far (maximum-based kinds), ``m`` the
    running minimum (minimum-based kinds) and ``K`` the strike of the fixed
    kinds.
    """

    kind: str
    x: float
    T: float
    t: float = 0.0
    M: Optional[float] = None
    m: Optional[float] = None
    K: Optional[float] = None
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PricingError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 <= self.t <= self.T:
            raise PricingError("need 0 <= t <= T")
        if not self.x > 0:
            raise PricingError("spot x must be positive")
        if self.kind in MAX_KINDS:
            if self.M is None or not self.M >= self.x:
                raise PricingError("maximum-based kinds need M >= x")
        else:
            if self.m is None or not 0 < self.m <= self.x:
                raise PricingError("minimum-based kinds need 0 < m <= x")
        if self.kind.startswith("fixed"):
            if self.K is None or not self.K > 0:
                raise PricingError("fixed-strike kinds need K > 0")

    @property
    def tau(self) -> float:
        return self.T - self.t

    def intrinsic(self) -> float:
        """Payoff if the option expired now."""
        if self.kind == "floating_put":
            return self.M - self.x
        if self.kind == "floating_call":
            return self.x - self.m
        if self.kind == "fixed_put":
            return max(self.K - self.m, 0.0)
        return max(self.M - self.K, 0.0)


@dataclass(frozen=True)
class PricingConfig:
    """Numerical settings.

    ``quad`` names the rule by its point count ("gauss-11", "trap-11",
    "simpson-21", "rect-10", "rect_right-10"); ``rule`` overrides it with an
    explicit rule.  ``lower``/``upper`` override the grid bounds (price
    units), ``grid`` the whole grid, and ``extra_nodes`` adds aligned grid
    points.  ``space`` selects price or log-price states ("auto" uses log
    for Levy models).
    """

    n: int = 400
    quad: str = "gauss-11"
    A: Optional[float] = None
    tol: float = 1e-12
    fast_path: bool = False
    space: str = "auto"
    regime: int = 0
    threads: int = 1
    floor: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    rule: Optional[QuadratureRule] = None
    grid: Optional[Grid] = None
    extra_nodes: tuple = ()
    tail_target: float = 1e-10
    expm_method: str = "uniformization"
    cgmy_eps_fraction: float = 1.0
    cgmy_small_jumps: str = "matched"

    def __post_init__(self):
        if self.space not in SPACES:
            raise PricingError(f"space must be one of {SPACES}")
        if self.threads < 1:
            raise PricingError("threads must be at least 1")
        if not self.tol > 0:
            raise PricingError("tol must be positive")
        points = self.rule.size if self.rule is not None else _rule_points(self.quad)
        if self.grid is None and self.n < points + 2:
            raise PricingError(f"n={self.n} too small for {points} quadrature points")


def _rule_points(name: str) -> int:
    kind, n = _parse_quad(name)
    return n if kind in ("gauss_legendre", "rectangle", "rectangle_right") else n + 1


def _parse_quad(name: str):
    head = name.strip().lower()
    if head.startswith("rect_right-") or head.startswith("rectangle_right-"):
        return "rectangle_right", int(head.rsplit("-", 1)[1])
    if head.startswith("rect-") or head.startswith("rectangle-"):
        return "rectangle", int(head.rsplit("-", 1)[1])
    return parse_rule_name(name)


def make_config_rule(config: PricingConfig, a: float, b: float) -> QuadratureRule:
    if config.rule is not None:
        return config.rule
    kind, n = _parse_quad(config.quad)
    if kind == "rectangle_right":
        return make_rule("rectangle", n, a, b, right=True)
    return make_rule(kind, n, a, b)


@dataclass
class PriceResult:
    price: float
    fpp_values: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    expm_calls: int
    grid_size: int
    wall_time: float
    A: Optional[float] = None
    floor: Optional[float] = None
    method: str = "generic"
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# domains


def _use_log(model: ModelSpec, config: PricingConfig) -> bool:
    if config.space == "log":
        if not (is_levy(model) or isinstance(model, BlackScholes)):
            raise ModelError(f"{type(model).__name__} has no log-price representation")
        return True
    if config.space == "price":
        if is_levy(model):
            raise ModelError(f"{type(model).__name__} is built in log-price space only")
        return False
    return is_levy(model)


def _log_spread(contract, model) -> float:
    """A wide log-price half-width: eight effective standard deviations plus carry."""
    tau = contract.tau
    return 8.0 * effective_vol(model, contract.x) * math.sqrt(tau) + abs(model.r - model.d) * tau


def _jump_tail(model, x: float, A: float, tau: float) -> float:
    """Single-large-jump estimate of the tail integral beyond ``A``.

    The maximum passes ``y`` at least as often as one jump alone covers the
    log distance from the spot, ``tau * nu((log(y / x), inf))``; the term is
    integrated over ``y >= A``.
    """
    f = lambda y: tau * float(model.upper_tail(math.log(y / x)))
    return integrate.quad(f, A, np.inf, epsabs=1e-16, limit=200)[0]


def default_truncation(contract: LookbackContract, model: ModelSpec, tail_target: float = 1e-10) -> float:
    """Truncation level ``A`` for the maximum-based kinds.

    ``A`` is the first level on a geometric ladder for which the discounted
    estimate of the integral of ``P(M_tau >= y)`` over ``[A, inf)`` is below
    ``tail_target``.  The estimate is the Black-Scholes value with the
    model's effective volatility; Levy models add a single-large-jump term
    so that heavy jump tails are not missed.
    """
    lo = contract.M if contract.kind == "floating_put" else max(contract.M, contract.K)
    tau = contract.tau
    if tau == 0.0:
        return 2.0 * lo
    sig = effective_vol(model, contract.x)
    proxy = BlackScholes(sig, model.r, model.d)
    disc = math.exp(-model.r * tau)
    drift = max(model.r - model.d, 0.0) * tau
    k = 1.0
    while True:
        A = lo * math.exp(k * sig * math.sqrt(tau) + drift)
        tail = integrate.quad(lambda y: bs_max_exceedance(proxy, contract.x, y, tau), A, np.inf,
                              epsabs=1e-16, limit=200)[0]
        if is_levy(model):
            tail += _jump_tail(model, contract.x, A, tau)
        if disc * tail < tail_target or k > 80:
            return A
        k += 0.25


def default_floor(contract: LookbackContract, model: ModelSpec, log_space: bool) -> float:
    """Lower end of the price domain."""
    if log_space:
        return contract.x * math.exp(-_log_spread(contract, model))
    if isinstance(model, CEV):
        return 0.0
    return contract.x * 1e-3


def _check_rates(contract, model):
    if abs(contract.r - model.r) > 1e-15 or abs(contract.d - model.d) > 1e-15:
        raise PricingError("contract and model rates (r, d) differ")


# ---------------------------------------------------------------------------
# survival probabilities at the quadrature nodes


def _node_survival(gen: Generator, start: float, barrier_node: float, up: bool, tau: float,
                   regime: int, tol: float, method: str):
    """Survival of the chain from ``start`` for the node at ``barrier_node``."""
    grid = gen.grid
    if up:
        if barrier_node <= grid.lower:
            return 0.0
        barrier = left_neighbor(grid, barrier_node)
        if not start <= barrier:
            return 0.0
        prof = fpp.survival_profile(gen, barrier, "up", tau, tol, method)
        sub_start = 0
    else:
        if barrier_node >= grid.upper:
            return 0.0
        barrier = right_neighbor(grid, barrier_node)
        if not start >= barrier:
            return 0.0
        prof = fpp.survival_profile(gen, barrier, "down", tau, tol, method)
        sub_start = grid.index(barrier)
    i = grid.index(start) - sub_start
    return float(prof[i * gen.regime_count + regime])


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _combine(contract, model, rule_weights, probs, A, floor):
    """Price from weighted survival probabilities, in a fixed summation order."""
    tau = contract.tau
    dr, dd = math.exp(-model.r * tau), math.exp(-model.d * tau)
    total = float(np.dot(rule_weights, probs))
    kind = contract.kind
    if kind == "floating_put":
        return dr * A - dd * contract.x - dr * total
    if kind == "fixed_call":
        return dr * A - dr * contract.K - dr * total
    if kind == "floating_call":
        return dd * contract.x - dr * (floor + total)
    return dr * contract.K - dr * (floor + total)


def _setup(contract, model, config):
    """Quadrature rule, truncation level and floor (price units)."""
    _check_rates(contract, model)
    if isinstance(model, RegimeSwitchingBS) and not 0 <= config.regime < model.regime_count:
        raise PricingError(f"regime {config.regime} out of range")
    log_space = _use_log(model, config)
    kind = contract.kind
    A = floor = None
    if kind in MAX_KINDS:
        a = contract.M if kind == "floating_put" else max(contract.M, contract.K)
        A = config.A if config.A is not None else default_truncation(contract, model, config.tail_target)
        if not A > a:
            raise PricingError(f"truncation level A={A} must exceed {a}")
        rule = make_config_rule(config, a, A)
    else:
        b = contract.m if kind == "floating_call" else min(contract.m, contract.K)
        floor = config.floor if config.floor is not None else default_floor(contract, model, log_space)
        if log_space and not floor > 0:
            raise PricingError("log-price domains need a positive floor")
        if not 0 <= floor < b:
            raise PricingError(f"floor {floor} must lie below {b}")
        rule = make_config_rule(config, floor, b)
    return rule, A, floor, log_space


def _grid_for(points_needed, lower, upper, n, extra=()):
    pts = np.unique(np.concatenate((np.asarray(points_needed, dtype=float), np.asarray(extra, dtype=float))))
    inner = pts[(pts > lower) & (pts < upper)]
    return build_aligned_grid(lower, upper, inner, n)


def price(contract: LookbackContract, model: ModelSpec, config: PricingConfig = PricingConfig()) -> PriceResult:
    """Price ``contract`` under ``model`` (one survival computation per node)."""
    if config.fast_path:
        return price_levy_fastpath(contract, model, config)
    t0 = time.perf_counter()
    rule, A, floor, log_space = _setup(contract, model, config)
    up = contract.kind in MAX_KINDS
    tau = contract.tau
    f = np.log if log_space else (lambda v: np.asarray(v, dtype=float))
    start = float(f(contract.x))
    nodes = np.array(f(rule.nodes), dtype=float)

    if config.grid is not None:
        grid = config.grid
    else:
        spread = _log_spread(contract, model)
        if up:
            lower = config.lower if config.lower is not None else (
                contract.x * math.exp(-spread) if log_space else default_floor(contract, model, False))
            upper = config.upper if config.upper is not None else A
        else:
            lower = config.lower if config.lower is not None else floor
            upper = config.upper if config.upper is not None else contract.x * math.exp(spread)
        lower, upper = float(f(lower)), float(f(upper))
        extra = f(np.asarray(config.extra_nodes, dtype=float)) if len(config.extra_nodes) else ()
        grid = _grid_for(np.append(nodes, start), lower, upper, config.n, extra)
    if not grid.contains(start):
        raise PricingError("the spot is not a grid point")

    gen = build_generator(model, grid, log_space=log_space, cgmy_eps_fraction=config.cgmy_eps_fraction,
                          cgmy_small_jumps=config.cgmy_small_jumps)

    def one(i):
        return _node_survival(gen, start, nodes[i], up, tau, config.regime, config.tol, config.expm_method)

    probs = np.array(_map(one, list(range(nodes.size)), config.threads))
    value = _combine(contract, model, rule.weights, probs, A, floor)
    calls = int(np.count_nonzero([_needs_expm(grid, start, y, up) for y in nodes]))
    return PriceResult(value, probs, rule.nodes, rule.weights, calls, len(grid),
                       time.perf_counter() - t0, A, floor, "generic",
                       {"log_space": log_space, "quad": rule.kind, "grid": grid})


def _needs_expm(grid, start, node, up):
    try:
        if up:
            return start <= left_neighbor(grid, node)
        return start >= right_neighbor(grid, node)
    except Exception:
        return False


def price_levy_fastpath(contract: LookbackContract, model: ModelSpec,
                        config: PricingConfig = PricingConfig()) -> PriceResult:
    """Levy-model price from a single survival profile.

    Spatial homogeneity gives ``P_x(M_tau < y) = P_{x/y}(M_tau < 1)``: one
    log-price grid holds every start ``ln(x / y_i)`` and the barrier ``0``,
    and one matrix exponential yields all node probabilities.  The
    minimum-based kinds use the mirrored statement with survival above 0.
    """
    t0 = time.perf_counter()
    if not (is_levy(model) or isinstance(model, BlackScholes)):
        raise ModelError("the fast path needs an exponential Levy model (or Black-Scholes)")
    cfg = config if config.space == "log" else _replace(config, space="log")
    rule, A, floor, _ = _setup(contract, model, cfg)
    up = contract.kind in MAX_KINDS
    starts = np.log(contract.x / rule.nodes)
    spread = _log_spread(contract, model)
    if cfg.grid is not None:
        grid = cfg.grid
    elif up:
        lower = cfg.lower if cfg.lower is not None else float(starts.min()) - spread
        grid = _grid_for(starts, lower, 0.0, cfg.n)
    else:
        upper = cfg.upper if cfg.upper is not None else float(starts.max()) + spread
        grid = _grid_for(starts, 0.0, upper, cfg.n)
    if not grid.contains(0.0):
        raise PricingError("the fast-path grid must contain the barrier level 0")

    gen = build_generator(model, grid, log_space=True, cgmy_eps_fraction=cfg.cgmy_eps_fraction,
                          cgmy_small_jumps=cfg.cgmy_small_jumps)
    if up:
        barrier = left_neighbor(grid, 0.0)
        prof = fpp.survival_profile(gen, barrier, "up", contract.tau, cfg.tol, cfg.expm_method)
        offset = 0
        alive = starts <= barrier
    else:
        barrier = right_neighbor(grid, 0.0)
        prof = fpp.survival_profile(gen, barrier, "down", contract.tau, cfg.tol, cfg.expm_method)
        offset = grid.index(barrier)
        alive = starts >= barrier
    probs = np.zeros(starts.size)
    for i, s in enumerate(starts):
        if alive[i]:
            probs[i] = prof[grid.index(s) - offset]
    value = _combine(contract, model, rule.weights, probs, A, floor)
    return PriceResult(value, probs, rule.nodes, rule.weights, 1, len(grid),
                       time.perf_counter() - t0, A, floor, "fast_path",
                       {"log_space": True, "quad": rule.kind, "grid": grid})


def _replace(config: PricingConfig, **changes) -> PricingConfig:
    from dataclasses import replace

    return replace(config, **changes)


# ---------------------------------------------------------------------------
# pricing directly under the chain on a uniform lattice


def uniform_lattice(contract: LookbackContract, A: float, n_q: int, lower: float,
                    log_space: bool = False) -> Grid:
    """Uniform grid with spacing ``h = (A - M) / n_q`` through ``M``, ``A`` and the spot.

    The lattice extends one step beyond ``A`` and down to ``lower``.
    """
    M, x = contract.M, contract.x
    if log_space:
        raise PricingError("the uniform lattice is built in price units")
    h = (A - M) / n_q
    j = (M - x) / h
    if abs(j - round(j)) > 1e-9:
        raise PricingError("the spot must lie on the lattice through M with spacing (A - M) / n_q")
    j = int(round(j))
    below = int(math.floor((M - lower) / h))
    idx = np.arange(-below, n_q + 2)
    pts = M + idx * h
    pts[below - j] = x
    return Grid(pts, M + np.arange(1, n_q + 1) * h)


def price_under_ctmc_direct(contract: LookbackContract, model: ModelSpec,
                            config: PricingConfig) -> PriceResult:
    """Floating-strike put priced as the chain's own truncated lookback.

    With running maximum confined to the lattice levels ``y_k = M + k h``,
    ``E[min(max(M, max_chain), A)]`` is computed from the distribution of the
    chain's running maximum; ``config.grid`` must be a uniform lattice
    through ``M`` and ``A`` with ``n_q = (A - M) / h`` steps between them.
    """
    t0 = time.perf_counter()
    if contract.kind != "floating_put":
        raise PricingError("the direct method is defined for the floating-strike put")
    if config.grid is None or config.A is None:
        raise PricingError("the direct method needs an explicit lattice and A")
    _check_rates(contract, model)
    grid, A, M = config.grid, config.A, contract.M
    pts = grid.points
    iM, iA = grid.index(M), grid.index(A)
    n_q = iA - iM
    steps = np.diff(pts[iM : iA + 1])
    h = (A - M) / n_q
    if n_q < 1 or np.max(np.abs(steps - h)) > 1e-9 * max(1.0, A):
        raise PricingError("grid is not uniform over [M, A]")
    log_space = _use_log(model, config)
    if log_space:
        raise PricingError("the direct method works on a price lattice")
    gen = build_generator(model, grid, log_space=False)
    tau = contract.tau
    # P(max_chain <= y_k) = survival below y_k for k = 0..n_q
    levels = M + np.arange(0, n_q + 1) * h
    below = np.empty(n_q)
    for k in range(n_q):
        barrier = pts[iM + k]
        if contract.x > barrier:
            below[k] = 0.0
        else:
            prof = fpp.survival_profile(gen, barrier, "up", tau, config.tol, config.expm_method)
            below[k] = prof[grid.index(contract.x) * gen.regime_count + config.regime]
    # probability mass of the capped running maximum on the levels M, ..., A
    mass = np.empty(n_q + 1)
    mass[0] = below[0]
    mass[1:n_q] = below[1:n_q] - below[: n_q - 1]
    mass[n_q] = 1.0 - below[n_q - 1]
    expected_cap = float(np.dot(mass, levels))
    disc_r, disc_d = math.exp(-model.r * tau), math.exp(-model.d * tau)
    value = disc_r * expected_cap - disc_d * contract.x
    return PriceResult(value, below, levels[1:], np.full(n_q, h), n_q, len(grid),
                       time.perf_counter() - t0, A, None, "direct", {"grid": grid})


# ---------------------------------------------------------------------------
# extrapolation and convergence orders


def richardson2(u_n: float, u_2n: float) -> float:
    """Two-point extrapolation assuming second-order convergence."""
    # same as (4 u_2n - u_n) / 3, but exact when the two prices coincide
    return u_2n + (u_2n - u_n) / 3.0


@dataclass(frozen=True)
class Extrapolation:
    order: float
    value: float
    ok: bool


def extrapolate3(u_n: float, u_2n: float, u_4n: float) -> Extrapolation:
    """Three-point extrapolation with an estimated order.

    ``p = log2((u_2n - u_n) / (u_4n - u_2n))``; the value is
    ``u_4n + (u_4n - u_2n) / (2**p - 1)``.  When the differences do not
    shrink geometrically in a consistent direction, ``ok`` is false, the
    order is NaN and ``u_4n`` is returned.
    """
    d1, d2 = u_2n - u_n, u_4n - u_2n
    if d2 == 0.0 and d1 == 0.0:
        return Extrapolation(math.inf, float(u_4n), True)
    if d2 == 0.0 or d1 / d2 <= 0.0:
        return Extrapolation(math.nan, float(u_4n), False)
    p = math.log2(d1 / d2)
    if p <= 0.0:
        return Extrapolation(p, float(u_4n), False)
    return Extrapolation(p, float(u_4n + d2 / (2.0**p - 1.0)), True)


def estimate_order(errors: Sequence) -> float:
    """Negated least-squares slope of log|error| against log n.

    ``errors`` is a sequence of ``(n, error)`` pairs; zero errors are dropped
    with a warning.
    """
    pts = [(float(n), abs(float(e))) for n, e in errors]
    kept = [(n, e) for n, e in pts if e > 0]
    if len(kept) < len(pts):
        warnings.warn("dropping zero errors from the order estimate", RuntimeWarning, stacklevel=2)
    if len(kept) < 3:
        raise PricingError("need at least three nonzero errors to estimate an order")
    n, e = np.array(kept).T
    slope = np.polyfit(np.log(n), np.log(e), 1)[0]
    return float(-slope)
