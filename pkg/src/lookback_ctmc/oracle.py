"""Independent reference prices used to check the CTMC engine.

* closed-form Black-Scholes floating-strike put (Goldman-Sosin-Gatto, with
  carry ``b = r - d``) and a quadrature of the reflection-principle
  distribution of the running extremum for all four kinds;
* Monte Carlo with the running extremum tracked at the time steps;
* the Crank-Nicolson scheme on the (x, M) lattice for diffusions;
* the scale-function hitting probability of a diffusion.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy import integrate
from scipy.special import ndtr
from scipy.stats import norm

from .kernels import fd_floating_put_sweep
from .model import CEV, CGMY, BlackScholes, Kou, RegimeSwitchingBS, characteristics


class OracleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Black-Scholes closed forms


def _check_bs(model):
    if not isinstance(model, BlackScholes):
        raise OracleError("closed forms are available for Black-Scholes only")
    if model.sigma <= 0:
        raise OracleError("sigma must be positive")


def bs_closed_form_floating_put(contract, model: BlackScholes) -> float:
    """Seasoned floating-strike lookback put under Black-Scholes."""
    _check_bs(model)
    S, Mx, tau = contract.x, contract.M, contract.tau
    r, sig = model.r, model.sigma
    b = model.r - model.d
    if tau == 0.0:
        return Mx - S
    st = sig * math.sqrt(tau)
    b1 = (math.log(S / Mx) + (b + 0.5 * sig**2) * tau) / st
    b2 = b1 - st
    disc = math.exp(-r * tau)
    base = Mx * disc * norm.cdf(-b2) - S * math.exp((b - r) * tau) * norm.cdf(-b1)
    if abs(b) < 1e-9:
        extra = S * disc * ((0.5 * sig**2 * tau + math.log(S / Mx)) * norm.cdf(b1) + st * norm.pdf(b1))
    else:
        extra = S * disc * sig**2 / (2.0 * b) * (
            math.exp(b * tau) * norm.cdf(b1)
            - (S / Mx) ** (-2.0 * b / sig**2) * norm.cdf(b1 - 2.0 * b * math.sqrt(tau) / sig)
        )
    return float(base + extra)


def bs_max_exceedance(model: BlackScholes, x: float, y, tau: float):
    """P_x(max of the price over [0, tau] >= y) for y >= x."""
    nu = model.r - model.d - 0.5 * model.sigma**2
    y = np.asarray(y, dtype=float)
    a = np.log(y / x)
    st = model.sigma * math.sqrt(tau)
    return ndtr((-a + nu * tau) / st) + np.exp(2.0 * nu * a / model.sigma**2) * ndtr(
        (-a - nu * tau) / st
    )


def bs_min_subceedance(model: BlackScholes, x: float, y, tau: float):
    """P_x(min of the price over [0, tau] <= y) for y <= x."""
    nu = model.r - model.d - 0.5 * model.sigma**2
    y = np.asarray(y, dtype=float)
    a = np.log(y / x)
    st = model.sigma * math.sqrt(tau)
    return ndtr((a - nu * tau) / st) + np.exp(2.0 * nu * a / model.sigma**2) * ndtr(
        (a + nu * tau) / st
    )


def bs_integral_price(contract, model: BlackScholes) -> float:
    """Any of the four kinds by adaptive quadrature of the extremum distribution."""
    _check_bs(model)
    tau, x, r, d = contract.tau, contract.x, model.r, model.d
    dr, dd = math.exp(-r * tau), math.exp(-d * tau)
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=200)
    kind = contract.kind
    if tau == 0.0:
        return float(contract.intrinsic())
    if kind in ("floating_put", "fixed_call"):
        lo = contract.M if kind == "floating_put" else max(contract.M, contract.K)
        tail = integrate.quad(lambda y: bs_max_exceedance(model, x, y, tau), lo, np.inf, **opts)[0]
        if kind == "floating_put":
            return float(dr * contract.M - dd * x + dr * tail)
        return float(dr * max(contract.M - contract.K, 0.0) + dr * tail)
    hi = contract.m if kind == "floating_call" else min(contract.m, contract.K)
    body = integrate.quad(lambda y: bs_min_subceedance(model, x, y, tau), 0.0, hi, **opts)[0]
    if kind == "floating_call":
        return float(dd * x - dr * contract.m + dr * body)
    return float(dr * max(contract.K - contract.m, 0.0) + dr * body)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McConfig:
    paths: int = 200_000
    steps: int = 2000
    seed: int = 12345
    antithetic: bool = True
    chunk: int = 20_000
    threads: int = 1
    regime: int = 0

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise OracleError("paths and steps must be at least 1")
        if self.chunk < 1 or self.threads < 1:
            raise OracleError("chunk and threads must be at least 1")


@dataclass(frozen=True)
class McResult:
    price: float
    stderr: float
    coarse_price: float
    bias_allowance: float
    paths: int
    steps: int
    debiased: float = float("nan")
    debiased_stderr: float = float("nan")

    @property
    def low_power(self) -> bool:
        return self.paths < 1000


def _payoff(contract, x_T, run_max, run_min):
    kind = contract.kind
    if kind == "floating_put":
        return np.maximum(contract.M, run_max) - x_T
    if kind == "floating_call":
        return x_T - np.minimum(contract.m, run_min)
    if kind == "fixed_put":
        return np.maximum(contract.K - np.minimum(contract.m, run_min), 0.0)
    return np.maximum(np.maximum(contract.M, run_max) - contract.K, 0.0)


def _normals(rng, n_paths, antithetic):
    if antithetic:
        half = rng.standard_normal(n_paths // 2)
        return np.concatenate((half, -half))
    return rng.standard_normal(n_paths)


def _simulate_chunk(contract, model, n_paths, n_steps, dt, seed_seq, antithetic, regime0=0):
    """Terminal price and running extrema on fine and every-other-step grids."""
    rng = np.random.default_rng(seed_seq)
    x = np.full(n_paths, float(contract.x))
    hi_f = x.copy()
    lo_f = x.copy()
    hi_c = x.copy()
    lo_c = x.copy()
    carry = model.r - model.d
    regime = None
    if isinstance(model, RegimeSwitchingBS):
        regime = np.full(n_paths, regime0, dtype=np.int64)
        trans = scipy.linalg.expm(model.rate_matrix * dt)
        cum = np.cumsum(trans, axis=1)
        vols = np.array(model.sigmas)
    if isinstance(model, Kou):
        kdrift = (carry - 0.5 * model.sigma**2 - model.lam * model.jump_compensator) * dt
    sq = math.sqrt(dt)
    for k in range(1, n_steps + 1):
        z = _normals(rng, n_paths, antithetic)
        if isinstance(model, BlackScholes):
            x = x * np.exp((carry - 0.5 * model.sigma**2) * dt + model.sigma * sq * z)
        elif isinstance(model, RegimeSwitchingBS):
            s = vols[regime]
            x = x * np.exp((carry - 0.5 * s * s) * dt + s * sq * z)
            u = rng.random(n_paths)
            regime = (u[:, None] > cum[regime]).sum(axis=1)
        elif isinstance(model, CEV):
            alive = x > 0
            pos = np.where(alive, x, 0.0)
            x = np.where(alive, pos + carry * pos * dt + model.sigma * pos ** (1.0 + model.beta) * sq * z, 0.0)
            x = np.maximum(x, 0.0)
        else:
            n_jumps = rng.poisson(model.lam * dt, n_paths)
            n_up = rng.binomial(n_jumps, model.q_up)
            jump = rng.gamma(n_up, model.eta_up) - rng.gamma(n_jumps - n_up, model.eta_down)
            x = x * np.exp(kdrift + model.sigma * sq * z + jump)
        np.maximum(hi_f, x, out=hi_f)
        np.minimum(lo_f, x, out=lo_f)
        if k % 2 == 0:
            np.maximum(hi_c, x, out=hi_c)
            np.minimum(lo_c, x, out=lo_c)
    return x, hi_f, lo_f, hi_c, lo_c


def mc_price(contract, model, mc: McConfig) -> McResult:
    """Discounted payoff mean, its standard error and a monitoring-bias allowance.

    The running extremum is observed at the time steps only.  The bias
    allowance compares the fine grid with the every-other-step grid on the
    same paths: for a bias of order sqrt(dt) the fine-grid bias is about
    ``|fine - coarse| / (sqrt(2) - 1)``; three standard errors of the paired
    difference are added.

    ``debiased`` removes the leading sqrt(dt) term by extrapolating the
    paired fine and coarse payoffs, ``fine + (fine - coarse) / (sqrt(2) - 1)``,
    path by path, so its standard error is exact for that estimator.
    """
    if isinstance(model, CGMY):
        raise OracleError("Monte Carlo is not supported for CGMY")
    if not isinstance(model, (BlackScholes, RegimeSwitchingBS, CEV, Kou)):
        raise OracleError(f"unsupported model {type(model).__name__}")
    tau = contract.tau
    disc = math.exp(-model.r * tau)
    n_steps = max(2, math.ceil(mc.steps * tau))
    n_steps += n_steps % 2
    dt = tau / n_steps if tau > 0 else 0.0
    if tau == 0.0:
        p = float(contract.intrinsic())
        return McResult(p, 0.0, p, 0.0, mc.paths, 0, p, 0.0)
    paths = mc.paths + (mc.paths % 2 if mc.antithetic else 0)
    chunk = mc.chunk + (mc.chunk % 2 if mc.antithetic else 0)
    sizes = [chunk] * (paths // chunk)
    if paths % chunk:
        sizes.append(paths % chunk)
    seeds = np.random.SeedSequence(mc.seed).spawn(len(sizes))

    def run(job):
        size, seq = job
        xT, hf, lf, hc, lc = _simulate_chunk(contract, model, size, n_steps, dt, seq, mc.antithetic, mc.regime)
        fine = disc * _payoff(contract, xT, hf, lf)
        coarse = disc * _payoff(contract, xT, hc, lc)
        return fine, coarse

    jobs = list(zip(sizes, seeds))
    if mc.threads > 1:
        with ThreadPoolExecutor(mc.threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    fine = np.concatenate([p[0] for p in parts])
    coarse = np.concatenate([p[1] for p in parts])

    def mean_se(values):
        if mc.antithetic:
            # partners sit in the two halves of each (even-sized) chunk
            pieces, start = [], 0
            for size in sizes:
                h = size // 2
                pieces.append(0.5 * (values[start : start + h] + values[start + h : start + size]))
                start += size
            samples = np.concatenate(pieces)
        else:
            samples = values
        se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
        return float(values.mean()), se

    price, se = mean_se(fine)
    coarse_price, _ = mean_se(coarse)
    _, se_diff = mean_se(fine - coarse)
    gain = 1.0 / (math.sqrt(2.0) - 1.0)
    allowance = abs(price - coarse_price) * gain + 3.0 * se_diff
    debiased, se_debiased = mean_se(fine + gain * (fine - coarse))
    return McResult(price, se, coarse_price, allowance, paths, n_steps, debiased, se_debiased)


# ---------------------------------------------------------------------------
# Crank-Nicolson scheme for the floating-strike put


@dataclass(frozen=True)
class FdConfig:
    N_x: int
    N_t: int
    Mbar: float

    def __post_init__(self):
        if self.N_x < 4 or self.N_t < 1:
            raise OracleError("need N_x >= 4 and N_t >= 1")
        if not self.Mbar > 0:
            raise OracleError("Mbar must be positive")


def fd_lattice(model, contract, fd: FdConfig) -> np.ndarray:
    """The full lattice ``u[j, i]`` (x = i dx, M = j dx) at the valuation time."""
    if not isinstance(model, (BlackScholes, CEV)):
        raise OracleError("the finite-difference scheme needs a diffusion (BS or CEV)")
    if contract.kind != "floating_put":
        raise OracleError("the finite-difference scheme prices the floating-strike put")
    if not fd.Mbar > contract.x:
        raise OracleError("Mbar must exceed the spot")
    dx = fd.Mbar / fd.N_x
    grid = dx * np.arange(fd.N_x + 1)
    ch = characteristics(model)
    mu = np.ascontiguousarray(ch.mu(grid), dtype=float)
    sig2 = np.ascontiguousarray(ch.sig2(grid), dtype=float)
    tau = contract.tau
    return fd_floating_put_sweep(mu, sig2, float(model.r), dx, tau / fd.N_t, int(fd.N_t), tau)


def fd_price_floating_put(model, contract, fd: FdConfig) -> float:
    """Crank-Nicolson price interpolated bilinearly at (x, M)."""
    if contract.kind != "floating_put":
        raise OracleError("the finite-difference scheme prices the floating-strike put")
    if contract.M > fd.Mbar or contract.x < 0:
        raise OracleError("(x, M) lies outside the lattice")
    u = fd_lattice(model, contract, fd)
    dx = fd.Mbar / fd.N_x
    n = fd.N_x

    def value(i, j):
        # the lattice covers i <= j; above the diagonal use the diagonal value
        return u[j, min(i, j)]

    fi, fj = contract.x / dx, contract.M / dx
    i0, j0 = min(int(math.floor(fi)), n - 1), min(int(math.floor(fj)), n - 1)
    ai, aj = fi - i0, fj - j0
    v00, v10 = value(i0, j0), value(i0 + 1, j0)
    v01, v11 = value(i0, j0 + 1), value(i0 + 1, j0 + 1)
    return float((1 - ai) * (1 - aj) * v00 + ai * (1 - aj) * v10 + (1 - ai) * aj * v01 + ai * aj * v11)


# ---------------------------------------------------------------------------
# scale function


def scale_hitting_prob(model, lower: float, y: float, x: float, regime: Optional[int] = None) -> float:
    """P_x(reach ``lower`` before ``y``) for a diffusion, from its scale density."""
    if isinstance(model, (Kou, CGMY)):
        raise OracleError("scale functions are defined for diffusions only")
    if not lower <= x <= y or lower >= y:
        raise OracleError("need lower <= x <= y")
    ch = characteristics(model, regime=regime)
    mu = lambda z: float(ch.mu(np.array(z)))
    s2 = lambda z: float(ch.sig2(np.array(z)))
    zs = np.linspace(lower, y, 9)
    if np.any(np.array([s2(z) for z in zs]) <= 0):
        raise OracleError("diffusion coefficient vanishes on the interval")

    def log_scale(z):
        return -integrate.quad(lambda u: 2.0 * mu(u) / s2(u), lower, z, epsabs=1e-13, epsrel=1e-12)[0]

    def scale(z):
        return math.exp(log_scale(z))

    opts = dict(epsabs=1e-12, epsrel=1e-12, limit=200)
    num = integrate.quad(scale, lower, x, **opts)[0]
    den = integrate.quad(scale, lower, y, **opts)[0]
    return float(min(1.0, max(0.0, 1.0 - num / den)))
