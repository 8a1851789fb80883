"""Risk-neutral asset-price models and their local characteristics.

Diffusions (Black-Scholes, CEV, regime-switching BS) are described in price
coordinates.  Exponential Levy models (Kou, CGMY) are described in log-price
coordinates, which is also where their CTMC approximations live.

Kou jump sizes follow the double-exponential density in log-price

    f(z) = q_up / eta_up * exp(-z / eta_up)      for z > 0
         + q_down / eta_down * exp(z / eta_down)  for z < 0

so that ``eta_up`` and ``eta_down`` are the mean sizes of up and down jumps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import special


class ModelError(ValueError):
    """Invalid model parameters or an unsupported model/option combination."""


def _check_positive(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ModelError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class BlackScholes:
    sigma: float
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)


@dataclass(frozen=True)
class CEV:
    """Constant elasticity of variance: local volatility ``sigma * x**(1 + beta)``.

    For ``beta < 0`` the origin is attainable and the process is absorbed there.
    """

    sigma: float
    beta: float
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)
        if not np.isfinite(self.beta):
            raise ModelError("beta must be finite")


@dataclass(frozen=True)
class RegimeSwitchingBS:
    """Black-Scholes with volatility driven by an independent finite-state chain.

    ``q[e][f]`` is the transition rate (per year) from regime ``e`` to regime ``f``.
    """

    sigmas: tuple
    q: tuple
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        for s in sigmas:
            _check_positive("regime volatility", s)
        q = np.asarray(self.q, dtype=float)
        n = len(sigmas)
        if n < 1 or q.shape != (n, n):
            raise ModelError(f"q must be a {n}x{n} rate matrix, got shape {q.shape}")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ModelError("regime transition rates must be nonnegative off the diagonal")
        scale = max(1.0, float(np.abs(q).max()))
        if np.any(np.abs(q.sum(axis=1)) > 1e-12 * scale):
            raise ModelError("rows of the regime rate matrix must sum to zero")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "q", tuple(tuple(row) for row in q.tolist()))

    @property
    def regime_count(self) -> int:
        return len(self.sigmas)

    @property
    def rate_matrix(self) -> np.ndarray:
        return np.array(self.q, dtype=float)


@dataclass(frozen=True)
class Kou:
    sigma: float
    lam: float
    q_up: float
    q_down: float
    eta_up: float
    eta_down: float
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        _check_positive("sigma", self.sigma)
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ModelError("lam (jump intensity) must be nonnegative")
        if self.q_up < 0 or self.q_down < 0 or abs(self.q_up + self.q_down - 1.0) > 1e-12:
            raise ModelError("q_up and q_down must be nonnegative and sum to one")
        _check_positive("eta_up", self.eta_up)
        _check_positive("eta_down", self.eta_down)
        if self.eta_up >= 1.0:
            # E[exp(J)] is infinite otherwise and no martingale correction exists.
            raise ModelError("eta_up must be < 1 for the discounted price to be a martingale")

    @property
    def jump_compensator(self) -> float:
        """E[exp(J)] - 1 for the double-exponential jump size J."""
        return self.q_up / (1.0 - self.eta_up) + self.q_down / (1.0 + self.eta_down) - 1.0

    def upper_tail(self, a):
        """Intensity of jumps larger than ``a >= 0``."""
        return self.lam * self.q_up * np.exp(-np.asarray(a, dtype=float) / self.eta_up)

    def lower_tail(self, a):
        """Intensity of jumps smaller than ``-a`` (``a >= 0``)."""
        return self.lam * self.q_down * np.exp(-np.asarray(a, dtype=float) / self.eta_down)


def _upper_gamma(s: float, x):
    """Upper incomplete gamma function Gamma(s, x) for s > -2 and x > 0."""
    x = np.asarray(x, dtype=float)
    if s > 0:
        return special.gamma(s) * special.gammaincc(s, x)
    if s == 0:
        return special.exp1(x)
    return (_upper_gamma(s + 1.0, x) - x**s * np.exp(-x)) / s


@dataclass(frozen=True)
class CGMY:
    """Tempered stable pure-jump Levy model.

    Levy density ``C exp(-G|z|) / |z|**(1+Y)`` for ``z < 0`` and
    ``C exp(-M z) / z**(1+Y)`` for ``z > 0``.
    """

    C: float
    G: float
    M: float
    Y: float
    r: float = 0.0
    d: float = 0.0

    def __post_init__(self):
        _check_positive("C", self.C)
        _check_positive("G", self.G)
        _check_positive("M", self.M)
        if not 0.0 <= self.Y < 2.0:
            raise ModelError("Y must lie in [0, 2)")
        if self.M <= 1.0:
            raise ModelError("M must exceed 1 so that E[exp(X_t)] is finite")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        neg = z < 0
        out[pos] = self.C * np.exp(-self.M * z[pos]) / z[pos] ** (1.0 + self.Y)
        az = -z[neg]
        out[neg] = self.C * np.exp(-self.G * az) / az ** (1.0 + self.Y)
        return out

    def upper_tail(self, a):
        """Intensity of jumps larger than ``a > 0``."""
        a = np.asarray(a, dtype=float)
        return self.C * self.M**self.Y * _upper_gamma(-self.Y, self.M * a)

    def lower_tail(self, a):
        """Intensity of jumps smaller than ``-a`` (``a > 0``)."""
        a = np.asarray(a, dtype=float)
        return self.C * self.G**self.Y * _upper_gamma(-self.Y, self.G * a)

    def small_jump_variance(self, eps_down, eps_up):
        """Second moment of the jumps inside ``(-eps_down, eps_up)``."""
        k = 2.0 - self.Y
        g = special.gamma(k)
        up = self.M ** (-k) * g * special.gammainc(k, self.M * np.asarray(eps_up, dtype=float))
        down = self.G ** (-k) * g * special.gammainc(k, self.G * np.asarray(eps_down, dtype=float))
        return self.C * (up + down)

    def large_jump_mean(self, eps_down, eps_up):
        """Integral of ``z`` against the Levy measure outside ``(-eps_down, eps_up)``."""
        k = 1.0 - self.Y
        up = self.M ** (-k) * _upper_gamma(k, self.M * np.asarray(eps_up, dtype=float))
        down = self.G ** (-k) * _upper_gamma(k, self.G * np.asarray(eps_down, dtype=float))
        return self.C * (up - down)

    def upper_tail_moment(self, a, power: int):
        """Integral of ``z**power`` against the Levy measure over ``z > a`` (``a > 0``)."""
        k = power - self.Y
        return self.C * self.M ** (-k) * _upper_gamma(k, self.M * np.asarray(a, dtype=float))

    def lower_tail_moment(self, a, power: int):
        """Integral of ``|z|**power`` against the Levy measure over ``z < -a`` (``a > 0``)."""
        k = power - self.Y
        return self.C * self.G ** (-k) * _upper_gamma(k, self.G * np.asarray(a, dtype=float))

    def levy_exponent(self, theta: float) -> float:
        """Integral of ``exp(theta z) - 1 - theta z`` against the Levy measure.

        Finite for ``-G <= theta <= M``.
        """
        C, G, M, Y = self.C, self.G, self.M, self.Y
        if not -G <= theta <= M:
            return math.inf
        if Y == 0.0:
            return float(C * (-np.log1p(-theta / M) - np.log1p(theta / G) - theta * (1.0 / M - 1.0 / G)))
        if Y == 1.0:
            return float(C * ((M - theta) * np.log1p(-theta / M) + (G + theta) * np.log1p(theta / G)))
        base = C * special.gamma(-Y) * ((M - theta) ** Y - M**Y + (G + theta) ** Y - G**Y)
        # the Gamma(-Y) term alone leaves out the -theta z part of the compensator
        base -= theta * C * special.gamma(1.0 - Y) * (M ** (Y - 1.0) - G ** (Y - 1.0))
        return float(base)

    @property
    def compensated_exponent(self) -> float:
        """Integral of ``exp(z) - 1 - z`` against the Levy measure (closed form)."""
        return self.levy_exponent(1.0)


ModelSpec = Union[BlackScholes, CEV, RegimeSwitchingBS, Kou, CGMY]

LEVY_MODELS = (Kou, CGMY)
DIFFUSION_MODELS = (BlackScholes, CEV, RegimeSwitchingBS)


def is_levy(model: ModelSpec) -> bool:
    return isinstance(model, LEVY_MODELS)


@dataclass(frozen=True)
class LocalCharacteristics:
    """Drift, squared diffusion coefficient and optional Levy density.

    For Levy models (and Black-Scholes viewed in log space) ``log_space`` is
    true: the state is log-price, ``mu`` is the log-price drift and
    ``levy_density`` is the jump density of log-price increments.
    """

    mu: Callable[[np.ndarray], np.ndarray]
    sig2: Callable[[np.ndarray], np.ndarray]
    levy_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    log_space: bool = False
    extra: dict = field(default_factory=dict)


def _const(value: float):
    def f(x):
        return np.full(np.shape(x), value, dtype=float)

    return f


def _kou_density(model: Kou):
    def f(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        pos = z > 0
        neg = z < 0
        out[pos] = model.q_up / model.eta_up * np.exp(-z[pos] / model.eta_up)
        out[neg] = model.q_down / model.eta_down * np.exp(z[neg] / model.eta_down)
        return model.lam * out

    return f


def characteristics(
    model: ModelSpec, regime: Optional[int] = None, log_space: bool = False
) -> LocalCharacteristics:
    """Local characteristics of ``model`` under the risk-neutral measure.

    ``regime`` must be given for (and only for) regime-switching models.
    ``log_space=True`` is accepted for Black-Scholes, which is then treated
    as a Levy model without jumps.
    """
    is_rs = isinstance(model, RegimeSwitchingBS)
    if regime is not None and not is_rs:
        raise ModelError("regime index supplied for a model without regimes")
    if is_rs and regime is None:
        raise ModelError("regime index required for a regime-switching model")
    carry = model.r - model.d

    if isinstance(model, BlackScholes):
        s2 = model.sigma**2
        if log_space:
            return LocalCharacteristics(_const(carry - 0.5 * s2), _const(s2), None, True)
        return LocalCharacteristics(
            lambda x: carry * np.asarray(x, dtype=float),
            lambda x: s2 * np.asarray(x, dtype=float) ** 2,
        )
    if log_space and not is_levy(model):
        raise ModelError(f"{type(model).__name__} has no log-space (Levy) representation")
    if isinstance(model, CEV):
        s2, p = model.sigma**2, 2.0 * (1.0 + model.beta)

        def sig2(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = s2 * np.where(x > 0, x, 0.0) ** p
            return np.where(x > 0, out, 0.0)

        return LocalCharacteristics(lambda x: carry * np.asarray(x, dtype=float), sig2)
    if is_rs:
        if not 0 <= regime < model.regime_count:
            raise ModelError(f"regime {regime} out of range [0, {model.regime_count})")
        s2 = model.sigmas[regime] ** 2
        return LocalCharacteristics(
            lambda x: carry * np.asarray(x, dtype=float),
            lambda x: s2 * np.asarray(x, dtype=float) ** 2,
        )
    if isinstance(model, Kou):
        s2 = model.sigma**2
        drift = carry - 0.5 * s2 - model.lam * model.jump_compensator
        return LocalCharacteristics(_const(drift), _const(s2), _kou_density(model), True)
    if isinstance(model, CGMY):
        # compensated convention: L f = b f' + int (f(x+z) - f(x) - z f'(x)) nu(dz)
        drift = carry - model.compensated_exponent
        return LocalCharacteristics(
            _const(drift), _const(0.0), model.density, True, {"compensated": True}
        )
    raise ModelError(f"unsupported model {type(model).__name__}")


def effective_vol(model: ModelSpec, x: float = 1.0) -> float:
    """A single volatility number used to size truncation levels and domains."""
    if isinstance(model, BlackScholes):
        return model.sigma
    if isinstance(model, CEV):
        return model.sigma * float(x) ** model.beta
    if isinstance(model, RegimeSwitchingBS):
        return max(model.sigmas)
    if isinstance(model, Kou):
        jump_var = model.lam * (
            2 * model.q_up * model.eta_up**2 + 2 * model.q_down * model.eta_down**2
        )
        return float(np.sqrt(model.sigma**2 + jump_var))
    if isinstance(model, CGMY):
        C, G, M, Y = model.C, model.G, model.M, model.Y
        return float(np.sqrt(C * special.gamma(2 - Y) * (M ** (Y - 2) + G ** (Y - 2))))
    raise ModelError(f"unsupported model {type(model).__name__}")
