"""Quadrature rules on finite intervals: rectangle, trapezoid, Simpson, Gauss-Legendre."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

KINDS = ("rectangle", "trapezoid", "simpson", "gauss_legendre")
_ALIASES = {
    "rect": "rectangle",
    "rectangle": "rectangle",
    "trap": "trapezoid",
    "trapezoid": "trapezoid",
    "simpson": "simpson",
    "gauss": "gauss_legendre",
    "gauss_legendre": "gauss_legendre",
}


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size == 0:
            raise QuadratureError("nodes and weights must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise QuadratureError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "interval", (float(self.interval[0]), float(self.interval[1])))

    @property
    def size(self) -> int:
        return self.nodes.size


def gauss_legendre_unit(n: int, tol: float = 1e-15, max_iter: int = 100):
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on [-1, 1].

    Newton iteration on the Legendre polynomial ``P_n`` (three-term
    recurrence) started from Chebyshev-like guesses.
    """
    if n < 1:
        raise QuadratureError("n must be at least 1")
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    z = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p0 = np.ones_like(z)
        p1 = z.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * z * p1 - (k - 1) * p0) / k
        if n == 1:
            p0, p1 = np.ones_like(z), z
        dp = n * (z * p1 - p0) / (z * z - 1.0)
        step = p1 / dp
        z = z - step
        if np.max(np.abs(step)) <= tol:
            break
    # derivative at the converged roots for the weights
    p0 = np.ones_like(z)
    p1 = z.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * z * p1 - (k - 1) * p0) / k
    if n == 1:
        p0, p1 = np.ones_like(z), z
    dp = n * (z * p1 - p0) / (z * z - 1.0)
    w = 2.0 / ((1.0 - z * z) * dp * dp)
    if n % 2 == 1:
        z[-1] = 0.0
    nodes = np.concatenate((-z, z[::-1][n % 2 :]))
    weights = np.concatenate((w, w[::-1][n % 2 :]))
    return nodes, weights


def make_rule(kind: str, n: int, a: float, b: float, right: bool = False) -> QuadratureRule:
    """Rule of type ``kind`` with parameter ``n`` on ``[a, b]``.

    ``n`` is the number of sub-intervals for the Newton-Cotes rules and the
    number of points for Gauss-Legendre.  ``right=True`` selects the
    right-endpoint rectangle rule.
    """
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise QuadratureError(f"unknown quadrature kind {kind!r}")
    n = int(n)
    if n < 1:
        raise QuadratureError("n must be at least 1")
    a, b = float(a), float(b)
    if not a < b:
        raise QuadratureError(f"empty interval [{a}, {b}]")
    length = b - a
    h = length / n
    if kind == "rectangle":
        i = np.arange(1, n + 1) if right else np.arange(n)
        nodes = a + i * h
        if right:
            nodes[-1] = b
        weights = np.full(n, h)
    elif kind == "trapezoid":
        nodes = a + np.arange(n + 1) * h
        nodes[-1] = b
        weights = np.full(n + 1, h)
        weights[[0, -1]] = 0.5 * h
    elif kind == "simpson":
        if n % 2:
            raise QuadratureError("Simpson's rule needs an even number of intervals")
        nodes = a + np.arange(n + 1) * h
        nodes[-1] = b
        weights = np.where(np.arange(n + 1) % 2 == 1, 4.0, 2.0) * h / 3.0
        weights[[0, -1]] = h / 3.0
    else:
        z, w = gauss_legendre_unit(n)
        nodes = a + 0.5 * length * (z + 1.0)
        weights = 0.5 * length * w
    return QuadratureRule(kind, nodes, weights, (a, b))


def parse_rule_name(name: str):
    """``"gauss-11"`` -> ("gauss_legendre", 11); ``"trap-11"`` -> ("trapezoid", 10).

    The number in the name counts points, as in a plot legend; Newton-Cotes
    rules take the matching number of intervals.
    """
    try:
        head, count = name.strip().lower().rsplit("-", 1)
        points = int(count)
    except ValueError as exc:
        raise QuadratureError(f"cannot parse rule name {name!r}") from exc
    kind = _ALIASES.get(head)
    if kind is None or points < 1:
        raise QuadratureError(f"cannot parse rule name {name!r}")
    if kind in ("trapezoid", "simpson"):
        if points < 2:
            raise QuadratureError(f"{name!r} needs at least two points")
        return kind, points - 1
    return kind, points


def rule_from_points(name: str, a: float, b: float, right: bool = False) -> QuadratureRule:
    kind, n = parse_rule_name(name)
    return make_rule(kind, n, a, b, right=right)


def concatenate(first: QuadratureRule, second: QuadratureRule) -> QuadratureRule:
    """Composite rule over adjacent intervals; a shared endpoint node is merged."""
    if first.interval[1] != second.interval[0]:
        raise QuadratureError("rules must cover adjacent intervals")
    nodes = list(first.nodes)
    weights = list(first.weights)
    start = 0
    if second.nodes[0] == nodes[-1]:
        weights[-1] += second.weights[0]
        start = 1
    nodes.extend(second.nodes[start:])
    weights.extend(second.weights[start:])
    kind = first.kind if first.kind == second.kind else "composite"
    return QuadratureRule(kind, np.array(nodes), np.array(weights), (first.interval[0], second.interval[1]))


def integrate(rule: QuadratureRule, f: Callable) -> float:
    values = np.asarray(f(rule.nodes), dtype=float)
    return float(np.dot(rule.weights, np.broadcast_to(values, rule.nodes.shape)))
