"""First-passage (barrier survival) probabilities of a CTMC."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .ctmc import Generator, GeneratorError, restrict_above, restrict_below
from .expm import expm_action

DIRECTIONS = ("up", "down")


class FppError(ValueError):
    pass


def _restricted(gen: Generator, barrier: float, direction: str):
    if direction not in DIRECTIONS:
        raise FppError(f"direction must be 'up' or 'down', got {direction!r}")
    if not gen.grid.contains(barrier):
        raise FppError(f"barrier {barrier!r} is not a grid point")
    try:
        return restrict_below(gen, barrier) if direction == "up" else restrict_above(gen, barrier)
    except GeneratorError as exc:
        raise FppError(str(exc)) from exc


def survival_profile(gen: Generator, barrier: float, direction: str, horizon: float,
                     tol: float = 1e-12, method: str = "uniformization") -> np.ndarray:
    """exp(G_restricted * horizon) 1 over every surviving state.

    For ``direction="up"`` the chain survives while it stays ``<= barrier``;
    for ``"down"`` while it stays ``>= barrier``.  Entries are ordered like
    the restricted generator (grid index major, regime minor).
    """
    if horizon < 0:
        raise FppError("horizon must be nonnegative")
    sub = _restricted(gen, barrier, direction)
    out = expm_action(sub, horizon, np.ones(sub.dimension), method=method, tol=tol, check=False)
    return np.clip(out, 0.0, 1.0)


def _survival(gen, barrier, direction, x, horizon, regime, tol, method):
    if not gen.grid.contains(x):
        raise FppError(f"start state {x!r} is not a grid point")
    if (direction == "up" and not x < barrier) or (direction == "down" and not x > barrier):
        raise FppError(f"start {x!r} is not strictly inside the surviving region")
    sub = _restricted(gen, barrier, direction)
    prof = survival_profile(gen, barrier, direction, horizon, tol, method)
    return float(prof[sub.state_index(x, regime)])


def survival_up(gen: Generator, barrier: float, x: float, horizon: float,
                regime: Optional[int] = None, tol: float = 1e-12,
                method: str = "uniformization") -> float:
    """P_x(chain stays <= barrier up to ``horizon``)."""
    return _survival(gen, barrier, "up", x, horizon, regime or 0, tol, method)


def survival_down(gen: Generator, barrier: float, x: float, horizon: float,
                  regime: Optional[int] = None, tol: float = 1e-12,
                  method: str = "uniformization") -> float:
    """P_x(chain stays >= barrier up to ``horizon``)."""
    return _survival(gen, barrier, "down", x, horizon, regime or 0, tol, method)
