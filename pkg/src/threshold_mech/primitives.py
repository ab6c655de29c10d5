"""Scalar mechanism mathematics shared by every mechanism.

floor_contribution  -- privately optimal retention induced by the subsidy
gamma_star          -- incremental participation cost of retaining d over the floor
max_fill            -- largest gap a type is willing to fill on a provision path
water_fill          -- cost-minimizing split of a residual demand across a pool
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import EPS_NUM


class InfeasibleAllocation(ValueError):
    """Raised when the demanded total lies outside the box-constraint sum."""


def floor_contribution(c: float, p: float) -> float:
    """min(p/c, 1): what a user retains for the subsidy alone."""
    if c <= 0.0:
        raise ValueError(f"cost must be > 0, got {c}")
    if p < 0.0:
        raise ValueError(f"subsidy must be >= 0, got {p}")
    return min(p / c, 1.0)


def gamma_star(c: float, p: float, d: float) -> float:
    """Incremental cost of retaining d instead of the floor: (c*d - p)^2 / (2c)."""
    if c <= 0.0:
        raise ValueError(f"cost must be > 0, got {c}")
    return _kernels._gamma_star(c, p, d)


def max_fill(c: float, v: float, p: float) -> float:
    """Largest d with gamma_star(c, p, d) <= v, capped at one unit.

    Weakly decreasing in c: lower-cost users can fill larger gaps.
    """
    if c <= 0.0:
        raise ValueError(f"cost must be > 0, got {c}")
    if v < 0.0 or p < 0.0:
        raise ValueError("value and subsidy must be >= 0")
    return _kernels._max_fill(c, v, p)


@dataclass(frozen=True)
class WaterFillProblem:
    """Box-constrained demand split: lower <= e <= upper, sum(e) = demand."""

    costs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    demand: float

    def __post_init__(self) -> None:
        c = np.ascontiguousarray(self.costs, dtype=np.float64)
        lo = np.ascontiguousarray(self.lower, dtype=np.float64)
        up = np.ascontiguousarray(self.upper, dtype=np.float64)
        if not (c.shape == lo.shape == up.shape) or c.ndim != 1:
            raise ValueError("costs, lower, upper must be 1-D and congruent")
        if not np.all(c > 0.0):
            raise ValueError("costs must be > 0")
        if np.any(lo > up + EPS_NUM):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)


def water_fill(problem: WaterFillProblem) -> np.ndarray:
    """Unique allocation minimizing sum(c_j e_j^2 / 2) at the given demand.

    Unconstrained users share a common exposure c_j * e_j; the exposure level
    is located by monotone bisection on the residual map.
    """
    out = np.empty(problem.costs.size)
    lam = _kernels._water_fill(
        problem.costs, problem.lower, problem.upper, problem.demand, out
    )
    if lam < 0.0:
        raise InfeasibleAllocation(
            f"demand {problem.demand} outside "
            f"[{problem.lower.sum()}, {problem.upper.sum()}]"
        )
    return out


def water_fill_exposure(problem: WaterFillProblem) -> tuple[np.ndarray, float]:
    """Like :func:`water_fill` but also returns the shared exposure level."""
    out = np.empty(problem.costs.size)
    lam = _kernels._water_fill(
        problem.costs, problem.lower, problem.upper, problem.demand, out
    )
    if lam < 0.0:
        raise InfeasibleAllocation(
            f"demand {problem.demand} outside "
            f"[{problem.lower.sum()}, {problem.upper.sum()}]"
        )
    return out, lam
