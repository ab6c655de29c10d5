"""Shared domain types and payoff/welfare accounting.

All quantities are recomputed from the cost vector and the effective
contributions rather than accumulated along the way, so the welfare identity
(total surplus = sum of user payoffs + provider payoff, subsidies cancelling)
can be checked independently of any mechanism's bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import EPS_NUM


@dataclass(frozen=True)
class Params:
    """Game constants: population size, threshold, value, subsidy, value share.

    The threshold integer part ``m`` is derived as floor(x); ``x`` must lie
    strictly between consecutive integers with m >= 1 and n >= m + 1, so no
    single user can reach the threshold alone.
    """

    n: int
    x: float
    v: float
    p: float
    pi: float = 1.0
    enforce_provider_profit: bool = False

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        m = math.floor(self.x)
        if self.x <= 1.0 or self.x == m:
            raise ValueError(
                f"x must be a non-integer in (m, m+1) with m >= 1, got {self.x}"
            )
        if self.n < m + 1:
            raise ValueError(f"n must be >= m + 1 = {m + 1}, got {self.n}")
        if self.v < 0.0:
            raise ValueError(f"v must be >= 0, got {self.v}")
        if self.p < 0.0:
            raise ValueError(f"p must be >= 0, got {self.p}")
        if self.pi <= 0.0:
            raise ValueError(f"pi must be > 0, got {self.pi}")

    @property
    def m(self) -> int:
        return math.floor(self.x)

    def at(self, v: float, p: float) -> "Params":
        """Copy with a new (v, p) point; used when sweeping the grid."""
        return replace(self, v=v, p=p)


def validate_costs(costs: np.ndarray, c_low: float | None = None,
                   c_high: float | None = None) -> np.ndarray:
    """Coerce to a float array of private costs and check positivity/support."""
    c = np.ascontiguousarray(costs, dtype=np.float64)
    if c.ndim != 1:
        raise ValueError(f"cost vector must be 1-D, got shape {c.shape}")
    if not np.all(c > 0.0):
        raise ValueError("all costs must be > 0")
    if c_low is not None and np.any(c < c_low - EPS_NUM):
        raise ValueError(f"cost below support lower bound {c_low}")
    if c_high is not None and np.any(c > c_high + EPS_NUM):
        raise ValueError(f"cost above support upper bound {c_high}")
    return c


@dataclass(frozen=True)
class MechanismOutcome:
    """Per-draw result: effective contributions plus derived accounting."""

    e: np.ndarray
    success: bool
    privacy_cost_total: float
    user_payoffs: np.ndarray
    provider_payoff: float
    subsidy_paid: float
    backstop_pool_size: int = 0


def user_payoff(c: float, e: float, success: bool, v: float, p: float) -> float:
    """Single user's payoff: provision benefit + subsidy - quadratic cost."""
    if not 0.0 <= e <= 1.0:
        raise ValueError(f"contribution must lie in [0, 1], got {e}")
    if c <= 0.0:
        raise ValueError(f"cost must be > 0, got {c}")
    return (v if success else 0.0) + p * e - c * e * e / 2.0


def provider_payoff(outcome: MechanismOutcome, params: Params) -> float:
    """Provider's value share on success minus subsidies paid on all retentions."""
    benefit = params.pi * params.v if outcome.success else 0.0
    return benefit - params.p * float(np.sum(outcome.e))


def social_welfare(costs: np.ndarray, outcome: MechanismOutcome,
                   params: Params) -> float:
    """Total surplus: provision benefit n*V minus total privacy cost.

    Subsidies are transfers between the provider and users and cancel.
    """
    c = validate_costs(costs)
    if c.size != outcome.e.size:
        raise ValueError("cost vector and contribution profile differ in length")
    privacy = float(np.sum(c * outcome.e * outcome.e) / 2.0)
    benefit = params.n * params.v if outcome.success else 0.0
    return benefit - privacy


def evaluate_outcome(costs: np.ndarray, e: np.ndarray, params: Params,
                     backstop_pool_size: int = 0) -> MechanismOutcome:
    """Build a consistent outcome from a contribution profile.

    Success is derived from the aggregate against the threshold (with the
    package-wide numerical slack); everything else is recomputed from
    (costs, e).
    """
    c = validate_costs(costs)
    e = np.ascontiguousarray(e, dtype=np.float64)
    if e.shape != c.shape:
        raise ValueError("contribution profile and cost vector differ in shape")
    if np.any(e < -EPS_NUM) or np.any(e > 1.0 + EPS_NUM):
        raise ValueError("contributions must lie in [0, 1]")
    success = bool(np.sum(e) >= params.x - EPS_NUM)
    privacy = float(np.sum(c * e * e) / 2.0)
    subsidy = params.p * float(np.sum(e))
    benefit = params.v if success else 0.0
    payoffs = benefit + params.p * e - c * e * e / 2.0
    provider = (params.pi * params.v if success else 0.0) - subsidy
    return MechanismOutcome(
        e=e,
        success=success,
        privacy_cost_total=privacy,
        user_payoffs=payoffs,
        provider_payoff=provider,
        subsidy_paid=subsidy,
        backstop_pool_size=backstop_pool_size,
    )


def null_outcome(costs: np.ndarray, params: Params,
                 backstop_pool_size: int = 0) -> MechanismOutcome:
    """The null regime: nothing collected, no privacy cost, no subsidy."""
    c = validate_costs(costs)
    return evaluate_outcome(c, np.zeros_like(c), params, backstop_pool_size)
