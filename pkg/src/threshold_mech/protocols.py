"""Stage-2 withdrawal protocols: simultaneous (S), small-first sequential (M),
and the large-first variant (L).

Each protocol turns a cost realization into final retentions and a success
flag.  Failure of a noiseless protocol means the provider already chose the
null assignment, so nothing is retained; with noisy cost observation the
plan is built from the observed costs, users act on their true costs, and a
failed provision keeps whatever was retained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .assign import AssignmentPlan, PlanKind, attach_targets, build_pool, null_plan
from .core import Params, validate_costs

_PROTO_CODES = {"S": _kernels.PROTO_S, "M": _kernels.PROTO_M, "L": _kernels.PROTO_L}

_SUCCESS_STATES = (_kernels.ST_FLOOR_ONLY, _kernels.ST_SUCCESS)


@dataclass(frozen=True)
class ProtocolOutcome:
    """Final retentions over all users plus success metadata."""

    retentions: np.ndarray
    success: bool
    pool_size: int
    binding_user: int | None = None

    @property
    def aggregate(self) -> float:
        return float(self.retentions.sum())


def _run(costs: np.ndarray, params: Params, proto: str) -> tuple[np.ndarray, int, int]:
    c = validate_costs(costs)
    if c.size != params.n:
        raise ValueError(f"expected {params.n} costs, got {c.size}")
    e = np.empty_like(c)
    status, k = _kernels._withdrawal_draw(
        c, params.x, params.p, params.v, params.pi,
        params.enforce_provider_profit, _PROTO_CODES[proto], e,
    )
    return e, status, k


def s_outcome(costs: np.ndarray, params: Params) -> ProtocolOutcome:
    """Simultaneous withdrawal: water-filled targets, all-or-nothing.

    Provision stands iff every backstopper's participation constraint holds
    at the equal-exposure target; otherwise the assignment is null.
    """
    e, status, k = _run(costs, params, "S")
    success = status in _SUCCESS_STATES
    binding = None
    if k > 0:
        plan = build_pool(costs, params)
        targets = plan_targets_s(costs, params, plan)
        if targets is not None:
            gammas = [
                _kernels._gamma_star(costs[i], params.p, t)
                if t > plan.floors[i] else 0.0
                for i, t in zip(plan.pool, targets)
            ]
            binding = plan.pool[int(np.argmax(gammas))]
    return ProtocolOutcome(e, success, max(k, 0), binding)


def m_outcome(costs: np.ndarray, params: Params) -> ProtocolOutcome:
    """Small-first sequential withdrawal.

    Backstoppers move from the highest cost down to the lowest; each retains
    the least amount keeping the remaining chain able to reach the threshold,
    so the most capable user is the final safety net.
    """
    e, status, k = _run(costs, params, "M")
    return ProtocolOutcome(e, status in _SUCCESS_STATES, max(k, 0))


def l_outcome(costs: np.ndarray, params: Params) -> ProtocolOutcome:
    """Large-first variant: the same chain with the mover order reversed."""
    e, status, k = _run(costs, params, "L")
    return ProtocolOutcome(e, status in _SUCCESS_STATES, max(k, 0))


def noisy_plan_outcome(costs_true: np.ndarray, costs_observed: np.ndarray,
                       params: Params, protocol: str) -> ProtocolOutcome:
    """Protocol outcome when the provider plans from noisy cost signals.

    Pool, mover order, targets, and announced capacities come from the
    observed costs; acceptance decisions and fill capacities use the true
    costs.  Retentions stand even when the aggregate misses the threshold.
    """
    ct = validate_costs(costs_true)
    co = validate_costs(costs_observed)
    if ct.size != co.size or ct.size != params.n:
        raise ValueError("true and observed cost vectors must both have length n")
    if protocol not in _PROTO_CODES:
        raise ValueError(f"unknown protocol {protocol!r}")
    e = np.empty_like(ct)
    status, k = _kernels._withdrawal_draw_noisy(
        ct, co, params.x, params.p, params.v, params.pi,
        params.enforce_provider_profit, _PROTO_CODES[protocol], e,
    )
    return ProtocolOutcome(e, status in _SUCCESS_STATES, max(k, 0))


# -- plan-level target views (used for reports and tests) -------------------

def plan_targets_s(costs: np.ndarray, params: Params,
                   plan: AssignmentPlan | None = None) -> np.ndarray | None:
    """Water-filled simultaneous targets over the pool, or None if no pool."""
    from .primitives import WaterFillProblem, water_fill

    if plan is None:
        plan = build_pool(costs, params)
    if plan.kind is not PlanKind.BACKSTOP:
        return None
    idx = list(plan.pool)
    problem = WaterFillProblem(
        costs=np.asarray(costs, dtype=float)[idx],
        lower=plan.floors[idx],
        upper=np.ones(len(idx)),
        demand=plan.residual,
    )
    return water_fill(problem)


def finalize_plan(costs: np.ndarray, params: Params, protocol: str) -> AssignmentPlan:
    """Structural plan with the protocol's targets attached, or nulled.

    This is the assignment the provider would actually commit to: floor-only
    and backstop plans survive only when the protocol preview succeeds (and,
    if enabled, the profitability screen passes).
    """
    plan = build_pool(costs, params)
    if plan.kind is PlanKind.NULL:
        return null_plan(plan)
    out = {"S": s_outcome, "M": m_outcome, "L": l_outcome}[protocol](costs, params)
    if not out.success:
        return null_plan(plan)
    if plan.kind is PlanKind.BACKSTOP:
        plan = attach_targets(plan, out.retentions[list(plan.pool)])
    return plan
