"""Stage-1 provider logic: floor-plus-backstop pool construction.

The provider sorts disclosed costs, keeps everyone at their floor when that
already reaches the threshold, and otherwise recruits the smallest pool of
lowest-cost users able to cover the residual demand.  Positive assignments
always sum to the threshold exactly; when no pool works, or the selected
protocol cannot sustain provision, the assignment is null.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import _kernels
from ._kernels import EPS_NUM, EPS_PART
from .core import Params, validate_costs


class PlanKind(Enum):
    NULL = "null"
    FLOOR_ONLY = "floor_only"
    BACKSTOP = "backstop"


@dataclass(frozen=True)
class AssignmentPlan:
    """Pool membership and per-user notional targets.

    ``pool`` holds original indices sorted ascending by cost (stable in the
    input order on ties).  ``targets`` is None for a backstop plan until a
    protocol attaches its split of the residual demand.
    """

    kind: PlanKind
    pool: tuple[int, ...]
    pool_size: int
    residual: float
    floors: np.ndarray
    targets: np.ndarray | None

    @property
    def is_null(self) -> bool:
        return self.kind is PlanKind.NULL


def build_pool(costs: np.ndarray, params: Params) -> AssignmentPlan:
    """Construct the structural plan for one cost realization.

    Floors alone reaching the threshold give a floor-only plan; otherwise the
    smallest k with residual demand D_K <= k defines the backstop pool, and
    if no k works the plan is null.
    """
    c = validate_costs(costs)
    if c.size != params.n:
        raise ValueError(f"expected {params.n} costs, got {c.size}")
    floors = np.minimum(params.p / c, 1.0)
    fsum = float(floors.sum())
    if fsum >= params.x - EPS_NUM:
        return AssignmentPlan(PlanKind.FLOOR_ONLY, (), 0, 0.0, floors,
                              floors.copy())
    order = np.argsort(c, kind="stable")
    k, d = _kernels._min_pool(floors, fsum, params.x, order)
    if k < 0:
        return AssignmentPlan(PlanKind.NULL, (), 0, 0.0, floors,
                              np.zeros_like(floors))
    return AssignmentPlan(PlanKind.BACKSTOP, tuple(int(i) for i in order[:k]),
                          int(k), float(d), floors, None)


def attach_targets(plan: AssignmentPlan, pool_targets: np.ndarray) -> AssignmentPlan:
    """Attach a protocol's split of the residual demand to a backstop plan."""
    if plan.kind is not PlanKind.BACKSTOP:
        raise ValueError("targets can only be attached to a backstop plan")
    targets = plan.floors.copy()
    targets[list(plan.pool)] = pool_targets
    return replace(plan, targets=targets)


def null_plan(plan: AssignmentPlan) -> AssignmentPlan:
    """Null everything: g_i = 0 for every user."""
    return replace(plan, kind=PlanKind.NULL,
                   targets=np.zeros_like(plan.floors))


def null_or_assign(plan: AssignmentPlan, protocol_feasible: bool,
                   outcome_preview: np.ndarray | None,
                   params: Params) -> AssignmentPlan:
    """Final provider decision for a structural plan.

    Protocol-infeasible plans are nulled.  With the profitability screen on,
    a positive assignment additionally requires the provider's value share to
    cover the subsidy bill on the previewed equilibrium retentions.
    """
    if plan.kind is PlanKind.NULL or not protocol_feasible:
        return null_plan(plan)
    if params.enforce_provider_profit:
        if outcome_preview is None:
            raise ValueError("profit screen requires an outcome preview")
        bill = params.p * float(np.sum(outcome_preview))
        if params.pi * params.v - bill < -EPS_PART:
            return null_plan(plan)
    return plan
