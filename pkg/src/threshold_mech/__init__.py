"""Threshold data-contribution mechanisms and their Monte Carlo experiments.

Mechanisms: C (subsidy only), S (simultaneous withdrawal), M (small-first
sequential withdrawal), and the large-first variant L.
"""

from ._kernels import BACKEND, EPS_NUM
from .assign import AssignmentPlan, PlanKind, build_pool, null_or_assign
from .core import (
    MechanismOutcome,
    Params,
    evaluate_outcome,
    null_outcome,
    provider_payoff,
    social_welfare,
    user_payoff,
    validate_costs,
)
from .dist import CostDistribution
from .engine import (
    CellStats,
    DrawRecords,
    MaskedCostEfficiency,
    MechCellStats,
    PairedDiff,
    ParetoDiagnostics,
    SweepConfig,
    SweepResult,
    apply_noise,
    masked_cost_efficiency,
    pareto_diagnostics,
    run_cell,
    sweep,
)
from .mech_c import (
    CutoffSolution,
    InvalidCutoff,
    calibrate_g_tilde,
    phi,
    pivotal_prob,
    play_c,
    select_cutoff,
)
from .primitives import (
    InfeasibleAllocation,
    WaterFillProblem,
    floor_contribution,
    gamma_star,
    max_fill,
    water_fill,
)
from .protocols import (
    ProtocolOutcome,
    l_outcome,
    m_outcome,
    noisy_plan_outcome,
    s_outcome,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentPlan",
    "BACKEND",
    "CellStats",
    "CostDistribution",
    "CutoffSolution",
    "DrawRecords",
    "EPS_NUM",
    "InfeasibleAllocation",
    "InvalidCutoff",
    "MaskedCostEfficiency",
    "MechCellStats",
    "MechanismOutcome",
    "PairedDiff",
    "Params",
    "ParetoDiagnostics",
    "PlanKind",
    "ProtocolOutcome",
    "SweepConfig",
    "SweepResult",
    "WaterFillProblem",
    "apply_noise",
    "build_pool",
    "calibrate_g_tilde",
    "evaluate_outcome",
    "floor_contribution",
    "gamma_star",
    "l_outcome",
    "m_outcome",
    "masked_cost_efficiency",
    "max_fill",
    "noisy_plan_outcome",
    "null_or_assign",
    "null_outcome",
    "pareto_diagnostics",
    "phi",
    "pivotal_prob",
    "play_c",
    "provider_payoff",
    "run_cell",
    "s_outcome",
    "select_cutoff",
    "social_welfare",
    "sweep",
    "user_payoff",
    "validate_costs",
    "water_fill",
]
