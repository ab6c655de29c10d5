"""Subsidy-only mechanism: floor play plus the productive cutoff equilibrium.

The cutoff search scans candidate participation probabilities q in (0, b0],
maps each to a cutoff cost a = F^-1(q), calibrates the participation
contribution so the expected aggregate hits the threshold, and keeps the
candidate with the largest nonnegative net gain for the marginal type.  The
belief parameter b0 caps how much coordination users can muster: b0 = 0
always selects the floor equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import _kernels
from .core import MechanismOutcome, Params, evaluate_outcome, validate_costs
from .dist import CostDistribution


class InvalidCutoff(ValueError):
    """The calibrated participation contribution leaves its admissible band."""


@dataclass(frozen=True)
class CutoffSolution:
    a_star: float
    q_star: float
    g_tilde: float
    phi_value: float


def calibrate_g_tilde(a: float, params: Params, dist: CostDistribution) -> float:
    """Participation contribution at cutoff a.

    Solves (m+1) * g + (n-1-m) * mu0(a) = x for g; valid only when g exceeds
    the marginal type's floor and fits within one unit of data.
    """
    mu0 = dist.floor_mean_tail(a, params.p)
    g = (params.x - (params.n - 1 - params.m) * mu0) / (params.m + 1)
    if not (params.p / a < g <= 1.0 + 1e-12):
        raise InvalidCutoff(
            f"g_tilde({a:.6g}) = {g:.6g} outside (p/a, 1] = "
            f"({params.p / a:.6g}, 1]"
        )
    return min(g, 1.0)


def _binom_pmf(k: int, n: int, q: float) -> float:
    if q <= 0.0:
        return 1.0 if k == 0 else 0.0
    if q >= 1.0:
        return 1.0 if k == n else 0.0
    log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return math.exp(log_c + k * math.log(q) + (n - k) * math.log1p(-q))


def pivotal_prob(a: float, params: Params, dist: CostDistribution) -> float:
    """Probability that exactly m of the other n-1 users participate.

    Evaluated in log space; single-peaked in q = F(a) with the peak at
    q = m / (n-1).
    """
    q = dist.cdf(a)
    return _binom_pmf(params.m, params.n - 1, q)


def pivotal_prob_mc(a: float, params: Params, aux_costs: np.ndarray) -> float:
    """Monte Carlo estimate of the pivotal probability from auxiliary draws
    of the other n-1 cost types."""
    if aux_costs.ndim != 2 or aux_costs.shape[1] != params.n - 1:
        raise ValueError("auxiliary draws must have shape (B_mc, n-1)")
    participants = np.count_nonzero(aux_costs <= a, axis=1)
    return float(np.mean(participants == params.m))


def phi(a: float, params: Params, dist: CostDistribution,
        pivotal: float | None = None) -> float:
    """Net expected gain of the marginal type from participating at cutoff a."""
    g = calibrate_g_tilde(a, params, dist)
    if pivotal is None:
        pivotal = pivotal_prob(a, params, dist)
    return params.v * pivotal - _kernels._gamma_star(a, params.p, g)


def participation_ratio(a: float, params: Params, dist: CostDistribution) -> float:
    """R(a) = incremental cost over pivotal probability; V = R(a) at a root.

    Strictly increasing past the pivotal peak, which is what makes the
    productive cutoff unique on that branch.
    """
    g = calibrate_g_tilde(a, params, dist)
    db = pivotal_prob(a, params, dist)
    if db <= 0.0:
        return math.inf
    return _kernels._gamma_star(a, params.p, g) / db


def select_cutoff(params: Params, dist: CostDistribution, b0: float,
                  grid: int = 40, mode: str = "closed_form",
                  b_mc: int = 10_000, rng: np.random.Generator | None = None,
                  refine: bool = False) -> CutoffSolution | None:
    """Scan q in (0, b0] and keep the best supportable cutoff, if any.

    ``mode='mc'`` replaces the closed-form pivotal probability with an
    estimate from ``b_mc`` auxiliary draws (one shared batch across
    candidates); it requires ``rng``.  ``refine`` polishes the selected
    candidate to the exact root of the net-gain function on the decreasing
    branch (closed-form mode only).
    """
    if not 0.0 <= b0 <= 1.0:
        raise ValueError(f"b0 must lie in [0, 1], got {b0}")
    if b0 == 0.0:
        return None
    if mode not in ("closed_form", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    aux = None
    if mode == "mc":
        if rng is None:
            raise ValueError("mc mode needs a seeded generator")
        aux = dist.transform_uniforms(rng.random((b_mc, params.n - 1)))
    best: CutoffSolution | None = None
    for i in range(1, grid + 1):
        q = b0 * i / grid
        a = float(dist.inv_cdf(q))
        if not dist.c_low < a < dist.c_high:
            continue
        try:
            g = calibrate_g_tilde(a, params, dist)
        except InvalidCutoff:
            continue
        db = pivotal_prob_mc(a, params, aux) if aux is not None \
            else pivotal_prob(a, params, dist)
        val = params.v * db - _kernels._gamma_star(a, params.p, g)
        if val >= 0.0 and (best is None or val > best.phi_value):
            best = CutoffSolution(a, q, g, val)
    if best is None or not refine or mode == "mc":
        return best
    return _refine_root(best, params, dist)


def _refine_root(best: CutoffSolution, params: Params,
                 dist: CostDistribution) -> CutoffSolution:
    """Polish the grid candidate to the root of phi above it, when bracketable."""

    def f(a: float) -> float:
        try:
            return phi(a, params, dist)
        except InvalidCutoff:
            return -1.0

    hi = dist.c_high - 1e-9 * (dist.c_high - dist.c_low)
    lo = best.a_star
    if f(lo) <= 0.0:
        return best
    if f(hi) >= 0.0:
        return best
    root = optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-14)
    g = calibrate_g_tilde(root, params, dist)
    return CutoffSolution(float(root), float(dist.cdf(root)), g,
                          phi(root, params, dist))


def play_c(costs: np.ndarray, cutoff: CutoffSolution | None,
           params: Params) -> MechanismOutcome:
    """One draw of the subsidy-only mechanism.

    Floors that already reach the threshold succeed outright; otherwise the
    cutoff profile is applied when one was selected, and the floor profile
    (with its subsidy leakage) is the fallback.  Subsidies are paid on every
    retention whether or not provision succeeds.
    """
    c = validate_costs(costs)
    if c.size != params.n:
        raise ValueError(f"expected {params.n} costs, got {c.size}")
    e = np.empty_like(c)
    has_cutoff = cutoff is not None
    a = cutoff.a_star if has_cutoff else 0.0
    g = cutoff.g_tilde if has_cutoff else 0.0
    _kernels._c_draw(c, params.x, params.p, params.v, a, g, has_cutoff, e)
    return evaluate_outcome(c, e, params)


def floor_equilibrium_holds(params: Params, c_low: float) -> bool:
    """Whether the all-floors profile is unbreakable by a unilateral deviation."""
    return 1.0 + (params.n - 1) * min(params.p / c_low, 1.0) < params.x
