"""Floor/incremental-cost/capacity scalars and the water-filling allocator."""

from __future__ import annotations

import heapq
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_mech import (
    InfeasibleAllocation,
    WaterFillProblem,
    floor_contribution,
    gamma_star,
    max_fill,
    water_fill,
)
from threshold_mech.primitives import water_fill_exposure


def greedy_discrete_waterfill(costs, lower, upper, demand, step=1e-3):
    """Independent oracle: allocate the demand one `step` at a time, each to
    the member with the smallest per-unit marginal quadratic cost (exact for
    the discretized separable convex program).  The final increment toward a
    box bound may be fractional so bounds are attainable exactly."""
    e = np.array(lower, dtype=float)
    remaining = demand - e.sum()
    assert remaining >= -1e-12
    heap = []
    for j, (c, ej, uj) in enumerate(zip(costs, e, upper)):
        inc = min(step, uj - ej)
        if inc > 1e-12:
            heapq.heappush(heap, (c * (ej + inc / 2.0), j, inc))
    while remaining > 1e-12 and heap:
        _, j, inc = heapq.heappop(heap)
        take = min(inc, remaining)
        e[j] += take
        remaining -= take
        nxt = min(step, upper[j] - e[j])
        if nxt > 1e-12:
            heapq.heappush(heap, (costs[j] * (e[j] + nxt / 2.0), j, nxt))
    return e


class TestFloorContribution:
    def test_reference_values(self):
        assert floor_contribution(10.0, 0.05) == 0.005
        assert floor_contribution(100.0, 0.05) == 0.0005

    def test_clamps_at_one(self):
        assert floor_contribution(1.0, 2.0) == 1.0

    def test_rejects_nonpositive_cost(self):
        with pytest.raises(ValueError):
            floor_contribution(0.0, 0.1)


class TestGammaStar:
    def test_reference_values(self):
        assert gamma_star(10.0, 0.05, 0.84) == pytest.approx(8.35 ** 2 / 20.0)
        assert gamma_star(10.0, 0.05, 0.84) == pytest.approx(3.486, abs=1e-3)
        assert gamma_star(40.0, 0.05, 0.36) == pytest.approx(14.35 ** 2 / 80.0)
        assert gamma_star(40.0, 0.05, 0.36) == pytest.approx(2.574, abs=1e-3)

    def test_vanishes_at_floor(self):
        assert gamma_star(10.0, 0.05, 0.005) == 0.0

    @settings(max_examples=300, deadline=None)
    @given(
        c1=st.floats(0.5, 50.0),
        scale=st.floats(1.0001, 4.0),
        p=st.floats(0.0, 1.0),
        slack=st.floats(1e-6, 1.0),
    )
    def test_strictly_increasing_in_cost_above_floor(self, c1, scale, p, slack):
        c2 = c1 * scale
        d = min(p / c1 + slack, 1.0)  # above both floors
        if d <= p / c1:
            return
        assert gamma_star(c2, p, d) > gamma_star(c1, p, d)


class TestMaxFill:
    def test_reference_values(self):
        assert max_fill(10.0, 3.5, 0.05) == pytest.approx(
            (0.05 + math.sqrt(70.0)) / 10.0, abs=1e-12
        )
        assert max_fill(10.0, 3.5, 0.05) == pytest.approx(0.84166, abs=1e-5)
        assert max_fill(40.0, 3.5, 0.05) == pytest.approx(
            (0.05 + math.sqrt(280.0)) / 40.0, abs=1e-12
        )
        assert max_fill(40.0, 3.5, 0.05) == pytest.approx(0.41958, abs=1e-5)
        # jointly these two cover the worked instance's residual demand
        assert max_fill(10.0, 3.5, 0.05) + max_fill(40.0, 3.5, 0.05) >= 1.2

    def test_zero_value_collapses_to_floor(self):
        assert max_fill(10.0, 0.0, 0.05) == pytest.approx(0.005, abs=1e-15)
        assert max_fill(0.5, 0.0, 2.0) == 1.0

    def test_weakly_decreasing_in_cost(self):
        grid = np.linspace(0.5, 80.0, 200)
        vals = np.array([max_fill(c, 2.0, 0.3) for c in grid])
        assert np.all(np.diff(vals) <= 1e-15)

    @settings(max_examples=300, deadline=None)
    @given(c=st.floats(0.2, 100.0), v=st.floats(0.0, 10.0), p=st.floats(0.0, 2.0))
    def test_round_trip_with_gamma(self, c, v, p):
        d = max_fill(c, v, p)
        f = floor_contribution(c, p)
        assert d >= f - 1e-15
        # anything at the floor is voluntarily retained; above it, the
        # incremental cost of the largest acceptable gap is exactly v
        if d > f:
            assert gamma_star(c, p, d) <= v + 1e-9
            if d < 1.0:
                assert gamma_star(c, p, d) == pytest.approx(v, abs=1e-9)


class TestWaterFill:
    def test_worked_instance_targets(self):
        prob = WaterFillProblem(
            costs=np.array([10.0, 40.0]),
            lower=np.array([0.005, 0.00125]),
            upper=np.ones(2),
            demand=1.2,
        )
        e, lam = water_fill_exposure(prob)
        assert e == pytest.approx([0.96, 0.24], abs=1e-9)
        assert lam == pytest.approx(9.6, abs=1e-8)

    def test_upper_bound_binds(self):
        # interior exposure would overfill the cheap member, so it caps at 1
        prob = WaterFillProblem(
            costs=np.array([1.0, 4.0]),
            lower=np.zeros(2),
            upper=np.ones(2),
            demand=1.5,
        )
        e = water_fill(prob)
        assert e == pytest.approx([1.0, 0.5], abs=1e-9)
        # brute-force scan of the one free coordinate
        grid = np.arange(0.5, 1.0 + 1e-12, 1e-4)
        costs_of = 1.0 * grid ** 2 / 2.0 + 4.0 * (1.5 - grid) ** 2 / 2.0
        best = grid[np.argmin(costs_of)]
        assert e[0] == pytest.approx(best, abs=2e-4)

    def test_demand_equal_to_lower_sum(self):
        lower = np.array([0.3, 0.1, 0.05])
        prob = WaterFillProblem(
            costs=np.array([2.0, 3.0, 9.0]),
            lower=lower,
            upper=np.ones(3),
            demand=float(lower.sum()),
        )
        assert water_fill(prob) == pytest.approx(lower, abs=1e-9)

    def test_infeasible_raises(self):
        with pytest.raises(InfeasibleAllocation):
            water_fill(WaterFillProblem(
                costs=np.array([1.0, 2.0]), lower=np.zeros(2),
                upper=np.ones(2), demand=2.5,
            ))
        with pytest.raises(InfeasibleAllocation):
            water_fill(WaterFillProblem(
                costs=np.array([1.0, 2.0]), lower=np.array([0.5, 0.5]),
                upper=np.ones(2), demand=0.2,
            ))

    @pytest.mark.parametrize("seed", range(25))
    def test_random_pools_sum_exposure_and_optimality(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 9))
        costs = rng.uniform(0.5, 50.0, k)
        lower = rng.uniform(0.0, 0.2, k)
        upper = lower + rng.uniform(0.05, 1.0, k)
        upper = np.minimum(upper, 1.0)
        demand = float(lower.sum() + rng.random() * (upper.sum() - lower.sum()))
        prob = WaterFillProblem(costs=costs, lower=lower, upper=upper,
                                demand=demand)
        e, lam = water_fill_exposure(prob)
        assert abs(e.sum() - demand) < 1e-9
        assert np.all(e >= lower - 1e-12) and np.all(e <= upper + 1e-12)
        # interior members share the exposure level
        interior = (e > lower + 1e-7) & (e < upper - 1e-7)
        if np.any(interior):
            assert np.max(np.abs(costs[interior] * e[interior] - lam)) < 1e-9
        # never beaten by random feasible alternatives
        cost_opt = float(np.sum(costs * e * e) / 2.0)
        tries = 0
        found = 0
        while found < 40 and tries < 4000:
            tries += 1
            w = rng.dirichlet(np.ones(k))
            alt = lower + (demand - lower.sum()) * w
            if np.all(alt <= upper + 1e-12):
                found += 1
                assert cost_opt <= float(np.sum(costs * alt * alt) / 2.0) + 1e-9

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_greedy_discrete_oracle(self, seed):
        rng = np.random.default_rng(100 + seed)
        k = int(rng.integers(2, 9))
        costs = rng.uniform(0.5, 30.0, k)
        lower = rng.uniform(0.0, 0.15, k)
        upper = np.minimum(lower + rng.uniform(0.1, 1.0, k), 1.0)
        demand = float(lower.sum() + rng.uniform(0.1, 0.9)
                       * (upper.sum() - lower.sum()))
        prob = WaterFillProblem(costs=costs, lower=lower, upper=upper,
                                demand=demand)
        e = water_fill(prob)
        oracle = greedy_discrete_waterfill(costs, lower, upper, demand)
        assert np.max(np.abs(e - oracle)) < 2e-3
        cost_wf = float(np.sum(costs * e * e) / 2.0)
        cost_or = float(np.sum(costs * oracle * oracle) / 2.0)
        assert cost_wf <= cost_or + 1e-6
