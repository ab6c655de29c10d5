"""Pool construction and the provider's null-or-assign decision."""

from __future__ import annotations

import numpy as np
import pytest

from threshold_mech import Params, build_pool, null_or_assign
from threshold_mech.assign import PlanKind, attach_targets
from threshold_mech.protocols import finalize_plan, m_outcome, s_outcome

GOLD = Params(n=3, x=1.2005, v=3.5, p=0.05)
GOLD_COSTS = np.array([10.0, 40.0, 100.0])


class TestBuildPool:
    def test_worked_instance_pool(self):
        plan = build_pool(GOLD_COSTS, GOLD)
        assert plan.kind is PlanKind.BACKSTOP
        assert plan.pool == (0, 1)
        assert plan.pool_size == 2
        assert plan.residual == pytest.approx(1.2, abs=1e-12)
        assert plan.floors == pytest.approx([0.005, 0.00125, 0.0005])

    def test_single_backstopper_insufficient_here(self):
        # with only the cheapest user backstopping, the gap exceeds one unit
        floors = np.minimum(GOLD.p / GOLD_COSTS, 1.0)
        d1 = GOLD.x - floors[1] - floors[2]
        assert d1 == pytest.approx(1.19875, abs=1e-12)
        assert d1 > 1.0

    def test_minimal_pool_bracket(self):
        # k-1 < D_K <= k for every backstop plan
        rng = np.random.default_rng(2)
        for _ in range(300):
            n = int(rng.integers(3, 20))
            m = int(rng.integers(1, n))
            params = Params(n=n, x=m + rng.uniform(0.05, 0.95),
                            v=1.0, p=float(rng.uniform(0.0, 1.0)))
            plan = build_pool(rng.uniform(1.0, 5.0, n), params)
            if plan.kind is PlanKind.BACKSTOP:
                assert plan.pool_size - 1 < plan.residual + 1e-9
                assert plan.residual <= plan.pool_size + 1e-9

    def test_floor_only_branch(self):
        params = Params(n=3, x=1.5, v=1.0, p=4.0)
        plan = build_pool(np.array([1.0, 2.0, 4.0]), params)
        assert plan.kind is PlanKind.FLOOR_ONLY
        assert plan.pool_size == 0
        assert plan.targets == pytest.approx([1.0, 1.0, 1.0])

    def test_stable_tie_break_on_equal_costs(self):
        params = Params(n=4, x=1.5, v=1.0, p=0.01)
        plan = build_pool(np.array([2.0, 2.0, 2.0, 2.0]), params)
        assert plan.pool == (0, 1)

    def test_residual_weakly_decreases_with_cheaper_entrant(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(3, 12))
            m = int(rng.integers(1, n))
            x = m + rng.uniform(0.05, 0.95)
            p = float(rng.uniform(0.0, 0.8))
            costs = rng.uniform(1.0, 5.0, n)
            pa = Params(n=n, x=x, v=1.0, p=p)
            pb = Params(n=n + 1, x=x, v=1.0, p=p)
            plan_a = build_pool(costs, pa)
            plan_b = build_pool(np.append(costs, costs.min() * 0.9), pb)
            if plan_a.kind is PlanKind.BACKSTOP \
                    and plan_b.kind is PlanKind.BACKSTOP:
                assert plan_b.residual <= plan_a.residual + 1e-12


class TestNullOrAssign:
    def test_infeasible_protocol_nulls(self):
        plan = build_pool(GOLD_COSTS, GOLD)
        out = s_outcome(GOLD_COSTS, GOLD)
        assert not out.success
        final = null_or_assign(plan, out.success, None, GOLD)
        assert final.kind is PlanKind.NULL
        assert final.targets == pytest.approx(np.zeros(3))

    def test_feasible_protocol_passes_through(self):
        plan = build_pool(GOLD_COSTS, GOLD)
        out = m_outcome(GOLD_COSTS, GOLD)
        assert out.success
        final = null_or_assign(plan, out.success, out.retentions, GOLD)
        assert final.kind is PlanKind.BACKSTOP

    def test_profit_screen_nulls_vanishing_share(self):
        params = Params(n=3, x=1.2005, v=3.5, p=0.05, pi=1e-9,
                        enforce_provider_profit=True)
        plan = build_pool(GOLD_COSTS, params)
        out = m_outcome(GOLD_COSTS, Params(n=3, x=1.2005, v=3.5, p=0.05))
        final = null_or_assign(plan, True, out.retentions, params)
        assert final.kind is PlanKind.NULL

    def test_profit_screen_keeps_profitable_plan(self):
        params = Params(n=3, x=1.2005, v=3.5, p=0.05,
                        enforce_provider_profit=True)
        plan = build_pool(GOLD_COSTS, params)
        out = m_outcome(GOLD_COSTS, params)
        final = null_or_assign(plan, True, out.retentions, params)
        assert final.kind is PlanKind.BACKSTOP


class TestTargets:
    def test_backstop_targets_sum_to_threshold(self):
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 100:
            n = int(rng.integers(3, 20))
            m = int(rng.integers(1, n))
            params = Params(n=n, x=m + rng.uniform(0.05, 0.95),
                            v=float(rng.uniform(1.0, 6.0)),
                            p=float(rng.uniform(0.0, 0.6)))
            costs = rng.uniform(1.0, 5.0, n)
            for proto in ("S", "M", "L"):
                plan = finalize_plan(costs, params, proto)
                if plan.kind is PlanKind.BACKSTOP:
                    checked += 1
                    assert float(plan.targets.sum()) == pytest.approx(
                        params.x, abs=1e-9
                    )

    def test_attach_requires_backstop(self):
        params = Params(n=3, x=1.5, v=1.0, p=4.0)
        plan = build_pool(np.array([1.0, 2.0, 4.0]), params)
        with pytest.raises(ValueError):
            attach_targets(plan, np.array([1.0]))


class TestKernelConsistency:
    def test_python_plan_matches_kernel_pool(self):
        from threshold_mech import _kernels as K

        rng = np.random.default_rng(6)
        for _ in range(300):
            n = int(rng.integers(3, 30))
            m = int(rng.integers(1, n))
            params = Params(n=n, x=m + rng.uniform(0.05, 0.95), v=2.0,
                            p=float(rng.uniform(0.0, 1.0)))
            costs = rng.uniform(1.0, 5.0, n)
            plan = build_pool(costs, params)
            e = np.empty(n)
            _, k = K._withdrawal_draw(costs, params.x, params.p, params.v,
                                      1.0, False, K.PROTO_M, e)
            if plan.kind is PlanKind.FLOOR_ONLY:
                assert k == 0
            elif plan.kind is PlanKind.BACKSTOP:
                assert k == plan.pool_size
