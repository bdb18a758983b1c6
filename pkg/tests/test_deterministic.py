import json

import numpy as np
import pytest
from scipy.optimize import brentq

from errors import ValidationError
from models.billing import BillingPolicy
from models.deterministic import cap_surplus, select_free_slots, solve_deterministic
from models.plan import Plan, evaluate_expected_surplus
from models.stochastic import solve_oracle, solve_sweep
from models.utility import UtilitySpec, utility_value
from processor.demand import DemandScenario


class TestSelectFreeSlots:
    def test_largest_slot_freed(self):
        rho = select_free_slots(np.arange(1, 21), BillingPolicy(tau=20))
        assert list(np.flatnonzero(rho == 0)) == [19]

    def test_no_budget(self):
        rho = select_free_slots(np.arange(1, 20), BillingPolicy(tau=19))
        assert rho.sum() == 19

    def test_ties_free_earliest(self):
        rho = select_free_slots(np.full(20, 3.0), BillingPolicy(tau=20, percentile_q=0.9))
        assert list(np.flatnonzero(rho == 0)) == [0, 1]


class TestSolveDeterministic:
    def test_zero_price_serves_demand(self, spec, make_policy):
        demand = np.array([3.0, 1.0, 7.0, 2.0])
        plan = solve_deterministic(DemandScenario.deterministic(demand), spec, make_policy(4, price=0.0))
        assert plan.planned_usage == pytest.approx(demand)
        assert plan.expected_surplus == pytest.approx(float(np.sum(utility_value(spec, demand))))

    def test_single_spike_is_freed(self, spec):
        demand = np.ones(20)
        demand[-1] = 100.0
        policy = BillingPolicy(tau=20, slot_seconds=1.0, price_delta=2.0)
        plan = solve_deterministic(DemandScenario.deterministic(demand), spec, policy)
        assert plan.burst_mask[-1] == 0
        assert plan.planned_usage[-1] == 100.0
        assert plan.planned_usage[:-1] == pytest.approx(np.ones(19))

    def test_closed_form_cap(self, spec):
        # Two capped slots with demand above the cap: 2 / sqrt(phi) = price.
        policy = BillingPolicy(tau=2, slot_seconds=1.0, percentile_q=1.0, price_delta=2.0)
        scenario = DemandScenario.deterministic([4.0, 9.0])
        phi = brentq(lambda p: 2.0 / np.sqrt(p) - policy.price_delta, 0.01, 3.99)

        for solve in (solve_deterministic, solve_sweep, solve_oracle):
            plan = solve(scenario, spec, policy)
            assert plan.cap_phi == pytest.approx(phi, rel=1e-6)
            assert plan.expected_surplus == pytest.approx(2.0, rel=1e-9)

    @pytest.mark.parametrize("curvature", [0.1, 0.5, 1.0])
    def test_matches_subset_oracle(self, curvature):
        rng = np.random.default_rng(int(curvature * 100))
        spec = UtilitySpec(factor_A=1.0, curvature_a=curvature)
        for _ in range(70):
            demand = rng.uniform(1.0, 10.0, size=20)
            policy = BillingPolicy(tau=20, slot_seconds=1.0, percentile_q=0.95,
                                   price_delta=float(rng.uniform(0.0, 50.0)))
            scenario = DemandScenario.deterministic(demand)

            plan = solve_deterministic(scenario, spec, policy)
            oracle = solve_oracle(scenario, spec, policy)
            plan.check(policy)
            assert plan.expected_surplus >= oracle.expected_surplus - 1e-6 * abs(oracle.expected_surplus)

    def test_cap_surplus_is_concave(self, spec):
        rng = np.random.default_rng(5)
        policy = BillingPolicy(tau=20, slot_seconds=1.0, price_delta=1.5)
        for _ in range(20):
            demand = rng.uniform(1.0, 10.0, size=20)
            g = cap_surplus(demand, select_free_slots(demand, policy), spec, policy)
            a, b = sorted(rng.uniform(0.0, 10.0, size=2))
            assert g(0.5 * (a + b)) >= 0.5 * (g(a) + g(b)) - 1e-12

    def test_surplus_falls_with_price(self, spec):
        rng = np.random.default_rng(9)
        scenario = DemandScenario.deterministic(rng.uniform(1.0, 10.0, size=20))
        surpluses = [
            solve_deterministic(scenario, spec, BillingPolicy(20, 1.0, 0.95, price)).expected_surplus
            for price in (0.0, 1.0, 2.0, 5.0, 20.0)
        ]
        assert all(a >= b - 1e-12 for a, b in zip(surpluses, surpluses[1:]))

    def test_rejects_stochastic_scenario(self, spec, make_policy):
        scenario = DemandScenario.from_slots([[(1.0, 0.5), (2.0, 0.5)]])
        with pytest.raises(ValidationError):
            solve_deterministic(scenario, spec, make_policy(1))


class TestExpectedSurplus:
    def test_zero_usage(self, spec, make_policy):
        scenario = DemandScenario.from_slots([[(1.0, 0.5), (2.0, 0.5)], [(3.0, 1.0)]])
        surplus, cost, net = evaluate_expected_surplus(np.zeros(2), scenario, spec, make_policy(2))
        assert (surplus, cost, net) == (0.0, 0.0, 0.0)

    def test_on_demand_baseline(self, spec):
        demand = np.array([4.0, 9.0, 1.0, 16.0])
        policy = BillingPolicy(tau=4, slot_seconds=1.0, percentile_q=0.75, price_delta=0.5)
        surplus, cost, _ = evaluate_expected_surplus(demand, DemandScenario.deterministic(demand), spec, policy)
        assert cost == pytest.approx(0.5 * 9.0)
        assert surplus == pytest.approx(2 * (2 + 3 + 1 + 4) - 4.5)

    def test_usage_above_demand_never_helps(self, spec, make_policy):
        scenario = DemandScenario.from_slots([[(1.0, 0.5), (2.0, 0.5)], [(3.0, 1.0)]])
        policy = make_policy(2, q=1.0)
        at_demand = evaluate_expected_surplus([2.0, 3.0], scenario, spec, policy)[0]
        above = evaluate_expected_surplus([5.0, 6.0], scenario, spec, policy)[0]
        assert above <= at_demand

    def test_shape_mismatch(self, spec, make_policy):
        scenario = DemandScenario.deterministic([1.0, 2.0])
        with pytest.raises(ValidationError):
            evaluate_expected_surplus([1.0, 2.0, 3.0], scenario, spec, make_policy(2))


def test_plan_json_round_trip(spec, make_policy, tmp_path):
    scenario = DemandScenario.deterministic([3.0, 1.0, 7.0, 2.0])
    plan = solve_deterministic(scenario, spec, make_policy(4))
    path = plan.save(tmp_path / "plan.json")
    loaded = Plan.from_json(json.loads(path.read_text()))
    assert loaded.planned_usage == pytest.approx(plan.planned_usage)
    assert loaded.solver_tag == "deterministic"


def test_plan_json_without_tau(spec, make_policy):
    plan = solve_deterministic(DemandScenario.deterministic([3.0, 1.0, 7.0, 2.0]), spec, make_policy(4))
    payload = plan.to_json()
    del payload["tau"]
    with pytest.raises(ValidationError):
        Plan.from_json(payload)
