import numpy as np
import pytest

from errors import SolverGuardError, ValidationError
from models.billing import BillingPolicy, percentile_usage
from models.multi_provider import (
    Provider, ProviderSet, evaluate_multi_surplus, solve_multi, solve_multi_oracle,
)
from models.stochastic import solve_oracle, solve_sweep
from processor.demand import DemandScenario


def _providers(prices, tau: int, q: float = 0.75) -> ProviderSet:
    return ProviderSet.from_prices(prices, tau=tau, slot_seconds=1.0, percentile_q=q)


class TestProviderSet:
    def test_ids_and_cheapest(self):
        providers = _providers([3.0, 2.0, 2.0], tau=4)
        assert providers.ids == ["p1", "p2", "p3"]
        assert providers.cheapest() == 1
        assert providers.relabeled([2, 0, 1]).ids == ["p3", "p1", "p2"]

    def test_empty(self):
        with pytest.raises(ValidationError):
            ProviderSet([])

    def test_duplicate_ids(self):
        policy = BillingPolicy(4, 1.0, 0.75, 1.0)
        with pytest.raises(ValidationError):
            ProviderSet([Provider("a", policy), Provider("a", policy)])

    def test_mixed_geometry(self):
        with pytest.raises(ValidationError):
            ProviderSet([Provider("a", BillingPolicy(4, 1.0, 0.75, 1.0)),
                         Provider("b", BillingPolicy(4, 1.0, 0.5, 1.0))])

    def test_usage_matrix_shape(self, spec):
        scenario = DemandScenario.deterministic([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValidationError):
            evaluate_multi_surplus(np.zeros((1, 4)), scenario, spec, _providers([1.0, 2.0], 4))


class TestAscent:
    def test_single_provider_matches_sweep(self, spec, make_scenario, make_policy):
        rng = np.random.default_rng(1)
        for _ in range(10):
            scenario = make_scenario(rng, 10, k_max=3)
            multiplan = solve_multi(scenario, spec, _providers([1.5], 10))
            single = solve_sweep(scenario, spec, make_policy(10, price=1.5))
            assert multiplan.expected_surplus == pytest.approx(single.expected_surplus, rel=1e-9, abs=1e-9)

    def test_identical_providers_never_lose(self, spec, make_scenario, make_policy):
        rng = np.random.default_rng(2)
        for _ in range(10):
            scenario = make_scenario(rng, 10, k_max=3)
            multiplan = solve_multi(scenario, spec, _providers([1.0, 1.0], 10))
            single = solve_sweep(scenario, spec, make_policy(10))
            assert multiplan.expected_surplus >= single.expected_surplus - 1e-9

    def test_free_provider_carries_everything(self, spec, make_scenario):
        scenario = make_scenario(np.random.default_rng(3), 8, k_max=2)
        multiplan = solve_multi(scenario, spec, _providers([1.0, 0.0], 8))
        assert multiplan.plans["p1"].planned_usage == pytest.approx(np.zeros(8))
        assert multiplan.plans["p2"].planned_usage == pytest.approx(scenario.max_demand())

    def test_rounds_never_decrease(self, spec, make_scenario):
        rng = np.random.default_rng(4)
        for _ in range(10):
            scenario = make_scenario(rng, 10, k_max=3)
            multiplan = solve_multi(scenario, spec, _providers([1.0, 1.3, 2.0], 10))
            rounds = multiplan.rounds
            assert len(rounds) >= 2
            assert all(b >= a for a, b in zip(rounds, rounds[1:]))
            assert rounds[-1] == pytest.approx(multiplan.expected_surplus)

    def test_cost_is_recomputed(self, spec, make_scenario):
        scenario = make_scenario(np.random.default_rng(5), 10, k_max=2)
        providers = _providers([1.0, 2.5], 10)
        multiplan = solve_multi(scenario, spec, providers)
        cost = sum(p.price * percentile_usage(multiplan.plans[p.provider_id].planned_usage, p.policy)
                   for p in providers)
        assert multiplan.expected_cost == pytest.approx(cost)
        for p in providers:
            multiplan.plans[p.provider_id].check(p.policy)

    def test_beats_cheapest_provider_alone(self, spec, make_scenario):
        rng = np.random.default_rng(6)
        for _ in range(10):
            scenario = make_scenario(rng, 10, k_max=3)
            providers = _providers([2.0, 1.0], 10)
            single = solve_sweep(scenario, spec, providers[providers.cheapest()].policy)
            multiplan = solve_multi(scenario, spec, providers)
            assert multiplan.expected_surplus >= single.expected_surplus - 1e-9

    def test_rounds_max_must_be_positive(self, spec):
        scenario = DemandScenario.deterministic([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValidationError):
            solve_multi(scenario, spec, _providers([1.0, 2.0], 4), rounds_max=0)


class TestAnchoredAscent:
    def test_anchor_row_is_kept(self, spec, make_scenario, make_policy):
        rng = np.random.default_rng(7)
        providers = _providers([1.0, 1.0, 1.5], 12)
        for _ in range(10):
            scenario = make_scenario(rng, 12, k_max=3)
            anchor = solve_sweep(scenario, spec, make_policy(12))
            multiplan = solve_multi(scenario, spec, providers, anchor=anchor)
            assert multiplan.solver_tag == "anchored_ascent"
            assert multiplan.plans["p1"] is anchor
            for pid in ("p2", "p3"):
                plan = multiplan.plans[pid]
                assert percentile_usage(plan.planned_usage, providers[providers.ids.index(pid)].policy) == 0.0
            assert multiplan.expected_surplus >= anchor.expected_surplus - 1e-9

    def test_no_burst_budget_adds_nothing(self, spec, make_scenario, make_policy):
        scenario = make_scenario(np.random.default_rng(8), 6)
        anchor = solve_sweep(scenario, spec, make_policy(6, q=1.0))
        multiplan = solve_multi(scenario, spec, _providers([1.0, 1.0], 6, q=1.0), anchor=anchor)
        assert np.all(multiplan.plans["p2"].planned_usage == 0.0)
        assert multiplan.expected_surplus == pytest.approx(anchor.expected_surplus)

    def test_anchor_and_initial_are_exclusive(self, spec, make_policy):
        scenario = DemandScenario.deterministic([1.0, 2.0, 3.0, 4.0])
        anchor = solve_sweep(scenario, spec, make_policy(4))
        with pytest.raises(ValidationError):
            solve_multi(scenario, spec, _providers([1.0, 1.0], 4), anchor=anchor, initial=np.zeros((2, 4)))

    def test_anchor_length(self, spec, make_policy):
        anchor = solve_sweep(DemandScenario.deterministic([1.0, 2.0, 3.0]), spec, make_policy(3))
        with pytest.raises(ValidationError):
            solve_multi(DemandScenario.deterministic([1.0, 2.0, 3.0, 4.0]), spec,
                        _providers([1.0, 1.0], 4), anchor=anchor)


class TestWarmStart:
    def test_never_worse_than_start(self, spec, make_scenario):
        rng = np.random.default_rng(9)
        providers = _providers([1.0, 2.0], 10)
        for _ in range(10):
            scenario = make_scenario(rng, 10, k_max=3)
            initial = rng.uniform(0.0, 8.0, size=(2, 10))
            start = evaluate_multi_surplus(initial, scenario, spec, providers)[0]
            multiplan = solve_multi(scenario, spec, providers, initial=initial)
            assert multiplan.expected_surplus >= start - 1e-9

    @pytest.mark.parametrize("initial", [np.zeros((1, 4)), np.full((2, 4), -1.0), np.full((2, 4), np.nan)])
    def test_bad_initial(self, spec, initial):
        scenario = DemandScenario.deterministic([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(ValidationError):
            solve_multi(scenario, spec, _providers([1.0, 1.0], 4), initial=initial)


class TestMultiOracle:
    def test_guards(self, spec):
        scenario = DemandScenario.deterministic(np.ones(4))
        with pytest.raises(SolverGuardError):
            solve_multi_oracle(scenario, spec, _providers([1.0, 2.0, 3.0], 4))
        with pytest.raises(SolverGuardError):
            solve_multi_oracle(DemandScenario.deterministic(np.ones(9)), spec, _providers([1.0, 2.0], 9))

    def test_prohibitive_second_price_matches_single(self, spec, make_scenario):
        rng = np.random.default_rng(7)
        for _ in range(5):
            scenario = make_scenario(rng, 6, k_max=2)
            providers = _providers([1.0, 1e6], 6, q=1.0)
            multi = solve_multi_oracle(scenario, spec, providers)
            single = solve_oracle(scenario, spec, providers[0].policy)
            assert multi.expected_surplus == pytest.approx(single.expected_surplus, rel=1e-6)

    def test_relabeling_keeps_value(self, spec, make_scenario):
        scenario = make_scenario(np.random.default_rng(8), 6, k_max=2)
        providers = _providers([2.0, 3.0], 6, q=0.8)
        forward = solve_multi_oracle(scenario, spec, providers)
        backward = solve_multi_oracle(scenario, spec, providers.relabeled([1, 0]))
        assert forward.expected_surplus == pytest.approx(backward.expected_surplus, rel=1e-6)

    def test_ascent_is_near_optimal(self, spec, make_scenario):
        ratios = []
        for seed in range(30):
            scenario = make_scenario(np.random.default_rng(seed), 6, k_max=2)
            providers = _providers([1.0, 1.5], 6, q=0.8)
            exact = solve_multi_oracle(scenario, spec, providers)
            ascent = solve_multi(scenario, spec, providers)
            assert ascent.expected_surplus <= exact.expected_surplus + 1e-6 * abs(exact.expected_surplus)
            ratios.append(ascent.expected_surplus / exact.expected_surplus)
        assert np.mean(ratios) >= 0.98
