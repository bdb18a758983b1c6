"""
Planning across several burstable providers billed on the same slotting.

Each provider i has its own price and its own percentile bill; the user's
utility depends on the total usage sum_i X_i[t]. solve_multi runs block
coordinate ascent: one provider at a time re-plans against the load the
others already carry, using the single-provider sweep on a shifted landscape.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from config import ASCENT_TOL, CROSSING_BUDGET, GOLDEN_TOL, MULTI_ORACLE_MAX_TAU, ROUNDS_MAX
from errors import InvariantError, SolverGuardError, ValidationError
from models.billing import BillingPolicy, percentile_usage
from models.landscape import SlotLandscape
from models.plan import MultiPlan, Plan, expected_net_utility
from models.search import golden_section_max
from models.stochastic import cap_objective, sweep_landscape
from models.utility import UtilitySpec
from processor.demand import DemandScenario

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9


@dataclass(frozen=True)
class Provider:
    provider_id: str
    policy: BillingPolicy

    @property
    def price(self) -> float:
        return self.policy.price_delta


class ProviderSet:
    """
    Providers sharing one cycle geometry (tau, slot length, percentile).

    Examples:
        ProviderSet.from_prices([15, 15], tau=672) → ids p1, p2
    """

    def __init__(self, providers):
        self.providers = tuple(providers)
        if not self.providers:
            raise ValidationError("a provider set needs at least one provider")
        ids = [p.provider_id for p in self.providers]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate provider ids {ids}")
        first = self.providers[0].policy
        for p in self.providers[1:]:
            shape = (p.policy.tau, p.policy.slot_seconds, p.policy.percentile_q)
            if shape != (first.tau, first.slot_seconds, first.percentile_q):
                raise ValidationError(f"provider {p.provider_id} bills on a different cycle geometry")

    @classmethod
    def from_prices(cls, prices, tau: int, slot_seconds: float = 3600.0,
                    percentile_q: float = 0.95) -> "ProviderSet":
        return cls(
            Provider(f"p{i}", BillingPolicy(tau, slot_seconds, percentile_q, float(price)))
            for i, price in enumerate(prices, start=1)
        )

    def __len__(self) -> int:
        return len(self.providers)

    def __iter__(self):
        return iter(self.providers)

    def __getitem__(self, i: int) -> Provider:
        return self.providers[i]

    @property
    def tau(self) -> int:
        return self.providers[0].policy.tau

    @property
    def slot_seconds(self) -> float:
        return self.providers[0].policy.slot_seconds

    @property
    def ids(self) -> list[str]:
        return [p.provider_id for p in self.providers]

    def cheapest(self) -> int:
        """Index of the lowest price, lowest index on ties."""
        prices = [p.price for p in self.providers]
        return prices.index(min(prices))

    def relabeled(self, order) -> "ProviderSet":
        return ProviderSet(self.providers[i] for i in order)


# ── Joint objective ───────────────────────────────────────────────────────────

def evaluate_multi_surplus(usages: np.ndarray, scenario: DemandScenario, spec: UtilitySpec,
                           providers: ProviderSet) -> tuple[float, float, float]:
    """
    Expected surplus of an (I, tau) usage matrix: utility of the total usage
    minus every provider's own percentile bill.

    Returns:
        (surplus, cost, net_utility)
    """
    usages = np.asarray(usages, dtype=float)
    if usages.shape != (len(providers), providers.tau):
        raise ValidationError(f"usage matrix has shape {usages.shape}, "
                              f"expected ({len(providers)}, {providers.tau})")
    cost = sum(p.price * percentile_usage(x, p.policy) for p, x in zip(providers, usages))
    net = expected_net_utility(usages.sum(axis=0), scenario, spec, providers.slot_seconds)
    return net - cost, cost, net


def _multi_plan(usages: np.ndarray, scenario: DemandScenario, spec: UtilitySpec,
                providers: ProviderSet, tag: str, rounds: list[float]) -> MultiPlan:
    # Per-provider Plan figures are those of the provider serving alone.
    plans = {
        p.provider_id: Plan.from_usage(x, scenario, spec, p.policy, solver_tag=tag)
        for p, x in zip(providers, usages)
    }
    surplus, cost, net = evaluate_multi_surplus(usages, scenario, spec, providers)
    return MultiPlan(plans=plans, expected_cost=cost, expected_surplus=surplus,
                     expected_utility=net, solver_tag=tag, rounds=rounds)


def _check(scenario: DemandScenario, providers: ProviderSet) -> None:
    if scenario.tau != providers.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, providers expect {providers.tau}")


# ── Coordinate ascent ─────────────────────────────────────────────────────────

def _best_response(scenario: DemandScenario, spec: UtilitySpec, provider: Provider,
                   offset: np.ndarray, tol: float, crossing_budget: int) -> np.ndarray:
    landscape = SlotLandscape(scenario, spec, provider.policy.slot_seconds, offset=offset)
    choice = sweep_landscape(landscape, provider.price, provider.policy.burst_budget,
                             tol, crossing_budget)
    freed = np.zeros(landscape.tau, dtype=bool)
    freed[list(choice.freed)] = True
    return landscape.usage(choice.cap, freed)


def _burst_only_response(scenario: DemandScenario, spec: UtilitySpec, provider: Provider,
                         offset: np.ndarray) -> np.ndarray:
    """Zero cap, the burst budget spent on the slots the others leave most unserved."""
    landscape = SlotLandscape(scenario, spec, provider.policy.slot_seconds, offset=offset)
    choice = cap_objective(landscape, provider.price, provider.policy.burst_budget, 0.0)
    freed = np.zeros(landscape.tau, dtype=bool)
    freed[list(choice.freed)] = True
    return landscape.usage(0.0, freed)


def _initial_usages(providers: ProviderSet, initial) -> np.ndarray:
    usages = np.array(initial, dtype=float)
    if usages.shape != (len(providers), providers.tau):
        raise ValidationError(f"initial usage has shape {usages.shape}, "
                              f"expected ({len(providers)}, {providers.tau})")
    if not np.all(np.isfinite(usages)) or np.any(usages < 0):
        raise ValidationError("initial usage must be finite and nonnegative")
    return usages


def solve_multi(scenario: DemandScenario, spec: UtilitySpec, providers: ProviderSet,
                rounds_max: int = ROUNDS_MAX, tol: float = ASCENT_TOL,
                golden_tol: float = GOLDEN_TOL, crossing_budget: int = CROSSING_BUDGET,
                anchor: Plan | None = None, initial=None) -> MultiPlan:
    """
    Block coordinate ascent over providers.

    Starts with the whole load on the cheapest provider, then lets every
    provider in turn re-plan against the others' usage. A block update is kept
    only if the joint surplus does not drop, so the surplus after each round
    is nondecreasing. Stops when a round gains less than tol * max(1, |S|).

    Args:
        anchor:  a single-provider plan kept unchanged on the cheapest
                 provider. Every other provider then runs with a zero cap
                 and only spends its burst budget, so whatever demand shows
                 up, the update rule bills them nothing and the anchor's own
                 realized outcome is never undercut.
        initial: (I, tau) usage matrix to start from instead of the
                 cheapest-provider plan; the result is never worse than it.

    Raises:
        ValidationError: bad rounds_max, anchor length or initial matrix.
        InvariantError: the recorded surplus decreased between rounds.
    """
    _check(scenario, providers)
    if rounds_max < 1:
        raise ValidationError("rounds_max must be at least 1")
    if anchor is not None and initial is not None:
        raise ValidationError("pass either an anchor plan or an initial usage matrix, not both")

    start = providers.cheapest()
    if anchor is not None:
        if anchor.tau != providers.tau:
            raise ValidationError(f"anchor plan has {anchor.tau} slots, providers expect {providers.tau}")
        usages = np.zeros((len(providers), providers.tau))
        usages[start] = anchor.planned_usage
    elif initial is not None:
        usages = _initial_usages(providers, initial)
    else:
        usages = np.zeros((len(providers), providers.tau))
        usages[start] = _best_response(scenario, spec, providers[start], usages[start],
                                       golden_tol, crossing_budget)
    surplus = evaluate_multi_surplus(usages, scenario, spec, providers)[0]
    rounds = [surplus]

    for r in range(1, rounds_max + 1):
        before = surplus
        for i, provider in enumerate(providers):
            if anchor is not None and i == start:
                continue
            offset = usages.sum(axis=0) - usages[i]
            proposal = usages.copy()
            if anchor is not None:
                proposal[i] = _burst_only_response(scenario, spec, provider, offset)
            else:
                proposal[i] = _best_response(scenario, spec, provider, offset, golden_tol, crossing_budget)
            candidate = evaluate_multi_surplus(proposal, scenario, spec, providers)[0]
            if candidate >= surplus:
                usages, surplus = proposal, candidate

        rounds.append(surplus)
        if rounds[-1] < rounds[-2] - MONOTONE_SLACK * max(1.0, abs(rounds[-2])):
            raise InvariantError(f"ascent surplus fell from {rounds[-2]!r} to {rounds[-1]!r}")
        log.debug("ascent round %d: surplus=%g", r, surplus)
        if surplus - before < tol * max(1.0, abs(surplus)):
            break

    log.info("ascent finished after %d round(s), surplus=%g", len(rounds) - 1, surplus)
    if anchor is None:
        return _multi_plan(usages, scenario, spec, providers, "ascent", rounds)

    multiplan = _multi_plan(usages, scenario, spec, providers, "anchored_ascent", rounds)
    multiplan.plans[providers[start].provider_id] = anchor
    return multiplan


# ── Exhaustive oracle (two providers) ─────────────────────────────────────────

def solve_multi_oracle(scenario: DemandScenario, spec: UtilitySpec, providers: ProviderSet,
                       tol: float = GOLDEN_TOL, max_tau: int = MULTI_ORACLE_MAX_TAU) -> MultiPlan:
    """
    Exact two-provider reference: every pair of freed subsets, both caps by
    nested golden-section.

    A slot freed by either provider is served in full; every other slot gets
    min(phi_1 + phi_2, max demand), split as provider 1 first. Pairs with the
    same union of freed slots share one cap search.

    Raises:
        SolverGuardError: more than two providers or tau above max_tau.
    """
    _check(scenario, providers)
    if len(providers) != 2:
        raise SolverGuardError(f"the multi-provider oracle handles exactly 2 providers, got {len(providers)}")
    if providers.tau > max_tau:
        raise SolverGuardError(
            f"multi-provider oracle is limited to tau <= {max_tau} (got {providers.tau}); "
            f"use solve_multi or export the MILP instead"
        )

    landscape = SlotLandscape(scenario, spec, providers.slot_seconds)
    tau = landscape.tau
    p1, p2 = providers[0], providers[1]
    top = float(landscape.saturation.max())

    searched: dict[frozenset, tuple[float, float, float]] = {}

    def caps_for(union: frozenset) -> tuple[float, float, float]:
        if union in searched:
            return searched[union]
        capped = np.array([t not in union for t in range(tau)])
        free_value = float(landscape.full[~capped].sum())

        def inner(phi1: float) -> tuple[float, float]:
            def f(phi2: float) -> float:
                values = landscape.values(phi1 + phi2)
                return float(values[capped].sum()) + free_value - p1.price * phi1 - p2.price * phi2
            return golden_section_max(f, 0.0, top, tol)

        phi1, value = golden_section_max(lambda a: inner(a)[1], 0.0, top, tol)
        searched[union] = (value, phi1, inner(phi1)[0])
        return searched[union]

    best = None
    for s1 in itertools.combinations(range(tau), p1.policy.burst_budget):
        for s2 in itertools.combinations(range(tau), p2.policy.burst_budget):
            value, phi1, phi2 = caps_for(frozenset(s1) | frozenset(s2))
            key = (-value, phi1 + phi2, s1, s2)
            if best is None or key < best[0]:
                best = (key, s1, s2, phi1, phi2)

    _, s1, s2, phi1, phi2 = best
    top_demand = landscape.saturation
    usages = np.zeros((2, tau))
    for t in range(tau):
        if t in s1:
            usages[0, t] = top_demand[t]
        elif t in s2:
            usages[1, t] = top_demand[t]
        else:
            total = min(phi1 + phi2, top_demand[t])
            usages[0, t] = min(phi1, total)
            usages[1, t] = total - usages[0, t]

    log.debug("multi oracle: %d cap searches, phi=(%g, %g)", len(searched), phi1, phi2)
    return _multi_plan(usages, scenario, spec, providers, "multi_oracle", [])
