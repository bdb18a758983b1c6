"""
What happens once the cycle starts and demand is revealed slot by slot.

A plan is never re-solved mid-cycle. Each slot applies a fixed rule:

    freed slot               → serve the exposed demand in full
    capped, demand <= mu95   → serve the exposed demand
    capped, demand >  mu95   → serve mu95(X)

so the bill never exceeds the planned one. simulate_cycle runs every
comparison method against one revealed cycle and normalizes by the Ideal case.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from config import GOLDEN_TOL
from errors import InvariantError, ValidationError
from models.billing import BillingPolicy, percentile_usage
from models.deterministic import solve_deterministic
from models.multi_provider import ProviderSet, solve_multi
from models.plan import MultiPlan, Plan
from models.stochastic import solve_oracle, solve_sweep
from models.utility import UtilitySpec, utility_value
from processor.demand import DemandScenario, ExposedDemand

log = logging.getLogger(__name__)

TINY = 1e-12
IDEAL_SLACK = 1e-9

SSP_METHODS = ("baseline", "ideal", "deterministic", "stochastic")
MSP_METHODS = ("baseline_ssp", "deterministic_ssp", "stochastic_ssp",
               "deterministic_msp", "stochastic_msp", "ideal_msp")
IDEAL_METHODS = ("ideal", "ideal_msp")


# ── Update rule ───────────────────────────────────────────────────────────────

def _exposed_values(exposed, tau: int) -> np.ndarray:
    values = exposed.values if isinstance(exposed, ExposedDemand) else ExposedDemand(exposed).values
    if values.shape[0] != tau:
        raise ValidationError(f"exposed demand has {values.shape[0]} slots, plan has {tau}")
    return values


def update_usage(plan: Plan, exposed, policy: BillingPolicy) -> np.ndarray:
    """
    Updated usage of one provider against the exposed demand.

    mu95 is recomputed from the planned usage by the billing module.

    Examples:
        rho=0                       → D̄
        rho=1, D̄=50,  mu95(X)=80   → 50
        rho=1, D̄=100, mu95(X)=80   → 80
    """
    d = _exposed_values(exposed, plan.tau)
    mu95 = percentile_usage(plan.planned_usage, policy)
    serve_all = (plan.burst_mask == 0) | (d <= mu95)
    return np.where(serve_all, d, mu95)


def update_usage_multi(multiplan: MultiPlan, exposed, providers: ProviderSet) -> np.ndarray:
    """
    The single-provider rule applied to every provider on its own.

    Returns:
        (I, tau) updated usage, rows in provider order.
    """
    if multiplan.provider_ids != providers.ids:
        raise ValidationError(f"plan providers {multiplan.provider_ids} differ from {providers.ids}")
    return np.vstack([
        update_usage(multiplan.plans[p.provider_id], exposed, p.policy) for p in providers
    ])


# ── Realized figures ──────────────────────────────────────────────────────────

def _policies(billing) -> list[BillingPolicy]:
    if isinstance(billing, BillingPolicy):
        return [billing]
    return [p.policy for p in billing]


def realized_cost(updated, billing) -> float:
    policies = _policies(billing)
    rows = np.atleast_2d(np.asarray(updated, dtype=float))
    if rows.shape[0] != len(policies):
        raise ValidationError(f"{rows.shape[0]} usage rows for {len(policies)} providers")
    return float(sum(p.price_delta * percentile_usage(x, p) for p, x in zip(policies, rows)))


def realized_surplus(updated, spec: UtilitySpec, billing, exposed=None) -> float:
    """
    sum_t U(T * sum_i X̄_i[t]) - sum_i price_i * mu95(X̄_i).

    With `exposed`, delivered volume is capped at the exposed demand, so
    several providers serving the same freed slot do not add utility beyond it.

    Args:
        updated: (tau,) series for one provider or (I, tau) matrix.
        billing: a BillingPolicy or a ProviderSet (row order).
    """
    policies = _policies(billing)
    rows = np.atleast_2d(np.asarray(updated, dtype=float))
    total = rows.sum(axis=0)
    if total.shape[0] != policies[0].tau:
        raise ValidationError(f"usage has {total.shape[0]} slots, expected {policies[0].tau}")
    if exposed is not None:
        total = np.minimum(total, _exposed_values(exposed, total.shape[0]))
    net = float(np.sum(utility_value(spec, policies[0].slot_seconds * total)))
    return net - realized_cost(rows, billing)


# ── Cycle comparison ──────────────────────────────────────────────────────────

@dataclass
class MethodOutcome:
    """
    Realized result of one method on one cycle.

    mu95 is the sum over providers of the updated usage's percentile; with a
    single serving provider it is that provider's mu95.
    """
    method: str
    cost: float
    surplus: float
    mu95: float
    planned: np.ndarray          # (I, tau)
    updated: np.ndarray          # (I, tau)
    normalized_surplus: float = float("nan")


@dataclass
class CycleReport:
    cycle: int
    normalization: str
    exposed: np.ndarray
    outcomes: dict[str, MethodOutcome] = field(default_factory=dict)

    @property
    def methods(self) -> list[str]:
        return list(self.outcomes)

    def normalized(self, method: str) -> float:
        return self.outcomes[method].normalized_surplus

    def rows(self) -> list[dict]:
        return [
            {"cycle": self.cycle, "method": o.method, "cost": o.cost, "surplus": o.surplus,
             "mu95": o.mu95, "normalized_surplus": o.normalized_surplus}
            for o in self.outcomes.values()
        ]

    def to_json(self) -> dict:
        return {
            "cycle": self.cycle,
            "normalization": self.normalization,
            "methods": [{k: v for k, v in row.items() if k != "cycle"} for row in self.rows()],
        }


@dataclass(frozen=True)
class PlanningSetup:
    """Everything simulate_cycle needs besides the demand."""
    spec: UtilitySpec
    providers: ProviderSet
    solver: str = "sweep"
    tol: float = GOLDEN_TOL

    def __post_init__(self):
        if self.solver not in ("sweep", "oracle"):
            raise ValidationError(f"unknown solver {self.solver!r}, expected sweep or oracle")

    @property
    def serving(self) -> int:
        """Provider used by the single-provider methods."""
        return self.providers.cheapest()

    def single(self) -> ProviderSet:
        return ProviderSet([self.providers[self.serving]])

    def solve_single(self, scenario: DemandScenario, exact_demand: bool) -> Plan:
        policy = self.providers[self.serving].policy
        if exact_demand or scenario.is_deterministic:
            return solve_deterministic(scenario, self.spec, policy, self.tol)
        if self.solver == "oracle":
            return solve_oracle(scenario, self.spec, policy, self.tol)
        return solve_sweep(scenario, self.spec, policy, self.tol)


def _single_rows(setup: PlanningSetup, series: np.ndarray) -> np.ndarray:
    rows = np.zeros((len(setup.providers), series.shape[0]))
    rows[setup.serving] = series
    return rows


def _outcome(method: str, planned: np.ndarray, updated: np.ndarray, truth: ExposedDemand,
             setup: PlanningSetup) -> MethodOutcome:
    providers = setup.providers
    mu95 = float(sum(percentile_usage(x, p.policy) for p, x in zip(providers, updated)))
    return MethodOutcome(
        method=method,
        cost=realized_cost(updated, providers),
        surplus=realized_surplus(updated, setup.spec, providers, exposed=truth),
        mu95=mu95,
        planned=planned,
        updated=updated,
    )


class _CyclePlans:
    """Single-provider plans of one cycle, solved once and shared by SSP and MSP methods."""

    def __init__(self, truth: ExposedDemand, forecast: DemandScenario, setup: PlanningSetup):
        self.truth = truth
        self.forecast = forecast
        self.setup = setup
        self._plans: dict[str, Plan] = {}

    def scenario(self, kind: str) -> DemandScenario:
        return {
            "ideal": self.truth.scenario(),
            "deterministic": self.forecast.mean_scenario(),
            "stochastic": self.forecast,
        }[kind]

    def single(self, kind: str) -> Plan:
        if kind not in self._plans:
            self._plans[kind] = self.setup.solve_single(self.scenario(kind), exact_demand=kind != "stochastic")
        return self._plans[kind]


def _run_method(method: str, plans: _CyclePlans) -> MethodOutcome:
    setup, truth = plans.setup, plans.truth
    policy = setup.providers[setup.serving].policy

    if method in ("baseline", "baseline_ssp"):
        planned = updated = _single_rows(setup, truth.values)
    elif method in ("ideal", "deterministic", "stochastic", "deterministic_ssp", "stochastic_ssp"):
        plan = plans.single(method.removesuffix("_ssp"))
        planned = _single_rows(setup, plan.planned_usage)
        updated = _single_rows(setup, update_usage(plan, truth, policy))
    elif method in ("deterministic_msp", "stochastic_msp"):
        kind = method.removesuffix("_msp")
        multiplan = solve_multi(plans.scenario(kind), setup.spec, setup.providers,
                                golden_tol=setup.tol, anchor=plans.single(kind))
        planned = np.vstack([p.planned_usage for p in multiplan.plans.values()])
        updated = update_usage_multi(multiplan, truth, setup.providers)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return _outcome(method, planned, updated, truth, setup)


def _run_ideal_multi(plans: _CyclePlans, starts: list[np.ndarray]) -> MethodOutcome:
    """
    Ideal-MSP: ascent on the true demand from the cheapest-provider start and
    from every schedule the other methods realized.

    Each start is a usage matrix within the true demand, so its value under the
    truth equals that method's realized surplus; the ascent never lowers it and
    the update rule never lowers the value of a plan within the demand.
    """
    setup, truth = plans.setup, plans.truth
    scenario = truth.scenario()
    best = solve_multi(scenario, setup.spec, setup.providers, golden_tol=setup.tol)
    for start in starts:
        candidate = solve_multi(scenario, setup.spec, setup.providers, golden_tol=setup.tol, initial=start)
        if candidate.expected_surplus > best.expected_surplus:
            best = candidate
    planned = np.vstack([p.planned_usage for p in best.plans.values()])
    return _outcome("ideal_msp", planned, update_usage_multi(best, truth, setup.providers), truth, setup)


def _check_ideal_dominance(report: CycleReport) -> None:
    base = report.outcomes[report.normalization].surplus
    family = MSP_METHODS if report.normalization == "ideal_msp" else SSP_METHODS
    limit = base + IDEAL_SLACK * max(1.0, abs(base))
    for outcome in report.outcomes.values():
        if outcome.method in family and outcome.surplus > limit:
            raise InvariantError(f"cycle {report.cycle}: {outcome.method} surplus {outcome.surplus!r} "
                                 f"exceeds {report.normalization} surplus {base!r}")


def simulate_cycle(truth: ExposedDemand, forecast: DemandScenario, setup: PlanningSetup,
                   methods=SSP_METHODS, cycle: int = 0) -> CycleReport:
    """
    Run each method on one revealed cycle and normalize by the Ideal surplus.

    Baseline serves the exposed demand on demand. Ideal plans with the true
    demand. Deterministic plans with the mean of the forecast, Stochastic with
    the full forecast distribution; both are then updated against the truth.
    The *_msp methods keep the matching single-provider plan on the cheapest
    provider and add the other providers' burst slots; Ideal-MSP runs the full
    ascent on the truth.

    Raises:
        ValidationError: unknown method, no Ideal method, or mismatched lengths.
        InvariantError: a method beat the Ideal normalization base.
    """
    methods = tuple(methods)
    ideal = [m for m in methods if m in IDEAL_METHODS]
    if not ideal:
        raise ValidationError(f"method list {methods} needs an ideal method for normalization")
    unknown = set(methods) - set(SSP_METHODS) - set(MSP_METHODS)
    if unknown:
        raise ValidationError(f"unknown method(s) {sorted(unknown)}")
    if truth.tau != setup.providers.tau or forecast.tau != truth.tau:
        raise ValidationError(
            f"cycle lengths disagree: truth {truth.tau}, forecast {forecast.tau}, "
            f"providers {setup.providers.tau}"
        )

    plans = _CyclePlans(truth, forecast, setup)
    outcomes = {m: _run_method(m, plans) for m in methods if m != "ideal_msp"}
    if "ideal_msp" in methods:
        starts = [o.updated for o in outcomes.values()]
        starts.append(_single_rows(setup, plans.single("ideal").planned_usage))
        outcomes["ideal_msp"] = _run_ideal_multi(plans, starts)

    report = CycleReport(cycle=cycle, normalization=ideal[0], exposed=truth.values,
                         outcomes={m: outcomes[m] for m in methods})
    _check_ideal_dominance(report)

    base = report.outcomes[ideal[0]].surplus
    for outcome in report.outcomes.values():
        outcome.normalized_surplus = outcome.surplus / base if abs(base) > TINY else float("nan")

    log.debug("cycle %d: %s", cycle, {m: round(o.normalized_surplus, 4)
                                      for m, o in report.outcomes.items()})
    return report
