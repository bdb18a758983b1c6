import logging

import numpy as np

from config import GOLDEN_TOL
from errors import ValidationError
from models.billing import BillingPolicy, as_usage, descending_order
from models.plan import Plan
from models.search import golden_section_max
from models.utility import UtilitySpec, utility_value
from processor.demand import DemandScenario

log = logging.getLogger(__name__)


def select_free_slots(demand, policy: BillingPolicy) -> np.ndarray:
    """
    Burst mask of the deterministic optimum: rho = 0 on the burst_budget
    largest demands (earliest index first on ties), 1 elsewhere.

    Examples:
        D = 1..20, q = 0.95 → rho = 0 only at the slot holding 20
        tau = 19, q = 0.95  → every rho = 1
    """
    d = as_usage(demand, policy)
    rho = np.ones(policy.tau, dtype=int)
    rho[descending_order(d)[: policy.burst_budget]] = 0
    return rho


def cap_surplus(demand: np.ndarray, rho: np.ndarray, spec: UtilitySpec,
                policy: BillingPolicy):
    """
    g(mu) = sum_free U(T D) + sum_capped U(T min(D, mu)) - price * mu.

    Concave in mu since every term is concave and the cost is linear.
    """
    seconds = policy.slot_seconds
    free_value = float(np.sum(utility_value(spec, seconds * demand[rho == 0])))
    capped = demand[rho == 1]

    def g(mu: float) -> float:
        capped_value = float(np.sum(utility_value(spec, seconds * np.minimum(capped, mu))))
        return free_value + capped_value - policy.price_delta * mu

    return g


def solve_deterministic(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
                        tol: float = GOLDEN_TOL) -> Plan:
    """
    Exact optimum for a single-realization forecast.

    The biggest demands are served in full on the free slots; every other slot
    gets min(D, mu*) where mu* maximizes the concave cap surplus g.

    Raises:
        ValidationError: scenario with more than one realization in some slot.
    """
    if not scenario.is_deterministic:
        raise ValidationError("solve_deterministic needs exactly one realization per slot")
    if scenario.tau != policy.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, policy expects {policy.tau}")

    demand = scenario.demands[:, 0]
    rho = select_free_slots(demand, policy)
    capped = demand[rho == 1]
    hi = float(capped.max()) if capped.size else 0.0

    mu, value = golden_section_max(cap_surplus(demand, rho, spec, policy), 0.0, hi, tol)
    usage = np.where(rho == 0, demand, np.minimum(demand, mu))
    log.debug("deterministic: %d free slots, cap=%g, g=%g", policy.burst_budget, mu, value)
    return Plan.from_usage(usage, scenario, spec, policy, solver_tag="deterministic")
