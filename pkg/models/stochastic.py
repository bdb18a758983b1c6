"""
Expected-surplus maximization under per-slot demand distributions.

The product rho[t] * X[t] in the percentile bill is removed by optimizing the
cap phi directly: for a fixed cap every capped slot uses min(max demand, phi),
and the burst budget is spent on the slots where lifting the cap gains most.
Two solvers share that view:

    solve_sweep   scans the breakpoints of the per-slot utilities and refines
                  every promising interval by golden-section search
    solve_oracle  enumerates every freed-slot subset (small tau only)

Both return the same optimum on oracle-sized instances. Large instances can be
certified externally through the MILP export in models.milp.
"""
import heapq
import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from config import CROSSING_BUDGET, GOLDEN_TOL, ORACLE_MAX_TAU
from errors import InvariantError, SolverGuardError, ValidationError
from models.billing import BillingPolicy, descending_order
from models.landscape import SlotLandscape
from models.plan import Plan
from models.search import golden_section_max
from models.utility import UtilitySpec, utility_inverse, utility_value
from processor.demand import DemandScenario

log = logging.getLogger(__name__)

TINY = 1e-12
RESELECT_ROUNDS = 4


@dataclass(frozen=True)
class CapChoice:
    """A cap, the freed slots that go with it and the objective they reach."""
    value: float
    cap: float
    freed: tuple[int, ...]       # sorted slot indices

    def key(self, tau: int) -> tuple:
        # Larger value first, then smaller cap, then lexicographically smaller mask.
        freed = set(self.freed)
        mask = tuple(0 if t in freed else 1 for t in range(tau))
        return (-self.value, self.cap, mask)


def _better(candidate: CapChoice, best: CapChoice | None, tau: int) -> bool:
    return best is None or candidate.key(tau) < best.key(tau)


# ── Objective pieces ──────────────────────────────────────────────────────────

def top_gain_slots(gains: np.ndarray, count: int) -> np.ndarray:
    """Indices of the `count` largest gains, earliest index first on ties."""
    if count <= 0:
        return np.array([], dtype=int)
    return np.sort(descending_order(gains)[:count])


def cap_objective(landscape: SlotLandscape, price: float, burst: int, cap: float) -> CapChoice:
    """F(cap): capped slots at the cap, the best `burst` slots freed."""
    values = landscape.values(cap)
    gains = landscape.full - values
    freed = top_gain_slots(gains, burst)
    value = float(values.sum() + gains[freed].sum() - price * cap)
    return CapChoice(value, cap, tuple(int(t) for t in freed))


def frozen_objective(landscape: SlotLandscape, price: float, freed: tuple[int, ...]):
    """Concave F_S(cap) for a fixed freed set S."""
    is_free = np.zeros(landscape.tau, dtype=bool)
    is_free[list(freed)] = True
    free_value = float(landscape.full[is_free].sum())

    def objective(cap: float) -> float:
        values = landscape.values(cap)
        return float(values[~is_free].sum()) + free_value - price * cap

    return objective


def maximize_frozen(landscape: SlotLandscape, price: float, freed: tuple[int, ...],
                    lo: float, hi: float, tol: float) -> CapChoice:
    cap, value = golden_section_max(frozen_objective(landscape, price, freed), lo, hi, tol)
    return CapChoice(value, cap, freed)


# ── Bounds ─────────────────────────────────────────────────────────────────────

def interval_bound(landscape: SlotLandscape, price: float, burst: int,
                   lo: float, hi: float) -> float:
    """
    Upper bound of F on [lo, hi]: utilities at hi, cost at lo, gains at lo.

    Valid because G_t is nondecreasing and every gain is nonincreasing in the cap.
    """
    gains_lo = landscape.gains(lo)
    top = top_gain_slots(gains_lo, burst)
    return float(landscape.values(hi).sum() - price * lo + gains_lo[top].sum())


def surplus_upper_bound(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
                        landscape: SlotLandscape | None = None) -> float:
    """
    Upper bound on the optimal expected surplus, the maximum of interval
    bounds over consecutive breakpoints.

    Used as the upper side of near_gap when an enumeration is cut short.
    """
    landscape = landscape or SlotLandscape(scenario, spec, policy.slot_seconds)
    points = landscape.breakpoints()
    price, burst = policy.price_delta, policy.burst_budget
    bound = cap_objective(landscape, price, burst, float(points[0])).value
    for lo, hi in zip(points[:-1], points[1:]):
        bound = max(bound, interval_bound(landscape, price, burst, float(lo), float(hi)))
    return bound + _surplus_offset(landscape)


def _surplus_offset(landscape: SlotLandscape) -> float:
    # Landscape values are relative to G_t(0); add the constant back for surplus figures.
    return float(landscape.base.sum())


def near_gap(lower_bound: float, upper_bound: float) -> float:
    """
    Relative optimality gap (upper - lower) / max(|upper|, tiny).

    A gap of 0.05 guarantees the lower bound is within 95% of the optimum.

    Raises:
        InvariantError: upper_bound < lower_bound, or non-finite bounds.
    """
    if not (math.isfinite(lower_bound) and math.isfinite(upper_bound)):
        raise InvariantError("near_gap needs finite bounds")
    if upper_bound < lower_bound:
        raise InvariantError(f"upper bound {upper_bound!r} is below lower bound {lower_bound!r}")
    return (upper_bound - lower_bound) / max(abs(upper_bound), TINY)


# ── Sweep solver ───────────────────────────────────────────────────────────────

def _crossing_caps(landscape: SlotLandscape, lo: float, hi: float, budget: int) -> list[float] | None:
    """
    Caps inside (lo, hi) where two gain lines cross, or None when the pair
    count exceeds the budget (or offsets break the shared-u structure).
    """
    if landscape.has_offset:
        return None
    alpha, beta = landscape.gain_lines(hi)
    active = np.flatnonzero(beta > 0)
    n = active.size
    if n * (n - 1) // 2 > budget:
        return None
    if n < 2:
        return []

    spec, seconds = landscape.spec, landscape.slot_seconds
    u_lo = utility_value(spec, seconds * lo)
    u_hi = utility_value(spec, seconds * hi)

    i, j = np.triu_indices(n, k=1)
    a_s, a_t = alpha[active[i]], alpha[active[j]]
    b_s, b_t = beta[active[i]], beta[active[j]]
    differs = b_s != b_t
    u_cross = (a_s[differs] - a_t[differs]) / (b_s[differs] - b_t[differs])
    inside = u_cross[(u_cross > u_lo) & (u_cross < u_hi)]

    caps = sorted({utility_inverse(spec, float(u)) / seconds for u in inside})
    return [c for c in caps if lo < c < hi]


def _refine_interval(landscape: SlotLandscape, price: float, burst: int,
                     lo: float, hi: float, tol: float, budget: int) -> list[CapChoice]:
    """Best frozen-set maxima inside one breakpoint interval."""
    tau = landscape.tau
    crossings = _crossing_caps(landscape, lo, hi, budget)

    if crossings is not None:
        # Exact: the top-gain ordering is constant between consecutive crossings.
        edges = [lo, *crossings, hi]
        runs: list[tuple[tuple[int, ...], float, float]] = []
        for a, b in zip(edges[:-1], edges[1:]):
            freed = cap_objective(landscape, price, burst, 0.5 * (a + b)).freed
            if runs and runs[-1][0] == freed:
                runs[-1] = (freed, runs[-1][1], b)
            else:
                runs.append((freed, a, b))
        return [maximize_frozen(landscape, price, freed, a, b, tol) for freed, a, b in runs]

    # Heuristic: endpoint and midpoint selections, then re-select at each optimum.
    seeds = {
        cap_objective(landscape, price, burst, lo).freed,
        cap_objective(landscape, price, burst, hi).freed,
        cap_objective(landscape, price, burst, 0.5 * (lo + hi)).freed,
    }
    found: list[CapChoice] = []
    tried: set[tuple[int, ...]] = set()
    queue = sorted(seeds)
    for _ in range(RESELECT_ROUNDS * len(seeds)):
        if not queue:
            break
        freed = queue.pop(0)
        if freed in tried:
            continue
        tried.add(freed)
        choice = maximize_frozen(landscape, price, freed, lo, hi, tol)
        found.append(choice)
        reselected = cap_objective(landscape, price, burst, choice.cap).freed
        if reselected not in tried:
            queue.append(reselected)
    log.debug("interval [%g, %g]: %d frozen sets refined heuristically", lo, hi, len(tried))
    return found


def sweep_landscape(landscape: SlotLandscape, price: float, burst: int,
                    tol: float = GOLDEN_TOL, crossing_budget: int = CROSSING_BUDGET) -> CapChoice:
    """
    Maximize F(cap) = sum_t G_t(cap) - price * cap + top-`burst` gains(cap).

    Steps:
        1. score every breakpoint (0 and each realization) exactly
        2. skip intervals whose upper bound cannot beat the incumbent
        3. refine the rest with golden-section on frozen freed sets
    """
    tau = landscape.tau
    points = landscape.breakpoints()

    best: CapChoice | None = None
    for cap in points:
        choice = cap_objective(landscape, price, burst, float(cap))
        if _better(choice, best, tau):
            best = choice

    if burst == 0:
        choice = maximize_frozen(landscape, price, (), 0.0, float(points[-1]), tol)
        return choice if _better(choice, best, tau) else best

    # Visit intervals by decreasing bound so the incumbent tightens early.
    bounds = [
        (-interval_bound(landscape, price, burst, float(lo), float(hi)), float(lo), float(hi))
        for lo, hi in zip(points[:-1], points[1:])
    ]
    heapq.heapify(bounds)
    refined = 0
    while bounds:
        neg_bound, lo, hi = heapq.heappop(bounds)
        slack = tol * max(1.0, abs(best.value))
        if -neg_bound <= best.value + slack:
            break
        refined += 1
        for choice in _refine_interval(landscape, price, burst, lo, hi, tol, crossing_budget):
            if _better(choice, best, tau):
                best = choice

    log.debug("sweep: %d breakpoints, %d intervals refined, cap=%g, value=%g",
              len(points), refined, best.cap, best.value)
    return best


def _plan_from_choice(choice: CapChoice, landscape: SlotLandscape, scenario: DemandScenario,
                      spec: UtilitySpec, policy: BillingPolicy, tag: str) -> Plan:
    freed = np.zeros(landscape.tau, dtype=bool)
    freed[list(choice.freed)] = True
    usage = landscape.usage(choice.cap, freed)
    return Plan.from_usage(usage, scenario, spec, policy, solver_tag=tag)


def _check_instance(scenario: DemandScenario, policy: BillingPolicy) -> None:
    if scenario.tau != policy.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, policy expects {policy.tau}")


def solve_sweep(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
                tol: float = GOLDEN_TOL, crossing_budget: int = CROSSING_BUDGET) -> Plan:
    """
    Maximize the expected surplus of one provider by sweeping the cap.

    Exact whenever every interval is refined through gain crossings (the
    pair count stays within crossing_budget); otherwise each interval is
    refined from its endpoint and midpoint selections.
    """
    _check_instance(scenario, policy)
    landscape = SlotLandscape(scenario, spec, policy.slot_seconds)
    choice = sweep_landscape(landscape, policy.price_delta, policy.burst_budget, tol, crossing_budget)
    return _plan_from_choice(choice, landscape, scenario, spec, policy, "sweep")


# ── Exhaustive oracle ─────────────────────────────────────────────────────────

def _subsets(landscape: SlotLandscape, burst: int):
    """Every freed set of size `burst`, the largest-saturation guess first."""
    first = tuple(int(t) for t in top_gain_slots(landscape.saturation, burst))
    yield first
    for combo in itertools.combinations(range(landscape.tau), burst):
        if combo != first:
            yield combo


def oracle_landscape(landscape: SlotLandscape, price: float, burst: int,
                     tol: float = GOLDEN_TOL, stop_at_gap: float | None = None,
                     upper_bound: float | None = None) -> tuple[CapChoice, int]:
    """
    Best CapChoice over every freed subset, each cap found by golden-section.

    Returns:
        (choice, subsets_scored)
    """
    tau = landscape.tau
    best: CapChoice | None = None
    scored = 0
    for freed in _subsets(landscape, burst):
        capped = np.ones(tau, dtype=bool)
        capped[list(freed)] = False
        hi = float(landscape.saturation[capped].max()) if capped.any() else 0.0
        choice = maximize_frozen(landscape, price, freed, 0.0, hi, tol)
        scored += 1
        if _better(choice, best, tau):
            best = choice
        if stop_at_gap is not None and upper_bound is not None:
            if near_gap(best.value, max(upper_bound, best.value)) <= stop_at_gap:
                break
    return best, scored


def solve_oracle(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
                 tol: float = GOLDEN_TOL, stop_at_gap: float | None = None,
                 max_tau: int = ORACLE_MAX_TAU) -> Plan:
    """
    Exact reference: enumerate every freed-slot subset of size burst_budget.

    Args:
        stop_at_gap: stop once near_gap(best, upper bound) falls to this ratio
                     (0.05 guarantees at least 95% of the optimum).

    Raises:
        SolverGuardError: tau above max_tau.
    """
    _check_instance(scenario, policy)
    if scenario.tau > max_tau:
        raise SolverGuardError(
            f"oracle enumerates every freed subset and is limited to tau <= {max_tau} "
            f"(got {scenario.tau}); use the sweep solver or export the MILP instead"
        )
    landscape = SlotLandscape(scenario, spec, policy.slot_seconds)
    upper = None
    if stop_at_gap is not None:
        upper = surplus_upper_bound(scenario, spec, policy, landscape) - _surplus_offset(landscape)

    choice, scored = oracle_landscape(landscape, policy.price_delta, policy.burst_budget,
                                      tol, stop_at_gap, upper)
    log.debug("oracle: %d of %d subsets scored", scored,
              math.comb(scenario.tau, policy.burst_budget))
    return _plan_from_choice(choice, landscape, scenario, spec, policy, "oracle")
