import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from errors import InvariantError, ValidationError
from models.billing import BillingPolicy, as_usage, percentile_usage_via_mask
from models.utility import UtilitySpec, utility_value
from processor.demand import DemandScenario

CHECK_TOL = 1e-9


def expected_net_utility(usage: np.ndarray, scenario: DemandScenario,
                         spec: UtilitySpec, slot_seconds: float) -> float:
    """sum_t sum_k pi_k,t * U(T * min(X[t], D_k[t]))."""
    delivered = slot_seconds * np.minimum(usage[:, None], scenario.demands)
    return float(np.sum(scenario.probs * utility_value(spec, delivered)))


def evaluate_expected_surplus(usage, scenario: DemandScenario, spec: UtilitySpec,
                              policy: BillingPolicy) -> tuple[float, float, float]:
    """
    Expected surplus of a planned usage series under a scenario.

    The cost is always recomputed from the usage by the billing module.

    Returns:
        (surplus, cost, net_utility)
    """
    x = as_usage(usage, policy)
    if scenario.tau != policy.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, policy expects {policy.tau}")
    mu95, _ = percentile_usage_via_mask(x, policy)
    cost = policy.price_delta * mu95
    net = expected_net_utility(x, scenario, spec, policy.slot_seconds)
    return net - cost, cost, net


@dataclass
class Plan:
    """
    Planned usage of one provider for one cycle.

    burst_mask and cap_phi are always derived from planned_usage through the
    billing module, so cap_phi == max(rho * X) == mu95(X) and
    expected_cost == price * mu95(X) hold on every Plan built by `from_usage`.
    """
    planned_usage: np.ndarray
    burst_mask: np.ndarray
    cap_phi: float
    expected_cost: float
    expected_surplus: float
    solver_tag: str
    expected_utility: float = 0.0

    @classmethod
    def from_usage(cls, usage, scenario: DemandScenario, spec: UtilitySpec,
                   policy: BillingPolicy, solver_tag: str) -> "Plan":
        x = as_usage(usage, policy)
        mu95, rho = percentile_usage_via_mask(x, policy)
        surplus, cost, net = evaluate_expected_surplus(x, scenario, spec, policy)
        return cls(
            planned_usage=x,
            burst_mask=rho,
            cap_phi=mu95,
            expected_cost=cost,
            expected_surplus=surplus,
            solver_tag=solver_tag,
            expected_utility=net,
        )

    @property
    def tau(self) -> int:
        return self.planned_usage.shape[0]

    def check(self, policy: BillingPolicy) -> None:
        """Raise InvariantError unless the mask, cap and cost agree with the usage."""
        x = self.planned_usage
        if int(self.burst_mask.sum()) != policy.kept_count:
            raise InvariantError(
                f"mask keeps {int(self.burst_mask.sum())} slots, expected {policy.kept_count}"
            )
        if np.any(x < 0):
            raise InvariantError("negative planned usage")
        scale = CHECK_TOL * max(1.0, abs(self.cap_phi))
        if np.any(x[self.burst_mask == 1] > self.cap_phi + scale):
            raise InvariantError("a capped slot exceeds cap_phi")
        if abs(float(np.max(self.burst_mask * x)) - self.cap_phi) > scale:
            raise InvariantError("cap_phi differs from max(rho * X)")
        mu95, _ = percentile_usage_via_mask(x, policy)
        if abs(policy.price_delta * mu95 - self.expected_cost) > CHECK_TOL * max(1.0, abs(self.expected_cost)):
            raise InvariantError("expected_cost differs from the recomputed bill")

    # ── Persistence ───────────────────────────────────────────────────────────

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "planned_usage_mbps": [float(v) for v in self.planned_usage],
            "burst_mask": [int(r) for r in self.burst_mask],
            "cap_phi_mbps": float(self.cap_phi),
            "expected_cost": float(self.expected_cost),
            "expected_surplus": float(self.expected_surplus),
            "solver": self.solver_tag,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Plan":
        try:
            usage = np.asarray(payload["planned_usage_mbps"], dtype=float)
            mask = np.asarray(payload["burst_mask"], dtype=int)
            plan = cls(
                planned_usage=usage,
                burst_mask=mask,
                cap_phi=float(payload["cap_phi_mbps"]),
                expected_cost=float(payload["expected_cost"]),
                expected_surplus=float(payload["expected_surplus"]),
                solver_tag=str(payload["solver"]),
            )
            tau = int(payload["tau"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed plan JSON: {exc}") from exc
        if tau != usage.shape[0] or mask.shape != usage.shape:
            raise ValidationError("plan JSON lengths disagree with tau")
        return plan

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        return path


@dataclass
class MultiPlan:
    """Per-provider plans plus the aggregate figures of the joint objective."""
    plans: dict[str, Plan]
    expected_cost: float
    expected_surplus: float
    expected_utility: float
    solver_tag: str
    rounds: list[float] = field(default_factory=list)   # surplus after each ascent round

    @property
    def provider_ids(self) -> list[str]:
        return list(self.plans)

    def total_usage(self) -> np.ndarray:
        return np.sum([p.planned_usage for p in self.plans.values()], axis=0)

    def to_json(self) -> dict:
        return {
            "providers": [{"id": pid, **plan.to_json()} for pid, plan in self.plans.items()],
            "expected_cost": float(self.expected_cost),
            "expected_surplus": float(self.expected_surplus),
            "expected_utility": float(self.expected_utility),
            "solver": self.solver_tag,
        }

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")
        return path
