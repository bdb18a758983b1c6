import math
from dataclasses import dataclass

import numpy as np

from errors import ValidationError

# Sorting must keep the earliest index first among equal samples.
_SORT_KIND = "stable"


@dataclass(frozen=True)
class BillingPolicy:
    """
    Cycle geometry and tariff of one burstable-billing provider.

    A cycle is split into `tau` slots of `slot_seconds` each. The bill keeps the
    ceil(q * tau) smallest samples, takes their maximum and multiplies it by
    `price_delta` ($/Mbps).
    """
    tau: int
    slot_seconds: float = 3600.0
    percentile_q: float = 0.95
    price_delta: float = 0.0

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValidationError(f"tau must be a positive integer, got {self.tau}")
        if not self.slot_seconds > 0:
            raise ValidationError(f"slot_seconds must be > 0, got {self.slot_seconds}")
        if not 0 < self.percentile_q <= 1:
            raise ValidationError(f"percentile_q must lie in (0, 1], got {self.percentile_q}")
        if not self.price_delta >= 0:
            raise ValidationError(f"price_delta must be >= 0, got {self.price_delta}")

    @property
    def kept_count(self) -> int:
        # round() strips float noise such as 0.95 * 20 = 18.999999999999996
        return math.ceil(round(self.percentile_q * self.tau, 9))

    @property
    def burst_budget(self) -> int:
        return self.tau - self.kept_count

    def with_price(self, price_delta: float) -> "BillingPolicy":
        return BillingPolicy(self.tau, self.slot_seconds, self.percentile_q, price_delta)


def as_usage(series, policy: BillingPolicy) -> np.ndarray:
    """
    Validate a usage series against a policy and return it as a float array.

    Raises:
        ValidationError: wrong length, negative or non-finite samples.
    """
    values = np.asarray(series, dtype=float)
    if values.ndim != 1 or values.shape[0] != policy.tau:
        raise ValidationError(
            f"usage series has shape {values.shape}, expected ({policy.tau},)"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError("usage series contains non-finite samples")
    if np.any(values < 0):
        raise ValidationError(f"usage series has a negative sample at slot {int(np.argmin(values)) + 1}")
    return values


# ── Percentile ─────────────────────────────────────────────────────────────────

def burst_budget(policy: BillingPolicy) -> int:
    """Number of samples discarded before the maximum is taken: tau - ceil(q*tau)."""
    return policy.burst_budget


def descending_order(values: np.ndarray) -> np.ndarray:
    """Slot indices from largest to smallest value, earliest index first on ties."""
    return np.argsort(-np.asarray(values, dtype=float), kind=_SORT_KIND)


def percentile_usage(series, policy: BillingPolicy) -> float:
    """
    The canonical 95th percentile usage: drop the top burst_budget samples
    and return the maximum of what remains.

    Examples:
        [1, 2, ..., 20] with q=0.95  → 19
        constant 100 series           → 100
    """
    values = as_usage(series, policy)
    ordered = np.sort(values)[::-1]
    return float(ordered[policy.burst_budget])


def percentile_usage_via_mask(series, policy: BillingPolicy) -> tuple[float, np.ndarray]:
    """
    The same percentile, built as a selection mask.

    rho[t] = 0 on the burst_budget largest samples (earliest first on ties) and
    1 elsewhere; the percentile is then max_t rho[t] * x[t].

    Returns:
        (mu95, rho) with rho an int array of 0/1 summing to ceil(q*tau).
    """
    values = as_usage(series, policy)
    rho = np.ones(policy.tau, dtype=int)
    rho[descending_order(values)[: policy.burst_budget]] = 0
    return float(np.max(rho * values)), rho


def billing_cost(series, policy: BillingPolicy) -> float:
    """Burstable bill of one cycle: price_delta * mu95."""
    return policy.price_delta * percentile_usage(series, policy)
