import numpy as np
import pytest

from models.billing import BillingPolicy
from models.utility import UtilitySpec
from processor.demand import DemandScenario


@pytest.fixture
def spec() -> UtilitySpec:
    """Square-root utility on unit-length slots, so trade-offs show at small prices."""
    return UtilitySpec(factor_A=1.0, curvature_a=0.5)


@pytest.fixture
def make_policy():
    def build(tau: int, q: float = 0.75, price: float = 1.0) -> BillingPolicy:
        return BillingPolicy(tau=tau, slot_seconds=1.0, percentile_q=q, price_delta=price)
    return build


@pytest.fixture
def make_scenario():
    """Random scenario with 1..k_max realizations per slot."""
    def build(rng: np.random.Generator, tau: int, k_max: int = 2,
              low: float = 1.0, high: float = 10.0) -> DemandScenario:
        slots = []
        for _ in range(tau):
            k = int(rng.integers(1, k_max + 1))
            demands = rng.uniform(low, high, size=k)
            probs = rng.dirichlet(np.ones(k))
            slots.append([(float(d), float(p)) for d, p in zip(demands, probs)])
        return DemandScenario.from_slots(slots)
    return build
