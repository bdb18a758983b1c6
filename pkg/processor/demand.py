import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from collector.trace import Trace
from errors import SolverGuardError, ValidationError

PROB_TOL = 1e-9


class DemandScenario:
    """
    Per-slot finite demand distributions {(D_k[t], pi_k,t)}.

    Stored as two padded (tau, K) arrays; a slot with fewer realizations than K
    carries zero-probability padding, which every consumer ignores because the
    padding contributes pi * f(0) = 0. A deterministic forecast is simply the
    K = 1 case.

    Internal structure (tau=2, K=2):
        demands = [[4, 8], [5, 0]]
        probs   = [[.5, .5], [1, 0]]
        counts  = [2, 1]
    """

    def __init__(self, demands, probs, counts=None):
        demands = np.atleast_2d(np.asarray(demands, dtype=float))
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        if demands.shape != probs.shape or demands.shape[0] < 1:
            raise ValidationError(
                f"demand and probability arrays disagree: {demands.shape} vs {probs.shape}"
            )
        if not (np.all(np.isfinite(demands)) and np.all(np.isfinite(probs))):
            raise ValidationError("scenario contains non-finite values")
        if np.any(demands < 0):
            t = int(np.argwhere(demands < 0)[0][0])
            raise ValidationError(f"negative demand at slot {t + 1}")
        if np.any(probs < 0):
            raise ValidationError("negative probability in scenario")

        sums = probs.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > PROB_TOL)
        if bad.size:
            t = int(bad[0])
            raise ValidationError(f"probabilities of slot {t + 1} sum to {sums[t]!r}, expected 1")

        if counts is None:
            counts = np.full(demands.shape[0], demands.shape[1], dtype=int)
        self.demands = demands
        self.probs = probs
        self.counts = np.asarray(counts, dtype=int)
        if np.any(self.counts < 1):
            raise ValidationError("every slot needs at least one realization")

    # ── Constructors ──────────────────────────────────────────────────────────

    @classmethod
    def from_slots(cls, slots: Sequence[Sequence[tuple[float, float]]]) -> "DemandScenario":
        """Build from a list (one entry per slot) of (demand_mbps, prob) pairs."""
        if not slots:
            raise ValidationError("scenario needs at least one slot")
        width = max(len(s) for s in slots)
        demands = np.zeros((len(slots), width))
        probs = np.zeros((len(slots), width))
        counts = []
        for t, slot in enumerate(slots):
            if not slot:
                raise ValidationError(f"slot {t + 1} has no realizations")
            for k, (d, p) in enumerate(slot):
                demands[t, k] = d
                probs[t, k] = p
            counts.append(len(slot))
        return cls(demands, probs, counts)

    @classmethod
    def deterministic(cls, demand) -> "DemandScenario":
        demand = np.asarray(demand, dtype=float)
        if demand.ndim != 1:
            raise ValidationError("deterministic demand must be a vector")
        return cls(demand[:, None], np.ones((demand.shape[0], 1)))

    # ── Views ─────────────────────────────────────────────────────────────────

    @property
    def tau(self) -> int:
        return self.demands.shape[0]

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all(self.counts == 1))

    @property
    def realization_count(self) -> int:
        return int(self.counts.sum())

    def slot(self, t: int) -> list[tuple[float, float]]:
        """Realizations of slot t (0-based) as (demand, prob) pairs."""
        k = self.counts[t]
        return [(float(d), float(p)) for d, p in zip(self.demands[t, :k], self.probs[t, :k])]

    def expected(self) -> np.ndarray:
        """Probability-weighted mean demand per slot."""
        return np.sum(self.demands * self.probs, axis=1)

    def max_demand(self) -> np.ndarray:
        """Largest realization per slot (padding excluded)."""
        masked = np.where(self._valid(), self.demands, -np.inf)
        return masked.max(axis=1)

    def mean_scenario(self) -> "DemandScenario":
        return DemandScenario.deterministic(self.expected())

    def collapsed(self) -> "DemandScenario":
        """Merge equal realizations within each slot, summing their probabilities."""
        slots = []
        for t in range(self.tau):
            merged: dict[float, float] = {}
            for d, p in self.slot(t):
                merged[d] = merged.get(d, 0.0) + p
            slots.append(sorted(merged.items()))
        return DemandScenario.from_slots(slots)

    def _valid(self) -> np.ndarray:
        return np.arange(self.demands.shape[1])[None, :] < self.counts[:, None]

    # ── Persistence ───────────────────────────────────────────────────────────

    def to_json(self) -> dict:
        return {
            "tau": self.tau,
            "slots": [
                {"realizations": [{"demand_mbps": d, "prob": p} for d, p in self.slot(t)]}
                for t in range(self.tau)
            ],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DemandScenario":
        try:
            slots = [
                [(float(r["demand_mbps"]), float(r["prob"])) for r in slot["realizations"]]
                for slot in payload["slots"]
            ]
            tau = int(payload["tau"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed scenario JSON: {exc}") from exc
        if tau != len(slots):
            raise ValidationError(f"scenario declares tau={tau} but lists {len(slots)} slots")
        return cls.from_slots(slots)

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "DemandScenario":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
        except OSError as exc:
            raise ValidationError(f"{path}: cannot read ({exc})") from exc
        return cls.from_json(payload)


@dataclass(frozen=True)
class ExposedDemand:
    """Demand actually revealed slot by slot during a cycle (Mbps)."""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValidationError("exposed demand must be a non-empty vector")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("exposed demand must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def tau(self) -> int:
        return self.values.shape[0]

    def scenario(self) -> DemandScenario:
        return DemandScenario.deterministic(self.values)


# ── Cycles ────────────────────────────────────────────────────────────────────

def slice_cycles(trace: Trace, tau: int) -> list[np.ndarray]:
    """
    Cut a trace into consecutive, non-overlapping cycles of tau slots, in Mbps.

    A trailing partial cycle is dropped.

    Examples:
        2016 samples, tau=672 → 3 cycles
        700 samples,  tau=672 → 1 cycle (28 samples dropped)
    """
    if tau < 1:
        raise ValidationError(f"tau must be positive, got {tau}")
    n = len(trace.values)
    if n < tau:
        raise ValidationError(f"trace has {n} samples, fewer than one cycle of {tau}")

    scaled = np.asarray(trace.values, dtype=float) * trace.unit_scale
    return [scaled[c * tau:(c + 1) * tau].copy() for c in range(n // tau)]


# ── Forecasting ───────────────────────────────────────────────────────────────

class Forecaster(Protocol):
    """Anything that turns past cycles (oldest first) into a scenario."""

    history: int

    def forecast(self, cycles: Sequence[np.ndarray]) -> DemandScenario: ...


def _check_pair(prev1, prev2) -> tuple[np.ndarray, np.ndarray]:
    d1 = np.asarray(prev1, dtype=float)
    d2 = np.asarray(prev2, dtype=float)
    if d1.shape != d2.shape or d1.ndim != 1:
        raise ValidationError(f"history cycles differ in shape: {d1.shape} vs {d2.shape}")
    return d1, d2


def forecast_deterministic(prev1, prev2) -> DemandScenario:
    """D[t] = 0.5 * D1[t] + 0.5 * D2[t], a single realization per slot."""
    d1, d2 = _check_pair(prev1, prev2)
    return DemandScenario.deterministic(0.5 * d1 + 0.5 * d2)


def forecast_stochastic(prev1, prev2) -> DemandScenario:
    """
    Two equally likely realizations per slot: last cycle's and the one before.

    Slots where both cycles agree collapse to one realization of probability 1.
    """
    d1, d2 = _check_pair(prev1, prev2)
    slots = [
        [(float(a), 1.0)] if a == b else [(float(a), 0.5), (float(b), 0.5)]
        for a, b in zip(d1, d2)
    ]
    return DemandScenario.from_slots(slots)


@dataclass(frozen=True)
class TwoCycleForecaster:
    """Forecast from the two cycles preceding the one being planned."""
    stochastic: bool = True
    history: int = 2

    def forecast(self, cycles: Sequence[np.ndarray]) -> DemandScenario:
        if len(cycles) < 2:
            raise SolverGuardError(f"forecasting needs two past cycles, got {len(cycles)}")
        prev1, prev2 = cycles[-1], cycles[-2]
        if self.stochastic:
            return forecast_stochastic(prev1, prev2)
        return forecast_deterministic(prev1, prev2)
