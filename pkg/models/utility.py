import math
from dataclasses import dataclass

import numpy as np

from errors import ValidationError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class UtilitySpec:
    """
    Isoelastic utility of delivered volume (megabits):

        U(v) = A * v**(1-a) / (1-a)     for 0 < a < 1
        U(v) = A * ln(max(v, eps))      for a = 1

    factor_A scales the whole curve, curvature_a sets how quickly the marginal
    value of extra volume falls. eval_floor only matters for the log case.
    """
    factor_A: float = 0.08
    curvature_a: float = 0.1
    eval_floor: float = 1e-6

    def __post_init__(self):
        if not self.factor_A > 0:
            raise ValidationError(f"utility factor A must be > 0, got {self.factor_A}")
        if not 0 < self.curvature_a <= 1:
            raise ValidationError(f"utility curvature a must lie in (0, 1], got {self.curvature_a}")
        if not self.eval_floor > 0:
            raise ValidationError(f"eval_floor must be > 0, got {self.eval_floor}")

    @property
    def is_log(self) -> bool:
        return self.curvature_a == 1

    def with_factor(self, factor_A: float) -> "UtilitySpec":
        return UtilitySpec(factor_A, self.curvature_a, self.eval_floor)


@dataclass(frozen=True)
class TangentSet:
    """N tangent lines of U, anchored at n * anchor_spacing for n = 1..N."""
    lines: tuple[tuple[float, float], ...]    # (slope, intercept)
    anchor_spacing: float
    count_N: int

    def value_at(self, volume):
        """Pointwise minimum of the lines; broadcasts over numpy input."""
        v = np.asarray(volume, dtype=float)
        slopes = np.array([s for s, _ in self.lines])
        intercepts = np.array([c for _, c in self.lines])
        return np.min(slopes * v[..., None] + intercepts, axis=-1)


# ── Evaluation ─────────────────────────────────────────────────────────────────

def utility_value(spec: UtilitySpec, volume):
    """
    U(volume). Accepts scalars or arrays; returns the same kind.

    Raises:
        ValidationError: any negative volume.
    """
    v = np.asarray(volume, dtype=float)
    if np.any(v < 0):
        raise ValidationError("utility is undefined for negative volume")

    A, a = spec.factor_A, spec.curvature_a
    if spec.is_log:
        out = A * np.log(np.maximum(v, spec.eval_floor))
    else:
        out = A * np.power(v, 1.0 - a) / (1.0 - a)
    return float(out) if out.ndim == 0 else out


def utility_derivative(spec: UtilitySpec, volume):
    """
    U'(volume) = A * volume**(-a), defined for volume > 0 only.

    Raises:
        ValidationError: any volume <= 0.
    """
    v = np.asarray(volume, dtype=float)
    if np.any(v <= 0):
        raise ValidationError("utility derivative needs a strictly positive volume")
    out = spec.factor_A * np.power(v, -spec.curvature_a)
    return float(out) if out.ndim == 0 else out


def utility_inverse(spec: UtilitySpec, value: float) -> float:
    """
    Volume v >= 0 with U(v) = value, on the increasing branch of U.

    Values below U(0) (or below U(eps) for the log case) map to 0.
    """
    A, a = spec.factor_A, spec.curvature_a
    if spec.is_log:
        if value <= A * math.log(spec.eval_floor):
            return 0.0
        return math.exp(value / A)
    if value <= 0:
        return 0.0
    return (value * (1.0 - a) / A) ** (1.0 / (1.0 - a))


def expected_slot_utility(spec: UtilitySpec, slot_dist, slot_seconds: float, usage: float) -> float:
    """
    G_t(x) = sum_k pi_k * U(T * min(x, D_k)) for one slot.

    Args:
        slot_dist:    sequence of (demand_mbps, probability) pairs.
        slot_seconds: slot length T.
        usage:        planned usage x (Mbps).

    Raises:
        ValidationError: probabilities not summing to 1, negative demand or usage.
    """
    demands = np.array([d for d, _ in slot_dist], dtype=float)
    probs = np.array([p for _, p in slot_dist], dtype=float)
    if demands.size == 0:
        raise ValidationError("slot distribution is empty")
    if abs(probs.sum() - 1.0) > PROB_TOL or np.any(probs < 0):
        raise ValidationError(f"slot probabilities sum to {probs.sum()!r}, expected 1")
    if np.any(demands < 0) or usage < 0:
        raise ValidationError("demand and usage must be nonnegative")

    delivered = slot_seconds * np.minimum(usage, demands)
    return float(np.dot(probs, utility_value(spec, delivered)))


# ── Piece-wise linear over-approximation ──────────────────────────────────────

def tangent_envelope(spec: UtilitySpec, demand: float, slot_seconds: float, count_N: int) -> TangentSet:
    """
    N tangents of U anchored at n * T * D / N, n = 1..N.

    Anchors start at n=1 because U' blows up at 0; the first tangent still
    bounds U from above near 0 by concavity. A zero demand gives the single
    line h <= 0.
    """
    if int(count_N) != count_N or count_N < 1:
        raise ValidationError(f"tangent count N must be a positive integer, got {count_N}")
    if demand < 0:
        raise ValidationError("demand must be nonnegative")

    if demand == 0:
        return TangentSet(lines=((0.0, 0.0),), anchor_spacing=0.0, count_N=1)

    spacing = slot_seconds * demand / count_N
    lines = []
    for n in range(1, count_N + 1):
        anchor = n * spacing
        slope = utility_derivative(spec, anchor)
        lines.append((slope, utility_value(spec, anchor) - slope * anchor))
    return TangentSet(lines=tuple(lines), anchor_spacing=spacing, count_N=count_N)
