import numpy as np

from config import DEDUP_TOL
from models.utility import UtilitySpec, utility_value
from processor.demand import DemandScenario


class SlotLandscape:
    """
    Expected utility of every slot as a function of one provider's usage.

        G_t(x) = sum_k pi_k,t * U(T * min(x + O[t], D_k[t])) - G_t(0)

    O[t] is the usage other providers already deliver at slot t (zero for a
    single provider). Each G_t is concave and nondecreasing in x, flat beyond
    saturation[t] = max(max_k D_k[t] - O[t], 0), and the subtracted constant
    makes G_t(0) = 0 so objectives stay comparable across ascent rounds.

    A cap x applied to the capped slots gives them G_t(min(x, saturation[t]));
    a freed slot always gets G_t(saturation[t]) = full[t]. The difference,
    gain_t(x) = full[t] - G_t(x), is what freeing slot t is worth at cap x.
    """

    def __init__(self, scenario: DemandScenario, spec: UtilitySpec, slot_seconds: float,
                 offset=None):
        self.scenario = scenario
        self.spec = spec
        self.slot_seconds = slot_seconds
        self.tau = scenario.tau
        self.offset = np.zeros(self.tau) if offset is None else np.asarray(offset, dtype=float)

        self._demands = scenario.demands
        self._probs = scenario.probs
        self.base = self._raw(np.zeros(self.tau))
        self.saturation = np.maximum(scenario.max_demand() - self.offset, 0.0)
        self.full = self._raw(self.saturation) - self.base

    @property
    def has_offset(self) -> bool:
        return bool(np.any(self.offset > 0))

    def _raw(self, usage: np.ndarray) -> np.ndarray:
        total = usage + self.offset
        delivered = self.slot_seconds * np.minimum(total[:, None], self._demands)
        return np.sum(self._probs * utility_value(self.spec, delivered), axis=1)

    # ── Per-slot surfaces ─────────────────────────────────────────────────────

    def values(self, cap: float) -> np.ndarray:
        """G_t(min(cap, saturation[t])) for every slot."""
        return self._raw(np.minimum(cap, self.saturation)) - self.base

    def gains(self, cap: float) -> np.ndarray:
        return self.full - self.values(cap)

    def usage(self, cap: float, freed: np.ndarray) -> np.ndarray:
        """Planned usage for a cap and a boolean freed-slot vector."""
        return np.where(freed, self.saturation, np.minimum(cap, self.saturation))

    def breakpoints(self) -> np.ndarray:
        """
        0 and every per-slot kink max(D_k[t] - O[t], 0), sorted, near-duplicates
        (relative DEDUP_TOL) merged.
        """
        valid = np.arange(self._demands.shape[1])[None, :] < self.scenario.counts[:, None]
        kinks = np.maximum(self._demands - self.offset[:, None], 0.0)[valid]
        points = np.unique(np.concatenate([[0.0], kinks]))

        kept = [points[0]]
        for p in points[1:]:
            if p - kept[-1] > DEDUP_TOL * max(1.0, abs(p)):
                kept.append(p)
        return np.array(kept)

    # ── Affine structure inside one breakpoint interval ───────────────────────

    def gain_lines(self, hi: float) -> tuple[np.ndarray, np.ndarray]:
        """
        Inside an interval ending at breakpoint `hi` (zero offsets only),
        gain_t(x) = alpha[t] - beta[t] * U(T x) exactly.

        Returns:
            (alpha, beta): alpha[t] = sum of pi_k U(T D_k) over D_k >= hi,
                           beta[t] = probability mass of those realizations.
        """
        valid = np.arange(self._demands.shape[1])[None, :] < self.scenario.counts[:, None]
        above = valid & (self._demands >= hi)
        weights = np.where(above, self._probs, 0.0)
        u = utility_value(self.spec, self.slot_seconds * self._demands)
        return np.sum(weights * u, axis=1), np.sum(weights, axis=1)
