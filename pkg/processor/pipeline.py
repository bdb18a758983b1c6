import logging
from dataclasses import dataclass

import numpy as np

from collector.trace import Trace
from errors import SolverGuardError
from processor.demand import DemandScenario, ExposedDemand, Forecaster, slice_cycles

log = logging.getLogger(__name__)

HISTORY_CYCLES = 2  # past cycles feeding each forecast


@dataclass(frozen=True)
class CycleWindow:
    """
    One step of the rolling evaluation.

    Cycles are numbered from 1 in trace order; `cycle` is the number of the
    truth cycle and `history` holds the cycles right before it, oldest first.
    """
    cycle: int
    history: tuple[np.ndarray, ...]
    truth: np.ndarray

    def exposed(self) -> ExposedDemand:
        return ExposedDemand(self.truth)

    def forecast(self, forecaster: Forecaster) -> DemandScenario:
        return forecaster.forecast(list(self.history))


def rolling_windows(cycles: list[np.ndarray], history: int = HISTORY_CYCLES) -> list[CycleWindow]:
    """
    Every (history, truth) pair where the truth cycle never feeds its own forecast.

    Examples:
        5 cycles, history=2 → windows for cycles 3, 4, 5

    Raises:
        SolverGuardError: fewer than history + 1 cycles.
    """
    if len(cycles) < history + 1:
        raise SolverGuardError(
            f"rolling evaluation needs {history + 1} cycles ({history} history + 1 truth), "
            f"got {len(cycles)}"
        )
    return [
        CycleWindow(cycle=c + 1, history=tuple(cycles[c - history:c]), truth=cycles[c])
        for c in range(history, len(cycles))
    ]


def build_windows(trace: Trace, tau: int, history: int = HISTORY_CYCLES) -> list[CycleWindow]:
    """Slice a trace into cycles of tau slots and lay out the rolling windows."""
    cycles = slice_cycles(trace, tau)
    windows = rolling_windows(cycles, history)
    log.info("%d cycles of %d slots, %d evaluation window(s)", len(cycles), tau, len(windows))
    return windows
