"""
Batch experiments over a workload trace.

    simulate_trace     rolling two-cycle forecast, one CycleReport per truth cycle
    sweep              the same simulation across a grid of prices or utility factors
    compare_providers  single- vs multi-provider planning on every cycle

Windows and grid points are independent and run through joblib; joblib
returns results in submission order, so reports do not depend on --jobs.
"""
import logging
from dataclasses import replace

import pandas as pd
from joblib import Parallel, delayed

from collector.trace import Trace
from config import RunConfig
from engine.realtime import MSP_METHODS, SSP_METHODS, CycleReport, PlanningSetup, simulate_cycle
from errors import ValidationError
from processor.demand import TwoCycleForecaster
from processor.pipeline import CycleWindow, build_windows

log = logging.getLogger(__name__)

SWEEP_PARAMS = {"price": "prices", "utility_A": "utility_A"}


def planning_setup(config: RunConfig) -> PlanningSetup:
    return PlanningSetup(spec=config.utility(), providers=config.providers(), solver=config.solver)


def forecaster_for(config: RunConfig) -> TwoCycleForecaster:
    if config.forecast not in ("deterministic", "stochastic"):
        raise ValidationError(f"unknown forecast {config.forecast!r}")
    return TwoCycleForecaster(stochastic=config.forecast == "stochastic")


def _simulate_window(window: CycleWindow, setup: PlanningSetup,
                     forecaster: TwoCycleForecaster, methods) -> CycleReport:
    return simulate_cycle(window.exposed(), window.forecast(forecaster), setup,
                          methods=methods, cycle=window.cycle)


def simulate_trace(trace: Trace, config: RunConfig, methods=SSP_METHODS) -> list[CycleReport]:
    """One CycleReport per truth cycle (cycle 3 onwards), in cycle order."""
    windows = build_windows(trace, config.tau)
    setup = planning_setup(config)
    forecaster = forecaster_for(config)

    reports = Parallel(n_jobs=config.jobs)(
        delayed(_simulate_window)(w, setup, forecaster, methods) for w in windows
    )
    for report in reports:
        log.info("cycle %d simulated (%s)", report.cycle, ", ".join(report.methods))
    return list(reports)


def compare_providers(trace: Trace, config: RunConfig) -> list[CycleReport]:
    """Single- and multi-provider methods on every cycle, normalized by Ideal-MSP."""
    if len(config.prices) < 2:
        raise ValidationError("comparing providers needs at least two --price values")
    return simulate_trace(trace, config, methods=MSP_METHODS)


# ── Aggregation ───────────────────────────────────────────────────────────────

def cycles_frame(reports: list[CycleReport]) -> pd.DataFrame:
    """
    Per-cycle rows followed by one cycle="average" row per method.

    Columns: cycle, method, cost, surplus, mu95, normalized_surplus.
    """
    if not reports:
        raise ValidationError("no cycle reports to aggregate")
    frame = pd.DataFrame([row for report in reports for row in report.rows()])
    order = list(dict.fromkeys(frame["method"]))
    average = (
        frame.groupby("method", sort=False)[["cost", "surplus", "mu95", "normalized_surplus"]]
        .mean()
        .reindex(order)
        .reset_index()
    )
    average.insert(0, "cycle", "average")
    frame["cycle"] = frame["cycle"].astype(str)
    return pd.concat([frame, average], ignore_index=True)


def averages(reports: list[CycleReport]) -> pd.DataFrame:
    frame = cycles_frame(reports)
    return frame[frame["cycle"] == "average"].drop(columns="cycle").reset_index(drop=True)


# ── Parameter sweeps ──────────────────────────────────────────────────────────

def _config_at(config: RunConfig, param: str, value: float) -> RunConfig:
    if param == "price":
        prices = (float(value),) + tuple(config.prices[1:])
        return replace(config, prices=prices, jobs=1)
    return replace(config, utility_A=float(value), jobs=1)


def _sweep_point(trace: Trace, config: RunConfig, param: str, value: float) -> pd.DataFrame:
    frame = averages(simulate_trace(trace, _config_at(config, param, value)))
    frame.insert(0, "value", float(value))
    frame.insert(0, "param", param)
    return frame


def sweep(trace: Trace, config: RunConfig, param: str, values) -> pd.DataFrame:
    """
    Average results per method for every grid value of `param`.

    Args:
        param:  "price" (first provider's price) or "utility_A".
        values: grid, run in the given order.

    Returns:
        DataFrame with columns param, value, method, avg_cost, avg_surplus,
        avg_normalized_surplus.
    """
    if param not in SWEEP_PARAMS:
        raise ValidationError(f"cannot sweep {param!r}; choose one of {sorted(SWEEP_PARAMS)}")
    values = list(values)
    if not values:
        raise ValidationError("sweep grid is empty")

    frames = Parallel(n_jobs=config.jobs)(
        delayed(_sweep_point)(trace, config, param, v) for v in values
    )
    frame = pd.concat(frames, ignore_index=True)
    frame = frame.rename(columns={
        "cost": "avg_cost",
        "surplus": "avg_surplus",
        "normalized_surplus": "avg_normalized_surplus",
    })
    return frame[["param", "value", "method", "avg_cost", "avg_surplus", "avg_normalized_surplus"]]
