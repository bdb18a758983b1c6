import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from engine.experiments import cycles_frame
from engine.realtime import CycleReport

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
PROVIDER_COLUMNS = ["cycle", "method", "cost", "surplus", "normalized_surplus"]


def write_frame_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    log.info("wrote %s (%d rows)", path, len(frame))
    return path


def _clean(value):
    # JSON has no NaN
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def write_cycles_csv(reports: list[CycleReport], out: Path) -> Path:
    return write_frame_csv(cycles_frame(reports), Path(out) / "cycles.csv")


def write_providers_csv(reports: list[CycleReport], out: Path) -> Path:
    return write_frame_csv(cycles_frame(reports)[PROVIDER_COLUMNS], Path(out) / "providers.csv")


def write_sweep_csv(frame: pd.DataFrame, out: Path) -> Path:
    return write_frame_csv(frame, Path(out) / "sweep.csv")


def write_report_json(reports: list[CycleReport], out: Path) -> Path:
    """report.json: per-cycle method figures plus the per-method averages."""
    frame = cycles_frame(reports)
    average = frame[frame["cycle"] == "average"].drop(columns="cycle")
    cycles = []
    for report in reports:
        entry = report.to_json()
        entry["methods"] = [{k: _clean(v) for k, v in m.items()} for m in entry["methods"]]
        cycles.append(entry)
    payload = {
        "cycles": cycles,
        "average": [{k: _clean(v) for k, v in row.items()} for row in average.to_dict("records")],
    }
    path = Path(out) / "report.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def write_summary_md(frame: pd.DataFrame, out: Path, title: str) -> Path:
    """Markdown table of a report frame, next to the CSVs."""
    path = Path(out) / "summary.md"
    path.parent.mkdir(parents=True, exist_ok=True)
    table = frame.to_markdown(index=False, floatfmt=".6g")
    path.write_text(f"# {title}\n\n{table}\n", encoding="utf-8")
    return path


def write_usage_dump(report: CycleReport, provider_ids: list[str], out: Path) -> Path:
    """
    usage_cycle<c>.csv: slot, exposed demand, then the updated total usage of
    every method; multi-provider runs add one column per method and provider.
    """
    columns = {"slot": np.arange(1, report.exposed.shape[0] + 1), "exposed": report.exposed}
    for method, outcome in report.outcomes.items():
        columns[method] = outcome.updated.sum(axis=0)
        if len(provider_ids) > 1 and method.endswith("_msp"):
            for pid, row in zip(provider_ids, outcome.updated):
                columns[f"{method}_{pid}"] = row
    return write_frame_csv(pd.DataFrame(columns), Path(out) / f"usage_cycle{report.cycle}.csv")
