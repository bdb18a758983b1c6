import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from errors import TraceFormatError, ValidationError

log = logging.getLogger(__name__)

# ── CSV contract ───────────────────────────────────────────────────────────────
# header `timestamp,value`, ISO-8601 UTC timestamps, one row per slot
TIMESTAMP_COLUMN = "timestamp"
VALUE_COLUMN     = "value"
HEADER_LINES     = 1


@dataclass(frozen=True)
class TraceFormat:
    """
    How to read a workload file.

    Args:
        unit_scale:   multiplier from raw units (e.g. page views) to Mbps.
        slot_seconds: if set, every consecutive pair of timestamps must be
                      exactly this far apart; a gap means a missing slot.
    """
    unit_scale: float = 1.0
    slot_seconds: float | None = None
    timestamp_column: str = TIMESTAMP_COLUMN
    value_column: str = VALUE_COLUMN


@dataclass(frozen=True)
class Trace:
    """A validated workload series: raw values plus the scale to Mbps."""
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    unit_scale: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if len(self.timestamps) != values.shape[0]:
            raise ValidationError("trace timestamps and values differ in length")
        if np.any(values < 0):
            raise ValidationError("trace values must be nonnegative")
        if not self.unit_scale > 0:
            raise ValidationError(f"unit_scale must be > 0, got {self.unit_scale}")
        if len(self.timestamps) > 1 and not self.timestamps.is_monotonic_increasing:
            raise ValidationError("trace timestamps must be increasing")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def mbps(self) -> np.ndarray:
        return self.values * self.unit_scale

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            TIMESTAMP_COLUMN: self.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"),
            VALUE_COLUMN: self.values,
        })


# ── Loading ────────────────────────────────────────────────────────────────────

def load_trace(path: Path, fmt: TraceFormat = TraceFormat()) -> Trace:
    """
    Read and validate a `timestamp,value` CSV.

    Every problem is reported with the 1-based line number of the file
    (the header is line 1).

    Raises:
        TraceFormatError: unreadable file, missing header, unparsable or
                          missing cells, negative values, non-increasing
                          timestamps, gaps.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise TraceFormatError(f"{path}: cannot parse CSV ({exc})") from exc
    except OSError as exc:
        raise TraceFormatError(f"{path}: cannot read ({exc})") from exc

    missing = {fmt.timestamp_column, fmt.value_column} - set(raw.columns)
    if missing:
        raise TraceFormatError(f"{path}: missing column(s) {sorted(missing)}", line=1)
    if raw.empty:
        raise TraceFormatError(f"{path}: no data rows")

    def line_of(i: int) -> int:
        return int(i) + HEADER_LINES + 1

    stamps_raw = raw[fmt.timestamp_column].str.strip()
    values_raw = raw[fmt.value_column].str.strip()

    empty = (stamps_raw == "") | (values_raw == "")
    if empty.any():
        raise TraceFormatError("missing timestamp or value", line=line_of(np.flatnonzero(empty)[0]))

    stamps = pd.to_datetime(stamps_raw, utc=True, errors="coerce", format="ISO8601")
    bad = stamps.isna().to_numpy()
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise TraceFormatError(f"unparsable timestamp {stamps_raw.iloc[i]!r}", line=line_of(i))

    values = pd.to_numeric(values_raw, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        i = np.flatnonzero(bad)[0]
        raise TraceFormatError(f"unparsable value {values_raw.iloc[i]!r}", line=line_of(i))
    if np.any(values < 0):
        i = np.flatnonzero(values < 0)[0]
        raise TraceFormatError(f"negative value {values[i]!r}", line=line_of(i))

    index = pd.DatetimeIndex(stamps)
    steps = np.diff(index.as_unit("ns").asi8) / 1e9
    if np.any(steps <= 0):
        i = np.flatnonzero(steps <= 0)[0] + 1
        raise TraceFormatError("timestamps are not strictly increasing", line=line_of(i))
    if fmt.slot_seconds is not None and np.any(np.abs(steps - fmt.slot_seconds) > 1e-6):
        i = np.flatnonzero(np.abs(steps - fmt.slot_seconds) > 1e-6)[0] + 1
        raise TraceFormatError(
            f"gap of {steps[i - 1]:g}s before this row, expected {fmt.slot_seconds:g}s",
            line=line_of(i),
        )

    log.debug("loaded %d samples from %s", len(values), path)
    return Trace(timestamps=index, values=values, unit_scale=fmt.unit_scale)


def write_trace(trace: Trace, path: Path) -> Path:
    """Write a trace back out in the same CSV contract (LF line endings)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path
