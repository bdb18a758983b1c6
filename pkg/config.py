import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from rich.logging import RichHandler

# ── Paths ──────────────────────────────────────────────────────────────────────
ROOT_PATH   = Path(__file__).resolve().parent
DEFAULT_OUT = ROOT_PATH / "data" / "reports"

# ── Billing setup (hourly slots, 28-day cycle) ─────────────────────────────────
TAU          = 672
SLOT_SECONDS = 3600.0
PERCENTILE   = 0.95
PRICE        = 15.0

# ── Utility setup ──────────────────────────────────────────────────────────────
UTILITY_A         = 0.08
UTILITY_CURVATURE = 0.1
EVAL_FLOOR        = 1e-6     # Mb, clamp for the a=1 log utility

# ── Solvers ────────────────────────────────────────────────────────────────────
TANGENTS             = 3
GOLDEN_TOL           = 1e-9
DEDUP_TOL            = 1e-12
CROSSING_BUDGET      = 4096
ORACLE_MAX_TAU       = 20
MULTI_ORACLE_MAX_TAU = 8
ROUNDS_MAX           = 100
ASCENT_TOL           = 1e-8

# ── Logging ────────────────────────────────────────────────────────────────────
LOG_ENV = "BURSTOPT_LOG"


def setup_logging(level: str | None = None) -> None:
    """
    Route every module logger through rich.

    The level comes from the argument, else from $BURSTOPT_LOG, else WARNING.
    Unknown level names fall back to WARNING instead of failing the run.
    """
    name = (level or os.environ.get(LOG_ENV) or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING

    logging.basicConfig(
        level=numeric,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


@dataclass
class RunConfig:
    """
    Every knob the CLI exposes, defaulting to the hourly/28-day setup.

    Builders turn the flat fields into the domain objects the solvers take,
    so the commands never assemble policies by hand.
    """
    tau: int = TAU
    slot_seconds: float = SLOT_SECONDS
    percentile: float = PERCENTILE
    prices: tuple[float, ...] = (PRICE,)
    utility_A: float = UTILITY_A
    utility_a: float = UTILITY_CURVATURE
    tangents: int = TANGENTS
    solver: str = "sweep"
    forecast: str = "stochastic"
    unit_scale: float = 1.0
    seed: int = 0
    jobs: int = 1
    out: Path = field(default_factory=lambda: DEFAULT_OUT)

    def policy(self, provider: int = 0):
        from models.billing import BillingPolicy
        return BillingPolicy(
            tau=self.tau,
            slot_seconds=self.slot_seconds,
            percentile_q=self.percentile,
            price_delta=self.prices[provider],
        )

    def utility(self):
        from models.utility import UtilitySpec
        return UtilitySpec(factor_A=self.utility_A, curvature_a=self.utility_a)

    def providers(self):
        from models.multi_provider import ProviderSet
        return ProviderSet.from_prices(
            self.prices,
            tau=self.tau,
            slot_seconds=self.slot_seconds,
            percentile_q=self.percentile,
        )
