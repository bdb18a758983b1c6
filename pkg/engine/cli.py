import functools
import logging
from pathlib import Path

import click
import pandas as pd
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from collector.synth import BurstProfile, synth_trace
from collector.trace import Trace, TraceFormat, load_trace, write_trace
from config import (
    GOLDEN_TOL, PERCENTILE, PRICE, SLOT_SECONDS, TANGENTS, TAU, UTILITY_A, UTILITY_CURVATURE,
    DEFAULT_OUT, RunConfig, setup_logging,
)
from engine import experiments, reports
from errors import BurstoptError, ValidationError
from models.billing import percentile_usage
from models.deterministic import solve_deterministic
from models.milp import build_milp, build_milp_multi, export_lp, tangent_gap_study
from models.multi_provider import ProviderSet, solve_multi
from models.stochastic import solve_oracle, solve_sweep, surplus_upper_bound
from processor.demand import DemandScenario, TwoCycleForecaster, slice_cycles

log = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)


class BurstoptGroup(click.Group):
    """
    Maps project errors to exit codes: 2 for bad input, 3 for solver refusals.

    File system failures (unreadable input, an --out that is a file) count
    as bad input.
    """

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except BurstoptError as exc:
            err_console.print(f"[bold red]error:[/bold red] {escape(str(exc))}", highlight=False)
            ctx.exit(exc.exit_code)
        except OSError as exc:
            err_console.print(f"[bold red]error:[/bold red] {escape(str(exc))}", highlight=False)
            ctx.exit(ValidationError.exit_code)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from exc


def run_options(command):
    """Billing, utility, solver and output flags shared by every command."""
    options = [
        click.option("--tau", type=click.IntRange(min=1), default=TAU, show_default=True,
                     help="Slots per billing cycle."),
        click.option("--slot-seconds", type=float, default=SLOT_SECONDS, show_default=True),
        click.option("--percentile", type=click.FloatRange(0, 1, min_open=True), default=PERCENTILE,
                     show_default=True, help="Billing percentile q."),
        click.option("--price", "prices", type=click.FloatRange(min=0), multiple=True,
                     help=f"$/Mbps per provider; repeat for several providers [default: {PRICE}]."),
        click.option("--utility-a", type=click.FloatRange(0, 1, min_open=True),
                     default=UTILITY_CURVATURE, show_default=True),
        click.option("--utility-A", "utility_A", type=click.FloatRange(min=0, min_open=True),
                     default=UTILITY_A, show_default=True),
        click.option("--tangents", type=click.IntRange(min=1), default=TANGENTS, show_default=True),
        click.option("--solver", type=click.Choice(["sweep", "oracle"]), default="sweep", show_default=True),
        click.option("--forecast", type=click.Choice(["deterministic", "stochastic"]),
                     default="stochastic", show_default=True),
        click.option("--unit-scale", type=click.FloatRange(min=0, min_open=True), default=1.0,
                     show_default=True, help="Raw trace units to Mbps."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--jobs", type=int, default=1, show_default=True),
        click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=DEFAULT_OUT,
                     show_default=True),
    ]

    @functools.wraps(command)
    def wrapper(tau, slot_seconds, percentile, prices, utility_a, utility_A, tangents,
                solver, forecast, unit_scale, seed, jobs, out, **kwargs):
        config = RunConfig(
            tau=tau, slot_seconds=slot_seconds, percentile=percentile,
            prices=tuple(prices) or (PRICE,), utility_A=utility_A, utility_a=utility_a,
            tangents=tangents, solver=solver, forecast=forecast, unit_scale=unit_scale,
            seed=seed, jobs=jobs, out=out,
        )
        return command(config, **kwargs)

    for option in reversed(options):
        wrapper = option(wrapper)
    return wrapper


def _load(path: Path, config: RunConfig) -> Trace:
    return load_trace(path, TraceFormat(unit_scale=config.unit_scale, slot_seconds=config.slot_seconds))


def _print_frame(frame: pd.DataFrame, title: str) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column), justify="right" if frame[column].dtype.kind in "fi" else "left")
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)


# ── Commands ───────────────────────────────────────────────────────────────────

@click.group(cls=BurstoptGroup)
@click.option("--log-level", default=None, help="Overrides $BURSTOPT_LOG.")
def cli(log_level):
    """Plan bandwidth usage under 95th-percentile burstable billing."""
    setup_logging(log_level)


@cli.command()
@click.argument("usage_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@run_options
def bill(config: RunConfig, usage_csv: Path):
    """Percentile usage, burst budget and cost of every full cycle in a usage CSV."""
    trace = _load(usage_csv, config)
    policy = config.policy()
    rows = [
        {"cycle": c, "samples": policy.tau, "discarded": policy.burst_budget,
         "mu95": percentile_usage(x, policy), "cost": policy.price_delta * percentile_usage(x, policy)}
        for c, x in enumerate(slice_cycles(trace, config.tau), start=1)
    ]
    frame = pd.DataFrame(rows)
    reports.write_frame_csv(frame, config.out / "bill.csv")
    _print_frame(frame, "Burstable bill")


def _scenario_for_plan(source: Path, config: RunConfig) -> DemandScenario:
    if source.suffix.lower() == ".json":
        return DemandScenario.load(source)
    cycles = slice_cycles(_load(source, config), config.tau)
    return TwoCycleForecaster(stochastic=config.forecast == "stochastic").forecast(cycles)


@cli.command()
@click.argument("source", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@run_options
def plan(config: RunConfig, source: Path):
    """
    Plan one cycle from a scenario JSON or from the last two cycles of a trace.

    Several --price values plan across providers and write multiplan.json.
    """
    scenario = _scenario_for_plan(source, config)
    spec = config.utility()

    if len(config.prices) > 1:
        multiplan = solve_multi(scenario, spec, config.providers(), golden_tol=GOLDEN_TOL)
        path = multiplan.save(config.out / "multiplan.json")
        console.print(f"expected surplus {multiplan.expected_surplus:.6g} "
                      f"after {len(multiplan.rounds) - 1} round(s) → {path}")
        return

    policy = config.policy()
    if source.suffix.lower() != ".json" and config.forecast == "deterministic":
        result = solve_deterministic(scenario, spec, policy)
    elif config.solver == "oracle":
        result = solve_oracle(scenario, spec, policy)
    else:
        result = solve_sweep(scenario, spec, policy)
    result.check(policy)
    log.info("surplus upper bound %g", surplus_upper_bound(scenario, spec, policy))

    path = result.save(config.out / "plan.json")
    console.print(f"{result.solver_tag}: cap {result.cap_phi:.6g} Mbps, "
                  f"cost {result.expected_cost:.6g}, surplus {result.expected_surplus:.6g} → {path}")


@cli.command()
@click.argument("trace_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--dump/--no-dump", default=True, help="Write per-slot usage CSVs.")
@run_options
def simulate(config: RunConfig, trace_csv: Path, dump: bool):
    """Rolling evaluation of Baseline, Ideal, Deterministic and Stochastic planning."""
    trace = _load(trace_csv, config)
    cycle_reports = experiments.simulate_trace(trace, config)
    _write_cycle_reports(cycle_reports, config, reports.write_cycles_csv, "Rolling simulation", dump)


@cli.command("compare-providers")
@click.argument("trace_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--dump/--no-dump", default=True, help="Write per-slot usage CSVs.")
@run_options
def compare_providers(config: RunConfig, trace_csv: Path, dump: bool):
    """Single- against multi-provider planning, normalized by Ideal-MSP."""
    trace = _load(trace_csv, config)
    cycle_reports = experiments.compare_providers(trace, config)
    _write_cycle_reports(cycle_reports, config, reports.write_providers_csv, "Provider comparison", dump)


def _write_cycle_reports(cycle_reports, config: RunConfig, write_csv, title: str, dump: bool) -> None:
    write_csv(cycle_reports, config.out)
    reports.write_report_json(cycle_reports, config.out)
    average = experiments.averages(cycle_reports)
    reports.write_summary_md(average, config.out, title)
    if dump:
        ids = config.providers().ids
        for report in cycle_reports:
            reports.write_usage_dump(report, ids, config.out)
    _print_frame(average, f"{title}: averages over {len(cycle_reports)} cycle(s)")


@cli.command()
@click.argument("trace_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--param", type=click.Choice(sorted(experiments.SWEEP_PARAMS)), default="price",
              show_default=True)
@click.option("--values", "grid", required=True, help="Comma-separated grid, e.g. 5,10,15,20.")
@run_options
def sweep(config: RunConfig, trace_csv: Path, param: str, grid: str):
    """Average results per method across a price or utility-factor grid."""
    trace = _load(trace_csv, config)
    frame = experiments.sweep(trace, config, param, _floats(grid))
    reports.write_sweep_csv(frame, config.out)
    reports.write_summary_md(frame, config.out, f"Sweep over {param}")
    _print_frame(frame, f"Sweep over {param}")


@cli.command("export-milp")
@click.argument("scenario_json", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--providers", "provider_count", type=click.IntRange(min=1), default=None,
              help="Number of providers; missing prices repeat the last --price.")
@click.option("--lp", "lp_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output file [default: <out>/model.lp].")
@run_options
def export_milp(config: RunConfig, scenario_json: Path, provider_count: int | None,
                lp_path: Path | None):
    """Write the mixed-integer linear model of a scenario in LP format."""
    scenario = DemandScenario.load(scenario_json)
    spec = config.utility()
    prices = list(config.prices)
    count = provider_count or len(prices)
    prices = (prices + [prices[-1]] * count)[:count]

    if count > 1:
        providers = ProviderSet.from_prices(prices, tau=config.tau, slot_seconds=config.slot_seconds,
                                            percentile_q=config.percentile)
        model = build_milp_multi(scenario, spec, providers, config.tangents)
    else:
        model = build_milp(scenario, spec, config.policy(), config.tangents)
    path = export_lp(model, lp_path or config.out / "model.lp")
    console.print(f"{model.variable_count} variables, {len(model.constraints)} rows → {path}")


@cli.command()
@click.argument("out_csv", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--cycles", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--base-level", type=float, default=100.0, show_default=True)
@click.option("--burst-probability", type=click.FloatRange(0, 1), default=0.05, show_default=True)
@click.option("--burst-height", type=click.FloatRange(min=1), default=5.0, show_default=True)
@click.option("--recurring-bursts/--random-bursts", default=False, show_default=True,
              help="Bursts at the same slots of every day instead of random slots.")
@run_options
def synth(config: RunConfig, out_csv: Path, cycles: int, base_level: float,
          burst_probability: float, burst_height: float, recurring_bursts: bool):
    """Write a seeded synthetic bursty trace."""
    profile = BurstProfile(
        n_slots=cycles * config.tau,
        slot_seconds=config.slot_seconds,
        base_level=base_level,
        burst_probability=burst_probability,
        burst_height=burst_height,
        recurring_bursts=recurring_bursts,
    )
    path = write_trace(synth_trace(profile, config.seed, config.unit_scale), out_csv)
    console.print(f"{profile.n_slots} samples ({cycles} cycles of {config.tau}) → {path}")


@cli.command()
@click.argument("scenario_json", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--counts", default="1,2,3,5,10", show_default=True, help="Tangent counts N to compare.")
@run_options
def tangents(config: RunConfig, scenario_json: Path, counts: str):
    """Gap between the tangent model and the true surplus at the sweep plan."""
    scenario = DemandScenario.load(scenario_json)
    spec, policy = config.utility(), config.policy()
    values = _floats(counts)
    if not values or any(n < 1 or not float(n).is_integer() for n in values):
        raise ValidationError(f"tangent counts must be positive integers, got {counts!r}")
    grid = [int(n) for n in values]

    result = solve_sweep(scenario, spec, policy)
    frame = pd.DataFrame(tangent_gap_study(scenario, spec, policy, result, grid))
    reports.write_frame_csv(frame, config.out / "tangents.csv")
    _print_frame(frame, "Tangent model gap")
