"""
Mixed-integer linear model of the expected-surplus problem, built for export.

The product rho * X is replaced by a cap phi with a big-L link row, and every
concave utility term is replaced by a variable h bounded by N tangent lines:

    maximize    sum_t sum_k pi_k,t h_t_k  -  price * phi
    subject to  X_t - phi + L rho_t <= L          cap_t
                sum_t rho_t = ceil(q tau)          card
                Q_t_k - X_t <= 0                   qx_t_k
                Q_t_k <= D_k,t                     qd_t_k
                h_t_k - T U'(n d) Q_t_k <= U(n d) - U'(n d) n d     tan_t_k_n

with d = T D_k,t / N. Nothing here solves the model; export_lp writes it in LP
format for an external solver, and the evaluation helpers measure how far the
tangent objective sits above the true surplus of a plan.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from config import TANGENTS
from errors import ValidationError
from models.billing import BillingPolicy
from models.plan import MultiPlan, Plan, evaluate_expected_surplus
from models.utility import TangentSet, UtilitySpec, tangent_envelope
from processor.demand import DemandScenario

if TYPE_CHECKING:
    from models.multi_provider import ProviderSet

log = logging.getLogger(__name__)

LP_WIDTH = 78
TINY = 1e-12


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float | None = 0.0         # None means free below
    binary: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str                        # "<=", "=" or ">="
    rhs: float

    @property
    def family(self) -> str:
        return self.name.split("_", 1)[0]


@dataclass
class MilpModel:
    """
    A named linear model: variables, rows and a maximization objective.

    Names are deterministic (1-based slot and realization indices), so two
    builds of the same instance export byte-identical LP files.
    """
    name: str
    big_L: float
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: list[tuple[str, float]] = field(default_factory=list)
    tangents: dict[tuple[int, int], TangentSet] = field(default_factory=dict)
    demands: dict[tuple[int, int], float] = field(default_factory=dict)
    slot_seconds: float = 1.0

    def add_variable(self, name: str, lower: float | None = 0.0, binary: bool = False) -> str:
        self.variables.append(Variable(name, lower, binary))
        return name

    def add_constraint(self, name: str, terms, sense: str, rhs: float) -> None:
        if sense not in ("<=", "=", ">="):
            raise ValidationError(f"unknown row sense {sense!r}")
        self.constraints.append(Constraint(name, tuple(terms), sense, float(rhs)))

    @property
    def variable_count(self) -> int:
        return len(self.variables)

    @property
    def binaries(self) -> list[str]:
        return [v.name for v in self.variables if v.binary]

    def row_counts(self) -> dict[str, int]:
        """Rows per family (cap, card, qx, qd, tan)."""
        counts: dict[str, int] = {}
        for row in self.constraints:
            counts[row.family] = counts.get(row.family, 0) + 1
        return counts

    # ── Evaluation ────────────────────────────────────────────────────────────

    def objective_value(self, assignment: dict[str, float]) -> float:
        return float(sum(coef * assignment[name] for name, coef in self.objective))

    def violations(self, assignment: dict[str, float], tol: float = 1e-7) -> list[str]:
        """Names of rows (and binaries) the assignment breaks."""
        broken = []
        for row in self.constraints:
            lhs = sum(coef * assignment[name] for name, coef in row.terms)
            slack = tol * max(1.0, abs(row.rhs))
            if (row.sense == "<=" and lhs > row.rhs + slack) or \
               (row.sense == ">=" and lhs < row.rhs - slack) or \
               (row.sense == "=" and abs(lhs - row.rhs) > slack):
                broken.append(row.name)
        for var in self.variables:
            value = assignment[var.name]
            if var.binary and value not in (0, 1):
                broken.append(var.name)
            elif var.lower is not None and value < var.lower - tol:
                broken.append(var.name)
        return broken


# ── Building ──────────────────────────────────────────────────────────────────

def _realizations(scenario: DemandScenario):
    for t in range(scenario.tau):
        for k, (d, p) in enumerate(scenario.slot(t), start=1):
            yield t + 1, k, d, p


def _big_L(scenario: DemandScenario, big_L: float | None) -> float:
    top = float(scenario.max_demand().max())
    if big_L is None:
        return top + 1.0
    if big_L < top:
        raise ValidationError(f"big_L={big_L} is below the largest demand {top}")
    return float(big_L)


def _add_utility_block(model: MilpModel, scenario: DemandScenario, spec: UtilitySpec,
                       slot_seconds: float, count_N: int, usage_names) -> None:
    """Q/h variables, the qx/qd/tan rows and the pi*h objective terms."""
    seconds = slot_seconds
    for t, k, d, p in _realizations(scenario):
        model.add_variable(f"Q_{t}_{k}")
        model.add_variable(f"h_{t}_{k}", lower=None)

    for t, k, d, p in _realizations(scenario):
        model.add_constraint(f"qx_{t}_{k}",
                             [(f"Q_{t}_{k}", 1.0)] + [(x, -1.0) for x in usage_names(t)], "<=", 0.0)
    for t, k, d, p in _realizations(scenario):
        model.add_constraint(f"qd_{t}_{k}", [(f"Q_{t}_{k}", 1.0)], "<=", d)
    for t, k, d, p in _realizations(scenario):
        lines = tangent_envelope(spec, d, seconds, count_N)
        model.tangents[(t, k)] = lines
        model.demands[(t, k)] = d
        for n, (slope, intercept) in enumerate(lines.lines, start=1):
            model.add_constraint(f"tan_{t}_{k}_{n}",
                                 [(f"h_{t}_{k}", 1.0), (f"Q_{t}_{k}", -seconds * slope)],
                                 "<=", intercept)
    for t, k, d, p in _realizations(scenario):
        model.objective.append((f"h_{t}_{k}", p))


def _phi(tag: str) -> str:
    return f"phi_{tag.rstrip('_')}" if tag else "phi"


def _add_provider_block(model: MilpModel, policy: BillingPolicy, tag: str = "") -> None:
    """X/rho/phi variables of one provider. tag is "" or "p<i>_"."""
    tau = policy.tau
    for t in range(1, tau + 1):
        model.add_variable(f"X_{tag}{t}")
    for t in range(1, tau + 1):
        model.add_variable(f"rho_{tag}{t}", binary=True)
    model.add_variable(_phi(tag))


def _add_provider_rows(model: MilpModel, policy: BillingPolicy, tag: str = "") -> None:
    L = model.big_L
    phi = _phi(tag)
    for t in range(1, policy.tau + 1):
        model.add_constraint(f"cap_{tag}{t}",
                             [(f"X_{tag}{t}", 1.0), (phi, -1.0), (f"rho_{tag}{t}", L)], "<=", L)


def _add_card_row(model: MilpModel, policy: BillingPolicy, tag: str = "") -> None:
    name = f"card_{tag.rstrip('_')}" if tag else "card"
    model.add_constraint(name, [(f"rho_{tag}{t}", 1.0) for t in range(1, policy.tau + 1)],
                         "=", policy.kept_count)


def build_milp(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
               count_N: int = TANGENTS, big_L: float | None = None) -> MilpModel:
    """
    Single-provider model with 2 tau + 1 + 2 sum_t K_t variables.

    Examples:
        tau=2, K=2, N=3 → 13 variables; rows cap 2, card 1, qx 4, qd 4, tan 12
    """
    if scenario.tau != policy.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, policy expects {policy.tau}")
    if int(count_N) != count_N or count_N < 1:
        raise ValidationError(f"tangent count N must be a positive integer, got {count_N}")

    model = MilpModel(name="burstable_ssp", big_L=_big_L(scenario, big_L),
                      slot_seconds=policy.slot_seconds)
    _add_provider_block(model, policy)
    _add_utility_block(model, scenario, spec, policy.slot_seconds, count_N,
                       usage_names=lambda t: [f"X_{t}"])
    model.objective.append(("phi", -policy.price_delta))

    # Rows are emitted by family so the LP file reads top to bottom.
    utility_rows = model.constraints
    model.constraints = []
    _add_provider_rows(model, policy)
    _add_card_row(model, policy)
    model.constraints.extend(utility_rows)

    log.debug("milp: %d variables, rows %s", model.variable_count, model.row_counts())
    return model


def build_milp_multi(scenario: DemandScenario, spec: UtilitySpec, providers: "ProviderSet",
                     count_N: int = TANGENTS, big_L: float | None = None) -> MilpModel:
    """
    Multi-provider model: per-provider X/rho/phi blocks, shared Q/h with
    Q_t_k <= sum_i X_i,t.

    Examples:
        I=2, tau=2, K=2, N=3 → 2 * (2 + 2 + 1) + 4 + 4 = 18 variables
    """
    if scenario.tau != providers.tau:
        raise ValidationError(f"scenario has {scenario.tau} slots, providers expect {providers.tau}")
    if int(count_N) != count_N or count_N < 1:
        raise ValidationError(f"tangent count N must be a positive integer, got {count_N}")

    tags = [f"p{i}_" for i in range(1, len(providers) + 1)]
    model = MilpModel(name="burstable_msp", big_L=_big_L(scenario, big_L),
                      slot_seconds=providers.slot_seconds)
    for tag, provider in zip(tags, providers):
        _add_provider_block(model, provider.policy, tag)
    _add_utility_block(model, scenario, spec, providers.slot_seconds, count_N,
                       usage_names=lambda t: [f"X_{tag}{t}" for tag in tags])
    for tag, provider in zip(tags, providers):
        model.objective.append((_phi(tag), -provider.policy.price_delta))

    utility_rows = model.constraints
    model.constraints = []
    for tag, provider in zip(tags, providers):
        _add_provider_rows(model, provider.policy, tag)
    for tag, provider in zip(tags, providers):
        _add_card_row(model, provider.policy, tag)
    model.constraints.extend(utility_rows)

    log.debug("milp (multi): %d variables, rows %s", model.variable_count, model.row_counts())
    return model


# ── LP export ─────────────────────────────────────────────────────────────────

def _number(value: float) -> str:
    if value == 0:
        value = 0.0     # no "-0"
    return "%.12g" % value


def _expression(terms) -> list[str]:
    tokens = []
    for i, (name, coef) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        magnitude = abs(coef)
        body = name if magnitude == 1 else f"{_number(magnitude)} {name}"
        if i == 0:
            tokens.append(f"- {body}" if sign == "-" else body)
        else:
            tokens.append(f"{sign} {body}")
    return tokens


def _wrap(head: str, tokens: list[str]) -> list[str]:
    lines, current = [], head
    for token in tokens:
        if len(current) + 1 + len(token) > LP_WIDTH and current.strip():
            lines.append(current)
            current = "   " + token
        else:
            current = f"{current} {token}" if current else token
    lines.append(current)
    return lines


def lp_text(model: MilpModel) -> str:
    out = [f"\\ {model.name}", "Maximize"]
    out += _wrap(" obj:", _expression(model.objective))
    out.append("Subject To")
    for row in model.constraints:
        out += _wrap(f" {row.name}:", _expression(row.terms) + [row.sense, _number(row.rhs)])

    free = [v.name for v in model.variables if v.lower is None]
    out.append("Bounds")
    out += [f" {name} free" for name in free]
    out.append("Binary")
    out += [f" {name}" for name in model.binaries]
    out.append("End")
    return "\n".join(out) + "\n"


def export_lp(model: MilpModel, path: Path) -> Path:
    """Write the model in LP format (LF endings, deterministic ordering)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(lp_text(model), encoding="utf-8", newline="\n")
    log.info("wrote %s (%d variables, %d rows)", path, model.variable_count, len(model.constraints))
    return path


# ── Embedding plans ───────────────────────────────────────────────────────────

def embed_plan(model: MilpModel, plan: Plan | MultiPlan) -> dict[str, float]:
    """
    Model variables at a plan: Q = min(total usage, D) and every h at the
    tangent envelope, which is its largest feasible value.
    """
    assignment: dict[str, float] = {}
    if isinstance(plan, MultiPlan):
        blocks = [(f"p{i}_", p) for i, p in enumerate(plan.plans.values(), start=1)]
        total = plan.total_usage()
    else:
        blocks = [("", plan)]
        total = plan.planned_usage

    for tag, block in blocks:
        for t, (x, r) in enumerate(zip(block.planned_usage, block.burst_mask), start=1):
            assignment[f"X_{tag}{t}"] = float(x)
            assignment[f"rho_{tag}{t}"] = int(r)
        assignment[_phi(tag)] = float(block.cap_phi)

    for (t, k), lines in model.tangents.items():
        q = min(float(total[t - 1]), model.demands[(t, k)])
        assignment[f"Q_{t}_{k}"] = q
        assignment[f"h_{t}_{k}"] = float(lines.value_at(model.slot_seconds * q))
    return assignment


def evaluate_model_objective(model: MilpModel, plan: Plan | MultiPlan) -> float:
    """Tangent-model objective at a plan; never below the plan's true surplus."""
    return model.objective_value(embed_plan(model, plan))


def tangent_gap_study(scenario: DemandScenario, spec: UtilitySpec, policy: BillingPolicy,
                      plan: Plan, counts=(1, 2, 3, 5, 10)) -> list[dict]:
    """
    Relative gap (model - true) / |true| at one plan for each tangent count N.

    Returns:
        [{"N", "model_objective", "true_surplus", "gap"}, ...] in the order of counts.
    """
    true_surplus, _, _ = evaluate_expected_surplus(plan.planned_usage, scenario, spec, policy)
    rows = []
    for count_N in counts:
        model = build_milp(scenario, spec, policy, count_N)
        value = evaluate_model_objective(model, plan)
        rows.append({
            "N": int(count_N),
            "model_objective": value,
            "true_surplus": true_surplus,
            "gap": (value - true_surplus) / max(abs(true_surplus), TINY),
        })
    return rows
