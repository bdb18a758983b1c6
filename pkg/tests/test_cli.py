import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from engine.cli import cli
from processor.demand import DemandScenario

GOLDEN = Path(__file__).parent / "golden"

SMALL = ["--tau", "24", "--slot-seconds", "1", "--percentile", "0.9", "--price", "1",
         "--utility-A", "1", "--utility-a", "0.5"]
TOY = ["--tau", "1", "--slot-seconds", "1", "--percentile", "1", "--utility-A", "1",
       "--utility-a", "0.5", "--tangents", "1"]


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def trace_csv(runner, tmp_path) -> Path:
    path = tmp_path / "trace.csv"
    result = runner.invoke(cli, ["synth", str(path), "--cycles", "5", "--seed", "3", *SMALL])
    assert result.exit_code == 0, result.output
    return path


def _scenario_json(tmp_path, tau: int, seed: int = 0) -> Path:
    rng = np.random.default_rng(seed)
    slots = [[(float(d), 0.5) for d in rng.uniform(1.0, 10.0, size=2)] for _ in range(tau)]
    path = tmp_path / f"scenario_{tau}.json"
    DemandScenario.from_slots(slots).save(path)
    return path


class TestBill:
    def test_cost(self, runner, tmp_path):
        usage = tmp_path / "usage.csv"
        usage.write_text("timestamp,value\n"
                         "2014-01-01T00:00:00Z,100\n2014-01-01T01:00:00Z,50\n"
                         "2014-01-01T02:00:00Z,300\n2014-01-01T03:00:00Z,80\n", encoding="utf-8")
        result = runner.invoke(cli, ["bill", str(usage), "--tau", "4", "--percentile", "0.75",
                                     "--price", "2", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        row = pd.read_csv(tmp_path / "bill.csv").iloc[0]
        assert (row["samples"], row["discarded"]) == (4, 1)
        assert row["mu95"] == 100.0
        assert row["cost"] == 200.0

    def test_malformed_row(self, runner, tmp_path):
        usage = tmp_path / "usage.csv"
        usage.write_text("timestamp,value\n2014-01-01T00:00:00Z,1\n2014-01-01T01:00:00Z,x\n",
                         encoding="utf-8")
        result = runner.invoke(cli, ["bill", str(usage), "--tau", "2", "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "line 3" in result.output


class TestPlan:
    def test_oracle_and_sweep_agree(self, runner, tmp_path):
        scenario = _scenario_json(tmp_path, 8)
        flags = ["--tau", "8", "--slot-seconds", "1", "--percentile", "0.75", "--price", "1",
                 "--utility-A", "1", "--utility-a", "0.5"]
        surpluses = {}
        for solver in ("sweep", "oracle"):
            out = tmp_path / solver
            result = runner.invoke(cli, ["plan", str(scenario), "--solver", solver, "--out", str(out), *flags])
            assert result.exit_code == 0, result.output
            payload = json.loads((out / "plan.json").read_text())
            assert payload["solver"] == solver
            assert sum(payload["burst_mask"]) == 6
            surpluses[solver] = payload["expected_surplus"]
        assert surpluses["sweep"] == pytest.approx(surpluses["oracle"], rel=1e-6)

    def test_zero_price_serves_every_realization(self, runner, tmp_path):
        scenario = _scenario_json(tmp_path, 6)
        result = runner.invoke(cli, ["plan", str(scenario), "--tau", "6", "--percentile", "0.75",
                                     "--price", "0", "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "plan.json").read_text())
        expected = DemandScenario.load(scenario).max_demand()
        assert payload["planned_usage_mbps"] == pytest.approx(list(expected))

    def test_deterministic_forecast_from_trace(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["plan", str(trace_csv), "--forecast", "deterministic",
                                     "--out", str(tmp_path), *SMALL])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "plan.json").read_text())
        assert payload["solver"] == "deterministic"
        assert payload["tau"] == 24

    def test_several_prices_plan_jointly(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["plan", str(trace_csv), "--out", str(tmp_path), *SMALL,
                                     "--price", "1.5"])
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "multiplan.json").read_text())
        assert [p["id"] for p in payload["providers"]] == ["p1", "p2"]

    def test_oracle_guard(self, runner, tmp_path):
        scenario = _scenario_json(tmp_path, 21)
        result = runner.invoke(cli, ["plan", str(scenario), "--tau", "21", "--solver", "oracle",
                                     "--out", str(tmp_path)])
        assert result.exit_code == 3

    def test_unreadable_scenario(self, runner, tmp_path):
        garbled = tmp_path / "garbled.json"
        garbled.write_bytes(b"\xff\xfe{\x00")
        result = runner.invoke(cli, ["plan", str(garbled), "--tau", "4", "--out", str(tmp_path)])
        assert result.exit_code == 2


class TestExperiments:
    def test_simulate(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["simulate", str(trace_csv), "--out", str(tmp_path), *SMALL])
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv(tmp_path / "cycles.csv")) == 3 * 4 + 4
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "summary.md").exists()
        assert sorted(p.name for p in tmp_path.glob("usage_cycle*.csv")) == [
            "usage_cycle3.csv", "usage_cycle4.csv", "usage_cycle5.csv",
        ]

    def test_sweep(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["sweep", str(trace_csv), "--param", "price", "--values", "0.5,1,2,4",
                                     "--out", str(tmp_path), *SMALL])
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv(tmp_path / "sweep.csv")) == 16

    def test_compare_providers(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["compare-providers", str(trace_csv), "--no-dump",
                                     "--out", str(tmp_path), *SMALL, "--price", "1.5"])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(tmp_path / "providers.csv")
        assert list(frame.columns) == ["cycle", "method", "cost", "surplus", "normalized_surplus"]
        assert not list(tmp_path.glob("usage_cycle*.csv"))

    def test_compare_needs_two_prices(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["compare-providers", str(trace_csv), "--out", str(tmp_path), *SMALL])
        assert result.exit_code == 2

    def test_timestamp_gap_rejected(self, runner, trace_csv, tmp_path):
        gapped = tmp_path / "gapped.csv"
        pd.read_csv(trace_csv).drop(index=10).to_csv(gapped, index=False)
        result = runner.invoke(cli, ["simulate", str(gapped), "--out", str(tmp_path), *SMALL])
        assert result.exit_code == 2
        assert "gap" in result.output

    def test_slot_spacing_follows_flag(self, runner, trace_csv, tmp_path):
        result = runner.invoke(cli, ["simulate", str(trace_csv), "--out", str(tmp_path),
                                     *SMALL, "--slot-seconds", "3600"])
        assert result.exit_code == 2

    def test_recurring_bursts(self, runner, tmp_path):
        path = tmp_path / "daily.csv"
        result = runner.invoke(cli, ["synth", str(path), "--recurring-bursts", "--cycles", "3",
                                     "--burst-probability", "0.05", *SMALL])
        assert result.exit_code == 0, result.output
        values = pd.read_csv(path)["value"].to_numpy().reshape(3, 24)
        peaks = values.argmax(axis=1)
        assert peaks[0] == peaks[1] == peaks[2]


class TestExportMilp:
    @pytest.fixture
    def toy_json(self, tmp_path) -> Path:
        path = tmp_path / "toy.json"
        DemandScenario.deterministic([4.0]).save(path)
        return path

    def test_single_provider(self, runner, toy_json, tmp_path):
        lp = tmp_path / "toy.lp"
        result = runner.invoke(cli, ["export-milp", str(toy_json), "--price", "2", "--lp", str(lp), *TOY])
        assert result.exit_code == 0, result.output
        assert lp.read_bytes() == (GOLDEN / "ssp_toy.lp").read_bytes()

    def test_two_providers(self, runner, toy_json, tmp_path):
        result = runner.invoke(cli, ["export-milp", str(toy_json), "--providers", "2", "--price", "2",
                                     "--price", "3", "--out", str(tmp_path), *TOY])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "model.lp").read_bytes() == (GOLDEN / "msp_toy.lp").read_bytes()

    def test_zero_tangents_rejected(self, runner, toy_json, tmp_path):
        result = runner.invoke(cli, ["export-milp", str(toy_json), "--out", str(tmp_path),
                                     *TOY[:-2], "--tangents", "0"])
        assert result.exit_code == 2


def test_tangents_table(runner, tmp_path):
    scenario = _scenario_json(tmp_path, 6)
    result = runner.invoke(cli, ["tangents", str(scenario), "--tau", "6", "--slot-seconds", "1",
                                 "--percentile", "0.75", "--price", "1", "--utility-A", "1",
                                 "--utility-a", "0.5", "--counts", "1,3", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(tmp_path / "tangents.csv")
    assert list(frame["N"]) == [1, 3]
    assert np.all(frame["gap"] >= -1e-12)


def test_tangent_counts_must_be_integers(runner, tmp_path):
    scenario = _scenario_json(tmp_path, 6)
    result = runner.invoke(cli, ["tangents", str(scenario), "--tau", "6", "--percentile", "0.75",
                                 "--counts", "2.5", "--out", str(tmp_path)])
    assert result.exit_code == 2
