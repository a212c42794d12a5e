import csv
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from iqps.cli import main
from iqps.cost_model import PiecewiseLinear
from iqps.simulator import SimTrace

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SMALL_SWEEP = "[scheduler]\nrsf = 1/2\ncmax_ms = 30000\n[workload]\nnum_queries = 4\nseed = 2\n"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_case3(tmp_path):
    assert main(["single", "--scenario", str(SCENARIOS / "case3.ini"), "--out", str(tmp_path)]) == 0
    (row,) = rows(tmp_path / "metrics.csv")
    assert row["num_batches"] == "2" and row["deadline_met"] == "true"
    assert row["total_cost_us"] == "5000000" and row["normalized_cost"] == "1.000000"
    trace = SimTrace.from_csv((tmp_path / "trace.csv").read_text())
    assert [(r.time, r.tuples) for r in trace.rows if r.event.value == "batch_start"] == [(7_000_000, 6), (10_000_000, 4)]
    assert (tmp_path / "plotdata_cost_vs_batches.csv").exists()


def test_constraint_case3(tmp_path):
    assert main(["constraint", "--scenario", str(SCENARIOS / "case3.ini"), "--out", str(tmp_path)]) == 0
    assert rows(tmp_path / "metrics.csv")[0]["num_batches"] == "2"


def test_single_with_deadline_factors(tmp_path):
    code = main(["single", "--scenario", str(SCENARIOS / "case3.ini"), "--delta", "1,0.4,0.2", "--out", str(tmp_path)])
    assert code == 0
    batches = {r["delta"]: r["num_batches"] for r in rows(tmp_path / "metrics.csv")}
    assert batches == {"1": "1", "0.4": "2", "0.2": "3"}
    assert len(list(tmp_path.glob("trace_*.csv"))) == 3


def test_dynamic_three_queries(tmp_path):
    assert main(["dynamic", "--scenario", str(SCENARIOS / "three_queries.ini"), "--out", str(tmp_path)]) == 0
    assert {r["query_id"] for r in rows(tmp_path / "metrics.csv")} == {"A", "B", "C"}


def test_sweep_grid_and_determinism(tmp_path):
    scenario = tmp_path / "small.ini"
    scenario.write_text(SMALL_SWEEP)
    out1, out2 = tmp_path / "one", tmp_path / "two"
    code1 = main(["sweep", "--scenario", str(scenario), "--out", str(out1)])
    code2 = main(["sweep", "--scenario", str(scenario), "--out", str(out2)])
    assert code1 == code2 and code1 in (0, 2)
    data = rows(out1 / "metrics.csv")
    assert len({(r["policy"], r["delta"]) for r in data}) == 24
    assert len(data) == 24 * 4
    assert (out1 / "metrics.csv").read_bytes() == (out2 / "metrics.csv").read_bytes()
    assert len(list(out1.glob("trace_*.csv"))) == 24
    summary = rows(out1 / "plotdata_cost_vs_delta.csv")
    assert len(summary) == 24
    assert code1 == (2 if any(r["all_met"] == "false" for r in summary) else 0)


def test_sweep_overrides(tmp_path):
    scenario = tmp_path / "small.ini"
    scenario.write_text(SMALL_SWEEP)
    code = main(["sweep", "--scenario", str(scenario), "--policy", "edf", "--delta", "1,0.5", "--rsf", "1",
                 "--rate", "vr1", "--rate-mode", "variable_known_total", "--seed", "5", "--out", str(tmp_path / "o")])
    assert code in (0, 2)
    data = rows(tmp_path / "o" / "metrics.csv")
    assert {r["policy"] for r in data} == {"edf"} and {r["delta"] for r in data} == {"1", "0.5"}
    assert {r["rsf"] for r in data} == {"1.000000"}


def test_oracle_check(tmp_path):
    code = main(["oracle-check", "--max-tuples", "10", "--instances", "200", "--seed", "7", "--out", str(tmp_path)])
    assert code == 0
    data = rows(tmp_path / "oracle_check.csv")
    assert len(data) == 200 and all(r["agree"] == "true" for r in data)


def test_fit(tmp_path, capsys):
    truth = PiecewiseLinear(((0, 1000), (40, 5000), (100, 6200)))
    samples = tmp_path / "s.csv"
    samples.write_text("n,cost_us\n" + "".join(f"{n},{truth.curve(n)}\n" for n in range(0, 101, 10)))
    assert main(["fit", "--samples", str(samples), "--segments", "2", "--out", str(tmp_path)]) == 0
    assert "pwl{[(0, 1000), (40, 5000), (100, 6200)]}" in capsys.readouterr().out
    assert rows(tmp_path / "fit.csv")[1] == {"n": "40", "cost_us": "5000"}


def test_fit_errors(tmp_path, capsys):
    assert main(["fit", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("n,cost_us\n1,2\nx,3\n")
    assert main(["fit", "--samples", str(bad), "--out", str(tmp_path)]) == 1
    assert "line 3" in capsys.readouterr().err


def test_missed_deadline_exit_code(tmp_path):
    scenario = tmp_path / "tight.ini"
    scenario.write_text(
        "[scheduler]\npolicy = edf\ncmax_ms = 5000\n[query q]\ncost = linear{1000000, 0}\ndeadline_ms = 10000\n"
        "[profile q]\nexpected = fixed{0, 1, 10}\n"
    )
    assert main(["dynamic", "--scenario", str(scenario), "--out", str(tmp_path)]) == 2
    assert rows(tmp_path / "metrics.csv")[0]["deadline_met"] == "false"


def test_infeasible_static_plan_exit_code(tmp_path, capsys):
    scenario = tmp_path / "tight.ini"
    scenario.write_text(
        "[query q]\ncost = linear{1000000, 0}\ndeadline_ms = 9500\n[profile q]\nexpected = fixed{0, 1, 10}\n"
    )
    assert main(["single", "--scenario", str(scenario), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    scenario = tmp_path / "bad.ini"
    scenario.write_text("[scheduler]\nrsf = -1/2\n")
    assert main(["dynamic", "--scenario", str(scenario), "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err
    assert main(["dynamic", "--scenario", str(SCENARIOS / "case3.ini"), "--seed", "3", "--out", str(tmp_path)]) == 1
    assert main(["dynamic", "--scenario", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 1


def test_bad_arguments_are_rejected():
    with pytest.raises(SystemExit):
        main(["sweep", "--delta", "1,-2"])
    with pytest.raises(SystemExit):
        main(["sweep", "--greedy-batch", "maybe"])


@pytest.mark.skipif(shutil.which("iqps") is None, reason="console script not installed")
def test_console_script(tmp_path):
    env = {"IQPS_LOG": "debug", "PATH": str(Path(sys.executable).parent) + ":/usr/bin:/bin"}
    done = subprocess.run(
        [shutil.which("iqps"), "single", "--scenario", str(SCENARIOS / "case3.ini"), "--out", str(tmp_path)],
        capture_output=True, text=True, env=env,
    )
    assert done.returncode == 0
    assert "single: normalized cost 1.000" in done.stdout
