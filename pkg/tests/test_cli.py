import csv
import json

import pytest

from cpcplan import cli
from cpcplan.cli import RunOptions, main, run_task
from cpcplan.sas import format_sas
from cpcplan.search import parse_plan, validate_plan

from helpers import FIXTURES, make_task, toy_task

TOY = str(FIXTURES / "toy.sas")


def test_solve_toy(tmp_path, capsys):
    plan, report = tmp_path / "plan", tmp_path / "report.json"
    code = main(["solve", TOY, "--seed", "1", "--virtual-clock", "--plan", str(plan), "--report", str(report)])
    assert code == 0
    assert validate_plan(toy_task(), parse_plan(plan.read_text())).cost == 5
    data = json.loads(report.read_text())
    assert data["coverage"] == "solved" and data["plan_cost"] == 5
    assert data["total_time"] >= data["search_time"]
    for key in ("init_h", "expansions", "search_time", "total_time", "peak_memory_bytes", "phases",
                "census", "bandits"):
        assert key in data
    assert set(data["census"]) == {"count", "provenance", "pdbs", "partial_pdbs"}
    assert "cost 5" in capsys.readouterr().out


def test_zero_construction_time_blind_search(tmp_path):
    report = tmp_path / "r.json"
    assert main(["solve", TOY, "--construction-time", "0", "--virtual-clock", "--report", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["census"]["count"] == 0 and data["init_h"] == 0 and data["plan_cost"] == 5


def test_input_errors(tmp_path):
    assert main(["solve", str(tmp_path / "missing.sas")]) == cli.EXIT_INPUT
    bad = tmp_path / "bad.sas"
    bad.write_text("begin_version\n2\nend_version\n")
    assert main(["solve", str(bad)]) == cli.EXIT_INPUT
    assert main(["solve", TOY, "--construction-time", "-1"]) == cli.EXIT_INPUT


def test_unsolvable_exit_code(tmp_path):
    task = make_task([3], [("a", {0: 0}, {0: 1}, 1)], [0], {0: 2})
    path = tmp_path / "dead.sas"
    path.write_text(format_sas(task))
    assert main(["solve", str(path), "--virtual-clock"]) == cli.EXIT_UNSOLVABLE


def test_limit_report(tmp_path):
    report = tmp_path / "r.json"
    code = main(["solve", TOY, "--virtual-clock", "--overall-time", "0", "--report", str(report)])
    assert code == cli.EXIT_LIMIT
    data = json.loads(report.read_text())
    assert data["coverage"] == "failed" and data["error"].startswith("[search]")


def test_interrupted_run_reports_partial_stats(monkeypatch):
    def interrupted(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(cli, "astar_search", interrupted)
    report, plan = run_task(TOY, RunOptions(seed=1, virtual_clock=True))
    assert plan is None
    assert report.coverage == "failed" and report.exit_code == cli.EXIT_INTERRUPTED
    assert report.census["count"] >= 1


def test_reports_are_deterministic_under_virtual_clock(tmp_path):
    texts = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        main(["solve", str(FIXTURES / "gripper.sas"), "--seed", "3", "--virtual-clock",
              "--construction-time", "5", "--report", str(path)])
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]


def test_batch_csv(tmp_path):
    out = tmp_path / "summary.csv"
    tasks = [str(FIXTURES / f) for f in ("toy.sas", "gripper.sas", "blocks.sas")]
    assert main(["batch", *tasks, "--virtual-clock", "--construction-time", "2", "--csv", str(out),
                 "--report-dir", str(tmp_path / "reports")]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == cli.CSV_COLUMNS
    assert [r[0] for r in rows[1:4]] == ["toy.sas", "gripper.sas", "blocks.sas"]
    mean = rows[4]
    assert mean[0] == "MEAN" and mean[1] == "fixtures" and mean[2] == "3"
    assert float(mean[3]) == pytest.approx((5 + 11 + 8) / 3)
    assert len(list((tmp_path / "reports").iterdir())) == 3
