import csv
import io
import json
import math

import pytest

from vnfmig.errors import InvalidParameterError
from vnfmig.experiments import (
    EXPERIMENTS,
    RUN_COLUMNS,
    ExperimentConfig,
    experiment_preset,
    run_experiment,
    summarize,
    table_text,
)
from vnfmig.feasibility import validate_plan
from vnfmig.plan import MigrationPlan
from vnfmig.scenario import Scenario


def test_fig1_row_count():
    res = run_experiment(experiment_preset("fig1", seeds=30))
    assert len(res.rows) == 120
    assert all(r["status"] == "ok" for r in res.rows)
    keys = [(r["seed"], ["exhaustive", "viterbi", "greedy", "random"].index(r["algorithm"])) for r in res.rows]
    assert keys == sorted(keys)


def test_summary_means_recompute():
    res = run_experiment(experiment_preset("fig1", seeds=8))
    for s in res.summary():
        vals = [float(r["utility"]) for r in res.rows if r["algorithm"] == s["algorithm"]]
        assert s["runs"] == len(vals) == 8
        assert s["utility_mean"] == pytest.approx(math.fsum(vals) / len(vals), abs=1e-12)


def test_summary_std_is_population():
    rows = [
        {"scenario": "x", "algorithm": "a", "status": "ok", "utility": u, "total": "", "feasible": "",
         "forwarding": "", "congestion": "", "max_time": ""}
        for u in (1.0, 3.0)
    ]
    (s,) = summarize(rows)
    assert s["utility_mean"] == 2.0
    assert s["utility_std"] == 1.0


def test_pipeline_rows_and_plan_dumps(tmp_path):
    cfg = ExperimentConfig("p", [0, 1, 2], ["viterbi+two-phase", "greedy+equal-split"], preset="three-tier")
    res = run_experiment(cfg, tmp_path)
    assert {p.name for p in (tmp_path / "plans").iterdir()} == set(res.plans)
    for name, text in res.plans.items():
        data = json.loads(text)
        sc = Scenario.from_dict(data["scenario"])
        plan = MigrationPlan.from_dict(data["plan"], sc.network)
        assert validate_plan(sc.agents, plan, sc.network).passed_except("tat") == data["feasible"]
    table = list(csv.DictReader(io.StringIO((tmp_path / "runs.csv").read_text())))
    assert len(table) == 6
    assert tuple(table[0]) == RUN_COLUMNS
    assert (tmp_path / "summary.csv").exists()
    assert ExperimentConfig.load(tmp_path / "config.json") == cfg


def test_failures_become_rows():
    # seed 8 of the tiny preset cannot host any function
    cfg = ExperimentConfig("t", [7, 8], ["viterbi+two-phase"], preset="tiny")
    rows = run_experiment(cfg).rows
    assert rows[1]["seed"] == 8
    assert rows[1]["status"] == "scenario-error"
    assert rows[0]["status"] in ("ok", "infeasible")


def test_workers_do_not_change_rows():
    cfg = experiment_preset("fig1", seeds=4)
    serial = table_text(run_experiment(cfg).rows, RUN_COLUMNS)
    parallel = table_text(run_experiment(cfg, workers=2).rows, RUN_COLUMNS)
    assert serial == parallel


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        ExperimentConfig("x", [], ["viterbi"], preset="tiny")
    with pytest.raises(InvalidParameterError):
        ExperimentConfig("x", [0], ["viterbi"])
    with pytest.raises(InvalidParameterError):
        ExperimentConfig("x", [0], ["nope"], preset="tiny")
    with pytest.raises(InvalidParameterError):
        ExperimentConfig("x", [0], ["viterbi"], preset="tiny", weights={"bogus": {}})
    with pytest.raises(InvalidParameterError):
        experiment_preset("fig9")
    for name in EXPERIMENTS:
        assert experiment_preset(name, seeds=1).seeds == [0]
