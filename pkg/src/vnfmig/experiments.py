"""Seeded sweeps over presets and algorithms, written out as CSV tables."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cost import CSV_COLUMNS
from .errors import InvalidParameterError, OracleTooLargeError, PhaseError, PlanningError
from .follower import FOLLOWER_ALGORITHMS
from .leader import LEADER_ALGORITHMS, run_leader
from .oracles import joint_oracle
from .pipeline import DEFAULT_R_FOLD, PipelineConfig, run_pipeline
from .scenario import (
    PRESETS,
    CostWeights,
    EmissionWeights,
    LeaderWeights,
    Scenario,
    dump_json,
    load_scenario,
    make_scenario,
)

RUN_COLUMNS = CSV_COLUMNS + ("utility", "u_network", "u_load", "u_power", "status", "detail")
SUMMARY_COLUMNS = (
    "scenario",
    "algorithm",
    "runs",
    "ok",
    "feasible_rate",
    "utility_mean",
    "utility_std",
    "total_mean",
    "total_std",
    "forwarding_mean",
    "congestion_mean",
    "max_time_mean",
)
JOINT_ORACLE = "joint-oracle"


def _check_algorithm(name: str) -> None:
    if name == JOINT_ORACLE:
        return
    leader, _, follower = name.partition("+")
    if leader not in LEADER_ALGORITHMS or (follower and follower not in FOLLOWER_ALGORITHMS):
        raise InvalidParameterError(
            f"unknown algorithm {name!r}: use a leader from {LEADER_ALGORITHMS}, "
            f"optionally '+' a follower from {FOLLOWER_ALGORITHMS}, or {JOINT_ORACLE!r}"
        )


@dataclass
class ExperimentConfig:
    """One sweep: every variant x seed x algorithm.

    ``algorithms`` entries are a bare leader name (leader-only row with
    utilities), ``leader+follower`` (full pipeline row with costs) or
    ``joint-oracle``. Each variant is a dict of preset options plus a
    ``label`` used in the scenario column.
    """

    name: str
    seeds: list[int]
    algorithms: list[str]
    preset: str | None = None
    scenario_file: str | None = None
    variants: list[dict] = field(default_factory=lambda: [{}])
    strict_tat: bool = False
    r_fold: float = DEFAULT_R_FOLD
    weights: dict = field(default_factory=dict)
    dump_plans: bool = True

    def __post_init__(self) -> None:
        if not self.seeds:
            raise InvalidParameterError("an experiment needs at least one seed")
        if (self.preset is None) == (self.scenario_file is None):
            raise InvalidParameterError("give exactly one of preset / scenario_file")
        if self.preset is not None and self.preset not in PRESETS:
            raise InvalidParameterError(f"unknown preset {self.preset!r}; choose from {PRESETS}")
        if not self.algorithms:
            raise InvalidParameterError("an experiment needs at least one algorithm")
        for a in self.algorithms:
            _check_algorithm(a)
        unknown = set(self.weights) - {"cost", "leader", "emission"}
        if unknown:
            raise InvalidParameterError(f"unknown weight groups {sorted(unknown)}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _label(variant: dict, preset: str | None) -> str:
    base = preset or "file"
    tag = variant.get("label")
    return f"{base}-{tag}" if tag else base


def build_scenario(config: ExperimentConfig, variant: dict, seed: int) -> Scenario:
    opts = {k: v for k, v in variant.items() if k != "label"}
    if config.scenario_file is not None:
        sc = load_scenario(config.scenario_file)
    else:
        sc = make_scenario(config.preset, seed, **opts)
    w = config.weights
    return replace(
        sc,
        name=_label(variant, config.preset),
        seed=seed,
        cost_weights=CostWeights(**w["cost"]) if "cost" in w else sc.cost_weights,
        leader_weights=LeaderWeights(**w["leader"]) if "leader" in w else sc.leader_weights,
        emission_weights=EmissionWeights(**w["emission"]) if "emission" in w else sc.emission_weights,
    )


# ---------------------------------------------------------------- one run


def _empty_row(scenario: str, seed: int, algorithm: str) -> dict:
    row = {c: "" for c in RUN_COLUMNS}
    row.update(scenario=scenario, seed=seed, algorithm=algorithm)
    return row


def _utility_cells(parts, total) -> dict:
    u_n, u_l, u_p = parts
    return {"utility": total, "u_network": u_n, "u_load": u_l, "u_power": u_p}


def run_one(sc: Scenario, algorithm: str, config: ExperimentConfig, seed: int) -> tuple[dict, str | None]:
    """One table row plus, for pipeline runs, the plan dump text."""
    row = _empty_row(sc.name, seed, algorithm)
    try:
        if algorithm == JOINT_ORACLE:
            res = joint_oracle(sc.folded(config.r_fold))
            row.update(
                forwarding=res.forwarding,
                congestion=res.congestion,
                total=res.cost,
                status="ok",
                detail=f"{res.assignments} destination vectors",
            )
            return row, None
        leader, _, follower = algorithm.partition("+")
        if not follower:
            sol = run_leader(sc.folded(config.r_fold), leader, seed=seed)
            row.update(_utility_cells(sol.utility_parts, sol.total_utility), status="ok")
            return row, None
        pc = PipelineConfig(leader, follower, config.strict_tat, config.r_fold, seed=seed)
        result = run_pipeline(sc, pc)
    except OracleTooLargeError as exc:
        row.update(status="too-large", detail=str(exc))
        return row, None
    except PhaseError as exc:
        row.update(status=f"error:{exc.phase}", detail=str(exc.cause))
        return row, None
    except PlanningError as exc:
        row.update(status="error", detail=f"{type(exc).__name__}: {exc}")
        return row, None
    rep = result.report
    row.update(rep.csv_row(sc.name, seed, algorithm))
    row.update(_utility_cells(result.leader.utility_parts, result.leader.total_utility))
    row.update(status="ok" if rep.feasible else "infeasible", detail=";".join(rep.feasibility.failing))
    return row, dump_json(result.to_dict())


def _run_task(args: tuple[ExperimentConfig, int, int]) -> list[tuple[tuple, dict, str | None]]:
    config, vi, seed = args
    variant = config.variants[vi]
    try:
        sc = build_scenario(config, variant, seed)
    except PlanningError as exc:
        out = []
        for ai, alg in enumerate(config.algorithms):
            row = _empty_row(_label(variant, config.preset), seed, alg)
            row.update(status="scenario-error", detail=str(exc))
            out.append(((vi, seed, ai), row, None))
        return out
    return [
        ((vi, seed, ai), *run_one(sc, alg, config, seed)) for ai, alg in enumerate(config.algorithms)
    ]


# ---------------------------------------------------------------- sweep


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    plans: dict[str, str]

    def summary(self) -> list[dict]:
        return summarize(self.rows)


def run_experiment(
    config: ExperimentConfig, out_dir: str | Path | None = None, workers: int = 1
) -> ExperimentResult:
    """Run every (variant, seed, algorithm) cell; failures become status rows."""
    tasks = [(config, vi, seed) for vi in range(len(config.variants)) for seed in config.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            chunks = list(ex.map(_run_task, tasks))
    else:
        chunks = [_run_task(t) for t in tasks]
    results = sorted((r for chunk in chunks for r in chunk), key=lambda r: r[0])
    rows = [r[1] for r in results]
    plans = {}
    for key, row, dump in results:
        if dump is not None and config.dump_plans:
            plans[f"{row['scenario']}_s{row['seed']}_{row['algorithm']}.json"] = dump
    result = ExperimentResult(config, rows, plans)
    if out_dir is not None:
        write_outputs(result, Path(out_dir))
    return result


def _cell(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_outputs(result: ExperimentResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "runs.csv").write_text(table_text(result.rows, RUN_COLUMNS))
    (out / "summary.csv").write_text(table_text(result.summary(), SUMMARY_COLUMNS))
    (out / "config.json").write_text(dump_json(result.config.to_dict()))
    if result.plans:
        plan_dir = out / "plans"
        plan_dir.mkdir(exist_ok=True)
        for name, text in sorted(result.plans.items()):
            (plan_dir / name).write_text(text)


def _mean_std(values: list[float]) -> tuple[float | str, float | str]:
    if not values:
        return "", ""
    n = len(values)
    mean = math.fsum(values) / n
    if not math.isfinite(mean):
        return mean, ""
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Mean and population std per (scenario, algorithm) over rows with status ok/infeasible."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["scenario"], r["algorithm"]), []).append(r)
    out = []
    for (scenario, algorithm), rs in groups.items():
        done = [r for r in rs if r["status"] in ("ok", "infeasible")]

        def col(name: str) -> list[float]:
            return [float(r[name]) for r in done if r[name] != ""]

        u_mean, u_std = _mean_std(col("utility"))
        t_mean, t_std = _mean_std(col("total"))
        feas = col("feasible")
        out.append(
            {
                "scenario": scenario,
                "algorithm": algorithm,
                "runs": len(rs),
                "ok": len(done),
                "feasible_rate": math.fsum(feas) / len(feas) if feas else "",
                "utility_mean": u_mean,
                "utility_std": u_std,
                "total_mean": t_mean,
                "total_std": t_std,
                "forwarding_mean": _mean_std(col("forwarding"))[0],
                "congestion_mean": _mean_std(col("congestion"))[0],
                "max_time_mean": _mean_std(col("max_time"))[0],
            }
        )
    return out


# ---------------------------------------------------------------- presets


def experiment_preset(name: str, seeds: int = 30) -> ExperimentConfig:
    """Desk-scale versions of the five evaluation sweeps."""
    s = list(range(seeds))
    leaders = ["exhaustive", "viterbi", "greedy", "random"]
    pipelines = ["viterbi+two-phase", "greedy+equal-split"]
    if name == "fig1":
        return ExperimentConfig("fig1", s, leaders, preset="trapezoid")
    if name == "fig2":
        variants = [{"label": f"l{k}", "levels": k} for k in (3, 4)]
        return ExperimentConfig("fig2", s, leaders, preset="modified-trapezoid", variants=variants)
    if name == "fig3":
        variants = [{"label": f"f{f}", "fraction": f} for f in (0.1, 0.2, 0.3, 0.4)]
        return ExperimentConfig("fig3", s, ["viterbi", "greedy", "random"], preset="grid", variants=variants)
    if name == "fig4":
        return ExperimentConfig("fig4", s, pipelines + [JOINT_ORACLE], preset="tiny")
    if name == "fig5":
        variants = [{"label": f"n{n}", "size": n} for n in (18, 23, 27, 32, 36, 41, 45)]
        return ExperimentConfig("fig5", s, pipelines, preset="three-tier", variants=variants)
    raise InvalidParameterError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")


EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "fig5")
