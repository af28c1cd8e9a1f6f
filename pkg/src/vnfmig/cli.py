"""Command line entry point: generate, plan, sweep, validate, oracle."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .cost import total_cost
from .errors import PhaseError, PlanningError
from .experiments import (
    EXPERIMENTS,
    RUN_COLUMNS,
    ExperimentConfig,
    experiment_preset,
    run_experiment,
    table_text,
)
from .follower import FOLLOWER_ALGORITHMS, AllocationProblem, FollowerOptions, solve_follower_leader
from .leader import LEADER_ALGORITHMS, run_leader
from .oracles import GRID_STEPS, brute_force_follower, joint_oracle
from .pipeline import DEFAULT_R_FOLD, PipelineConfig, run_pipeline
from .plan import MigrationPlan
from .scenario import PRESETS, Scenario, dump_json, load_scenario, make_scenario, save_scenario

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_ERROR = 2

AGENT_COLUMNS = ("agent", "destination", "tau", "tat", "violation")


def _emit(text: str, out: Path | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _scenario(args) -> Scenario:
    if args.scenario:
        return load_scenario(args.scenario)
    return make_scenario(args.preset, args.seed)


def _add_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", help="scenario JSON written by 'generate'")
    src.add_argument("--preset", choices=PRESETS, default="tiny")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="output directory (stdout if omitted)")


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    sc = make_scenario(args.preset, args.seed)
    if args.out is None:
        sys.stdout.write(dump_json(sc.to_dict()))
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        save_scenario(sc, args.out / "scenario.json")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = _scenario(args)
    config = PipelineConfig(args.leader, args.follower, args.strict_tat, args.r_fold, seed=args.seed)
    result = run_pipeline(sc, config)
    rep = result.report
    dump = dump_json(result.to_dict())
    if args.out is None:
        sys.stdout.write(dump)
    else:
        _emit(dump, args.out, "plan.json")
        row = rep.csv_row(sc.name, sc.seed, config.algorithm)
        row.update(
            utility=result.leader.total_utility,
            u_network=result.leader.utility_parts[0],
            u_load=result.leader.utility_parts[1],
            u_power=result.leader.utility_parts[2],
            status="ok" if rep.feasible else "infeasible",
            detail=";".join(rep.feasibility.failing),
        )
        _emit(table_text([row], RUN_COLUMNS), args.out, "runs.csv")
        agent_rows = [
            {
                "agent": a.id,
                "destination": result.plan.destinations[a.id],
                "tau": rep.migration_times[a.id],
                "tat": a.tat,
                "violation": rep.migration_times[a.id] > a.tat + 1e-9,
            }
            for a in result.scenario.agents
        ]
        _emit(table_text(agent_rows, AGENT_COLUMNS), args.out, "agents.csv")
    if not rep.feasible:
        print(rep.feasibility.summary(), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        config = experiment_preset(args.experiment, args.seeds)
    if args.strict_tat:
        config.strict_tat = True
    if args.r_fold is not None:
        config.r_fold = args.r_fold
    result = run_experiment(config, args.out, workers=args.workers)
    if args.out is None:
        sys.stdout.write(table_text(result.rows, RUN_COLUMNS))
    return EXIT_OK


def cmd_validate(args) -> int:
    """Re-check a plan dump against the scenario embedded in it."""
    data = json.loads(Path(args.plan).read_text())
    sc = Scenario.from_dict(data["scenario"])
    net = sc.network
    plan = MigrationPlan.from_dict(data["plan"], net)
    strict = bool(data.get("config", {}).get("strict_tat", False)) or args.strict_tat
    rep = total_cost(sc.agents, plan, net, sc.cost_weights, sc.queue_costs, strict)
    text = rep.feasibility.summary() + f"\ntotal {rep.total!r}\nfeasible {rep.feasible}\n"
    _emit(text, args.out, "validate.txt")
    if bool(data.get("feasible", rep.feasible)) != rep.feasible:
        print("stored feasibility flag disagrees with re-validation", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    sc = _scenario(args)
    pc = PipelineConfig(args.leader, args.follower, args.strict_tat, args.r_fold, seed=args.seed)
    folded = sc.folded(args.r_fold)
    rows = []
    if args.mode == "exhaustive":
        for alg in ("exhaustive", args.leader):
            sol = run_leader(folded, alg, seed=args.seed)
            rows.append({"method": alg, "value": sol.total_utility, "destinations": _dest(sol.destinations)})
    elif args.mode == "grid":
        leader = run_leader(folded, args.leader, seed=args.seed)
        prob = AllocationProblem.build(folded.network, folded.agents, leader.destinations, folded.hop_bound)
        grid = brute_force_follower(folded.agents, leader.destinations, folded.network, args.grid_step)
        heur = run_pipeline(sc, replace(pc, follower="two-phase"))
        stage = solve_follower_leader(prob, FollowerOptions(strict_tat=args.strict_tat))
        rows.append({"method": "grid", "value": grid.cost, "destinations": _dest(leader.destinations)})
        rows.append(
            {"method": "two-phase", "value": heur.report.forwarding, "destinations": _dest(leader.destinations)}
        )
        rows.append({"method": "lp-objective", "value": stage.objective, "destinations": ""})
    else:
        res = joint_oracle(folded)
        heur = run_pipeline(sc, pc)
        rows.append({"method": "joint", "value": res.cost, "destinations": _dest(res.destinations)})
        rows.append({"method": pc.algorithm, "value": heur.report.total, "destinations": _dest(heur.plan.destinations)})
    _emit(table_text(rows, ("method", "value", "destinations")), args.out, "oracle.csv")
    return EXIT_OK


def _dest(d) -> str:
    return " ".join(f"{k}={v}" for k, v in sorted(d.items()))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnfmig", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a preset scenario as JSON")
    p.add_argument("--preset", choices=PRESETS, default="tiny")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    def algorithm_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--leader", choices=LEADER_ALGORITHMS, default="viterbi")
        p.add_argument("--follower", choices=FOLLOWER_ALGORITHMS, default="two-phase")
        p.add_argument("--strict-tat", action="store_true", help="enforce deadlines inside the LP")
        p.add_argument("--r-fold", type=float, default=DEFAULT_R_FOLD)

    p = sub.add_parser("plan", help="plan one scenario; exit 1 if infeasible")
    _add_source(p)
    _add_common(p)
    algorithm_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep", help="run an experiment and write runs.csv / summary.csv")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--experiment", choices=EXPERIMENTS)
    src.add_argument("--config", help="ExperimentConfig JSON")
    p.add_argument("--seeds", type=int, default=30, help="seed count for --experiment")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--strict-tat", action="store_true")
    p.add_argument("--r-fold", type=float, default=None)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="re-check a plan dump; exit 1 if infeasible")
    p.add_argument("plan", help="plan.json written by 'plan'")
    p.add_argument("--strict-tat", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="compare a heuristic against an exact search")
    p.add_argument("mode", choices=("exhaustive", "grid", "joint"))
    _add_source(p)
    _add_common(p)
    algorithm_flags(p)
    p.add_argument("--grid-step", type=float, choices=GRID_STEPS, default=0.05)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PhaseError as exc:
        print(f"error in {exc.phase}: {exc.cause}", file=sys.stderr)
    except PlanningError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR
