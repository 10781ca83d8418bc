"""Experiment runner.

    optctrl run <config.txt> [...] [--preset NAME] [--solver nn|fbs|both]
                [--seed N] [--out DIR] [--jobs N] [--dump-config]
    optctrl list-presets

Every run writes its artifacts into a per-scenario output directory:
trajectory.csv, controls.csv, loss_log.csv, pmp_residual.csv, summary.txt
(flat key = value), plus parameter snapshots and the resolved config.
Exit status: 0 success, 1 bad configuration, 2 training divergence,
3 sweep instability (when FBS is the only solver).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine
from .errors import AdjointInstabilityError, DivergenceError
from .fbs import SweepConfig, sweep_solve
from .gradients import pmp_residual, pmp_residual_curve
from .models import STATE_NAMES, baseline_initial_state, baseline_params
from .objective import doses
from .ode import Trajectory
from .optimize import train
from .presets import (PRESETS, ConfigError, ScenarioConfig, dump_config,
                      get_preset, load_config)
from .problems import ControlProblem, combo_problem, immuno_problem
from . import mlp


def build_problem(cfg: ScenarioConfig) -> ControlProblem:
    y0 = baseline_initial_state()
    if cfg.model == "immuno":
        return immuno_problem(cfg.bounds, cfg.weights, y0, cfg.tf,
                              n_steps=cfg.n_steps)
    return combo_problem(cfg.bounds, cfg.weights, cfg.coupling, y0, cfg.tf,
                         n_steps=cfg.n_steps)


def _control_names(n):
    return [f"u{j + 1}" for j in range(n)]


def _write_controls_csv(path, ts, U_nodes, bounds):
    v = doses(U_nodes, bounds)
    m = U_nodes.shape[1]
    header = (["t"] + _control_names(m) + [f"v{j + 1}" for j in range(m)])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(ts)):
            row = [f"{ts[i]:.17g}"]
            row += [f"{x:.17g}" for x in U_nodes[i]]
            row += [f"{x:.17g}" for x in v[i]]
            fh.write(",".join(row) + "\n")


def _write_loss_log(path, result):
    with open(path, "w") as fh:
        fh.write("iter,total,running_state,running_toxicity,terminal,grad_norm\n")
        for i, (br, gn) in enumerate(zip(result.loss_history,
                                         result.grad_norms), start=1):
            fh.write(f"{i},{br.total:.17g},{br.running_state:.17g},"
                     f"{br.running_toxicity:.17g},{br.terminal:.17g},{gn:.17g}\n")


def _write_summary(path, summary: dict):
    with open(path, "w") as fh:
        for key, value in summary.items():
            if isinstance(value, float):
                fh.write(f"{key} = {value:.17g}\n")
            else:
                fh.write(f"{key} = {value}\n")


def _nn_trajectory(problem: ControlProblem, params):
    n = problem.n_steps
    h = (problem.tf - problem.t0) / n
    U_st, _ = problem.controls_at(params, problem.stage_times())
    ys, _ = engine.rk4_forward(problem.model, problem.y0, problem.t0, h, n, U_st)
    ts = problem.grid()
    return ts, ys, U_st[0::2]


def _state_summary(summary, prefix, ts, ys):
    names = STATE_NAMES
    for j, name in enumerate(names[:ys.shape[1]]):
        summary[f"{prefix}{name}_t0"] = float(ys[0, j])
        summary[f"{prefix}{name}_tf"] = float(ys[-1, j])


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> tuple:
    """Run one scenario; returns (exit_code, summary dict)."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dump_config(cfg))
    problem = build_problem(cfg)
    summary = {
        "name": cfg.name, "model": cfg.model, "solver": cfg.solver,
        "seed": cfg.seed, "tf": cfg.tf, "n_steps": cfg.n_steps,
        "engine": engine.DEFAULT_IMPL,
    }
    exit_code = 0

    if cfg.solver == "simulate":
        U_nodes = np.tile(problem.cost.anchor, (cfg.n_steps + 1, 1))
        U_st = engine.stage_controls_from_nodes(U_nodes)
        h = (cfg.tf - problem.t0) / cfg.n_steps
        ys, _ = engine.rk4_forward(problem.model, problem.y0, problem.t0, h,
                                   cfg.n_steps, U_st)
        ts = problem.grid()
        Trajectory(ts=ts, ys=ys).to_csv(out / "trajectory.csv",
                                        state_names=STATE_NAMES)
        _write_controls_csv(out / "controls.csv", ts, U_nodes, cfg.bounds)
        br = problem.cost.breakdown(Trajectory(ts=ts, ys=ys), U_nodes)
        summary.update({"termination": "simulated", "J_total": br.total,
                        "J_running_state": br.running_state,
                        "J_running_toxicity": br.running_toxicity,
                        "J_terminal": br.terminal})
        _state_summary(summary, "", ts, ys)
        _write_summary(out / "summary.txt", summary)
        return 0, summary

    if cfg.solver in ("nn", "both"):
        tc = replace(cfg.train, seed=cfg.seed, n_steps=cfg.n_steps)
        result = train(problem, tc)
        ts, ys, U_nodes = _nn_trajectory(problem, result.params)
        Trajectory(ts=ts, ys=ys).to_csv(out / "trajectory.csv",
                                        state_names=STATE_NAMES)
        _write_controls_csv(out / "controls.csv", ts, U_nodes, cfg.bounds)
        _write_loss_log(out / "loss_log.csv", result)
        rep = pmp_residual(result.params, problem)
        rep.to_csv(out / "pmp_residual.csv",
                   control_names=_control_names(problem.n_control))
        mlp.save_params_csv(result.params, out / "params_final.csv")
        for it, flat in result.snapshots:
            mlp.save_params_csv(mlp.unflatten_params(flat, result.params),
                                out / f"params_iter_{it:06d}.csv")
        br = result.loss_history[-1]
        summary.update({
            "termination": result.termination,
            "iterations": len(result.loss_history),
            "adam_iters": result.adam_iters,
            "bfgs_iters": result.bfgs_iters,
            "wall_time_s": result.wall_time,
            "J_total": br.total,
            "J_running_state": br.running_state,
            "J_running_toxicity": br.running_toxicity,
            "J_terminal": br.terminal,
            "grad_norm_final": result.grad_norms[-1],
            "pmp_max_residual": rep.max_residual,
        })
        _state_summary(summary, "", ts, ys)
        if result.termination == "divergence":
            exit_code = 2

    if cfg.solver in ("fbs", "both"):
        fc = SweepConfig(max_iters=cfg.fbs.max_iters, tol=cfg.fbs.tol,
                         omega=cfg.fbs.omega, n_steps=cfg.n_steps)
        prefix = "fbs_" if cfg.solver == "both" else ""
        try:
            state, rep = sweep_solve(problem, config=fc)
            ts = problem.grid()
            Trajectory(ts=ts, ys=state.ys).to_csv(
                out / f"{prefix}trajectory.csv", state_names=STATE_NAMES)
            _write_controls_csv(out / f"{prefix}controls.csv", ts,
                                state.U_nodes, cfg.bounds)
            rep.to_csv(out / "sweep_report.csv")
            pres = pmp_residual_curve(problem, state.U_nodes)
            pres.to_csv(out / f"{prefix}pmp_residual.csv",
                        control_names=_control_names(problem.n_control))
            summary.update({
                "fbs_termination": rep.termination,
                "fbs_converged": rep.converged,
                "fbs_iterations": rep.iterations,
                "fbs_objective": rep.objective,
                "fbs_max_abs_lambda": max(r[2] for r in rep.records),
                "fbs_pmp_max_residual": pres.max_residual,
            })
            _state_summary(summary, "fbs_", ts, state.ys)
            if cfg.solver == "both" and "J_total" in summary:
                gap = abs(rep.objective - summary["J_total"]) / abs(summary["J_total"])
                summary["fbs_nn_rel_gap"] = gap
        except (DivergenceError, AdjointInstabilityError) as exc:
            # Sweep blow-up is a recorded outcome, not a crash.
            summary.update({
                "fbs_termination": "instability",
                "fbs_converged": False,
                "fbs_iteration_failed": getattr(exc, "iteration", -1),
                "fbs_error": f"{type(exc).__name__}: {exc}",
                "fbs_blowup_time": getattr(exc, "t", float("nan")),
                "fbs_max_abs_lambda": getattr(exc, "max_abs_lambda",
                                              float("nan")),
            })
            report = getattr(exc, "report", None)
            if report is not None:
                report.to_csv(out / "sweep_report.csv")
            if cfg.solver == "fbs":
                exit_code = 3

    _write_summary(out / "summary.txt", summary)
    return exit_code, summary


def _run_from_text(args):
    text, out_dir = args
    from .presets import parse_config
    cfg = parse_config(text)
    return run_scenario(cfg, out_dir=out_dir)


def list_presets_text() -> str:
    """Builtin presets and baseline model values, one key = value per line."""
    p = baseline_params()
    y0 = baseline_initial_state()
    lines = ["# baseline model parameters (Table values shipped as preset 'baseline')"]
    for name in ("r_C", "r_max", "C_star", "kappa", "r_A", "delta_A", "r_I",
                 "delta_I", "r_E", "E_star", "r_S", "S_star", "beta", "gamma"):
        lines.append(f"baseline.{name} = {getattr(p, name):g}")
    lines.append("# baseline initial state")
    for name, v in zip(STATE_NAMES, y0):
        lines.append(f"initial.{name} = {v:g}")
    for name in sorted(PRESETS):
        lines.append("")
        lines.append(f"# preset {name}")
        lines.append(dump_config(PRESETS[name]()).rstrip())
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="optctrl",
        description="Neural-network optimal control of tumor-immune dynamics "
                    "with a PMP sweep baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one or more scenarios")
    run_p.add_argument("configs", nargs="*", help="scenario config files")
    run_p.add_argument("--preset", action="append", default=[],
                       choices=sorted(PRESETS), help="builtin scenario")
    run_p.add_argument("--solver", choices=["nn", "fbs", "both"], default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None,
                       help="output directory (single scenario only)")
    run_p.add_argument("--jobs", type=int, default=1,
                       help="run scenarios in parallel processes")
    run_p.add_argument("--dump-config", action="store_true",
                       help="print the resolved config(s) and exit")

    sub.add_parser("list-presets", help="print builtin presets and model values")

    args = parser.parse_args(argv)

    if args.command == "list-presets":
        sys.stdout.write(list_presets_text())
        return 0

    scenarios = []
    try:
        for path in args.configs:
            scenarios.append(load_config(path))
        for name in args.preset:
            scenarios.append(get_preset(name))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not scenarios:
        print("error: nothing to run (pass configs and/or --preset)",
              file=sys.stderr)
        return 1

    updates = {}
    if args.solver:
        updates["solver"] = args.solver
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        scenarios = [replace(c, **updates) for c in scenarios]
    if args.out:
        if len(scenarios) > 1:
            print("error: --out needs a single scenario", file=sys.stderr)
            return 1
        scenarios = [replace(scenarios[0], out=args.out)]

    if args.dump_config:
        for cfg in scenarios:
            sys.stdout.write(dump_config(cfg))
        return 0

    worst = 0
    if args.jobs > 1 and len(scenarios) > 1:
        payload = [(dump_config(c), c.out) for c in scenarios]
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
            for (code, summary), cfg in zip(ex.map(_run_from_text, payload),
                                            scenarios):
                print(f"{cfg.name}: exit={code} "
                      f"termination={summary.get('termination', summary.get('fbs_termination'))}")
                worst = max(worst, code)
    else:
        for cfg in scenarios:
            code, summary = run_scenario(cfg)
            print(f"{cfg.name}: exit={code} "
                  f"termination={summary.get('termination', summary.get('fbs_termination'))}")
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
