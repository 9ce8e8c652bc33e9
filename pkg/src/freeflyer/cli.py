"""Scenario runner: plan, simulate, and log trajectories and metrics.

Subcommands:
    run       execute plan -> (pd | mpc) loop, write trajectory.csv + metrics.json
    validate  structural + physical checks without running
    plan      global plan only; write sampled references to plan.csv

Exit codes: 0 success with zero collision flags, 1 collisions occurred,
2 planning infeasible, 3 scenario load/validation error.

The trajectory CSV has one row per control step with a fixed column order:
t, robot pose/twist (p, q wxyz, v, w), one pose/twist block per bag body,
the applied wrench, per-body corridor margins, the collision flag, and the
per-step MPC cost terms (zeros for the PD controller).  Margins and the
collision flag aggregate every simulator substep inside the control step.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from .control import CostBreakdown, MpcController, pd_control
from .core import Vec3, Wrench
from .planner_global import (
    GlobalPlan,
    PlanInfeasibleError,
    PlanRequest,
    plan_global,
)
from .scenario import Scenario, ScenarioError, bundled_scenario_path, load_scenario, validate_scenario
from .simdyn import SimState, Simulator

__all__ = ["main", "run_scenario", "plan_for_scenario"]

_WORKERS_ENV = "FREEFLYER_WORKERS"

EXIT_OK = 0
EXIT_COLLISIONS = 1
EXIT_INFEASIBLE = 2
EXIT_LOAD_ERROR = 3


def _resolve_path(spec: str) -> Path:
    path = Path(spec)
    if path.exists():
        return path
    return bundled_scenario_path(path.stem)


def plan_for_scenario(scenario: Scenario) -> GlobalPlan:
    request = PlanRequest(
        start=scenario.start,
        goal=scenario.goal,
        corridor=scenario.corridor,
        limits=scenario.limits,
        degree=scenario.planner_degree,
        max_scp_iters=scenario.max_scp_iters,
        trust_region=scenario.trust_region,
        clearance=scenario.clearance,
    )
    return plan_global(request)


def _csv_header(num_bags: int) -> str:
    cols = ["t"]
    for prefix in ["robot"] + [f"bag{i}" for i in range(num_bags)]:
        cols += [f"{prefix}_{c}" for c in (
            "px", "py", "pz", "qw", "qx", "qy", "qz",
            "vx", "vy", "vz", "wx", "wy", "wz",
        )]
    cols += ["fx", "fy", "fz", "tx", "ty", "tz"]
    cols += ["robot_margin"] + [f"bag{i}_margin" for i in range(num_bags)]
    cols += ["collision_flag", "cost_tracking", "cost_relvel", "cost_collision", "cost_total"]
    return ",".join(cols)


def _csv_row(
    state: SimState,
    wrench: Wrench,
    margins: tuple[float, ...],
    collided: bool,
    cost: CostBreakdown | None,
) -> str:
    values: list[float] = [state.time]
    for body in (state.robot, *state.bag_bodies):
        values += body.position.to_tuple()
        values += body.orientation.to_wxyz()
        values += body.linear_velocity.to_tuple()
        values += body.angular_velocity.to_tuple()
    values += wrench.force.to_tuple()
    values += wrench.torque.to_tuple()
    values += margins
    values.append(1.0 if collided else 0.0)
    if cost is None:
        values += [0.0, 0.0, 0.0, 0.0]
    else:
        values += [cost.tracking, cost.relative_velocity, cost.collision, cost.total]
    return ",".join(repr(v) for v in values)


class _RunLog:
    def __init__(self, scenario: Scenario, simulator: Simulator):
        self.scenario = scenario
        self.simulator = simulator
        self.rows: list[str] = []
        self.collision_steps = 0
        self.min_margin = float("inf")
        self.sq_tracking_error = 0.0
        self.sim_steps = 0

    def substep_probe(self, state: SimState) -> tuple[tuple[float, ...], bool]:
        report = self.simulator.collision_report(state, self.scenario.corridor)
        margins = (report.robot_margin, *report.bag_margins)
        self.min_margin = min(self.min_margin, *margins)
        self.sim_steps += 1
        return margins, report.any_collision

    def control_step_row(
        self,
        state: SimState,
        wrench: Wrench,
        step_margins: tuple[float, ...],
        collided: bool,
        tracking_error: float,
        cost: CostBreakdown | None,
    ) -> None:
        if collided:
            self.collision_steps += 1
        self.sq_tracking_error += tracking_error**2
        self.rows.append(_csv_row(state, wrench, step_margins, collided, cost))

    @property
    def rms_tracking_error(self) -> float:
        if not self.rows:
            return 0.0
        return float(np.sqrt(self.sq_tracking_error / len(self.rows)))


def _apply_wrench_for_control_step(
    simulator: Simulator, state: SimState, wrench: Wrench, control_dt: float, log: _RunLog
) -> tuple[SimState, tuple[float, ...], bool]:
    """ZOH-apply one wrench for a control period; aggregate substep margins."""
    substeps = max(1, int(round(control_dt / simulator.dt)))
    margins: tuple[float, ...] | None = None
    collided = False
    for _ in range(substeps):
        state = simulator.step(state, wrench)
        sub_margins, sub_collided = log.substep_probe(state)
        margins = (
            sub_margins
            if margins is None
            else tuple(min(a, b) for a, b in zip(margins, sub_margins))
        )
        collided = collided or sub_collided
    assert margins is not None
    return state, margins, collided


def _step_seed(base_seed: int, step_index: int) -> int:
    return int(
        np.random.SeedSequence(entropy=(base_seed, step_index)).generate_state(
            1, dtype=np.uint64
        )[0]
    )


def run_scenario(
    path: str | Path,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    workers: int | None = None,
) -> int:
    """Run a scenario end to end; returns the process exit code."""
    try:
        scenario = load_scenario(_resolve_path(str(path)), seed_override=seed)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR

    if workers is None:
        workers = int(os.environ.get(_WORKERS_ENV, "1"))

    out = Path(out_dir) if out_dir is not None else Path("out") / scenario.name
    out.mkdir(parents=True, exist_ok=True)

    plan_start = time.perf_counter()
    try:
        plan = plan_for_scenario(scenario)
    except PlanInfeasibleError as exc:
        print(f"planning infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    plan_wall = time.perf_counter() - plan_start

    simulator = Simulator(
        scenario.robot_params, scenario.limits, scenario.cargo, dt=scenario.sim_dt
    )
    state = simulator.initial_state(scenario.start)
    log = _RunLog(scenario, simulator)
    control_dt = scenario.mpc.control_dt
    horizon = plan.total_duration + scenario.settle_seconds
    mpc_wall_times: list[float] = []

    if scenario.controller_type == "mpc":
        rollout_sim = Simulator(
            scenario.robot_params,
            scenario.limits,
            scenario.rollout_cargo,
            dt=control_dt,
        )
        controller = MpcController(
            rollout_sim, scenario.corridor, scenario.gains, scenario.mpc, workers=workers
        )
        replan_index = 0
        last_accel = Vec3.zero()
        while state.time < horizon - 1e-9:
            t_step = time.perf_counter()
            controls, diagnostics = controller.mpc_step(
                state,
                plan,
                state.time,
                step_seed=_step_seed(scenario.seed, replan_index),
                current_acceleration=last_accel,
            )
            mpc_wall_times.append(time.perf_counter() - t_step)
            best_cost = (
                min(diagnostics, key=lambda r: (r.cost.total, r.candidate_index)).cost
                if diagnostics
                else None
            )
            for wrench in controls:
                state, margins, collided = _apply_wrench_for_control_step(
                    simulator, state, wrench, control_dt, log
                )
                reference = plan.reference_at(state.time)
                err = (reference.state.position - state.robot.position).norm()
                log.control_step_row(state, wrench, margins, collided, err, best_cost)
                if state.time >= horizon - 1e-9:
                    break
            last_accel = controls[-1].force.scale(1.0 / scenario.robot_params.mass)
            replan_index += 1
    else:
        while state.time < horizon - 1e-9:
            reference = plan.reference_at(state.time)
            wrench = pd_control(
                state.robot, reference, scenario.gains, scenario.robot_params,
                scenario.limits,
            )
            state, margins, collided = _apply_wrench_for_control_step(
                simulator, state, wrench, control_dt, log
            )
            reference = plan.reference_at(state.time)
            err = (reference.state.position - state.robot.position).norm()
            log.control_step_row(state, wrench, margins, collided, err, None)

    csv_path = out / "trajectory.csv"
    num_bags = len(state.bag_bodies)
    csv_path.write_text(
        "\n".join([_csv_header(num_bags), *log.rows]) + "\n"
    )

    metrics = {
        "scenario": scenario.name,
        "controller": scenario.controller_type,
        "seed": scenario.seed,
        "collision_free": log.collision_steps == 0,
        "total_collision_steps": log.collision_steps,
        "min_margin_meters": log.min_margin,
        "rms_tracking_error_meters": log.rms_tracking_error,
        "plan_wall_time_seconds": plan_wall,
        "plan_total_duration_seconds": plan.total_duration,
        "plan_jerk_cost": plan.jerk_cost,
        "plan_scp_iterations": plan.stats.scp_iterations,
        "plan_qp_iterations": plan.stats.qp_iterations,
        "sim_steps": log.sim_steps,
        "control_steps": len(log.rows),
    }
    if mpc_wall_times:
        metrics["mpc_step_wall_seconds"] = {
            "mean": statistics.fmean(mpc_wall_times),
            "median": statistics.median(mpc_wall_times),
            "max": max(mpc_wall_times),
        }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")

    if log.collision_steps:
        print(
            f"{scenario.name}: {log.collision_steps} collision steps, "
            f"min margin {log.min_margin:.4f} m",
            file=sys.stderr,
        )
        return EXIT_COLLISIONS
    print(
        f"{scenario.name}: collision-free, min margin {log.min_margin:.4f} m, "
        f"RMS tracking error {log.rms_tracking_error:.4f} m"
    )
    return EXIT_OK


def _cmd_validate(path: str) -> int:
    try:
        resolved = _resolve_path(path)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    violations = validate_scenario(resolved)
    if violations:
        for v in violations:
            print(f"violation: {v}")
        return EXIT_LOAD_ERROR
    print(f"{resolved}: valid")
    return EXIT_OK


def _cmd_plan(path: str, out_dir: str | None, samples: int) -> int:
    try:
        scenario = load_scenario(_resolve_path(path))
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_LOAD_ERROR
    try:
        t0 = time.perf_counter()
        plan = plan_for_scenario(scenario)
        wall = time.perf_counter() - t0
    except PlanInfeasibleError as exc:
        print(f"planning infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = Path(out_dir) if out_dir is not None else Path("out") / scenario.name
    out.mkdir(parents=True, exist_ok=True)
    header = (
        "t,px,py,pz,vx,vy,vz,ax,ay,az,qw,qx,qy,qz,wx,wy,wz"
    )
    rows = [header]
    for k in range(samples):
        t = plan.total_duration * k / max(1, samples - 1)
        ref = plan.reference_at(t)
        vals = (
            [t]
            + list(ref.state.position.to_tuple())
            + list(ref.state.linear_velocity.to_tuple())
            + list(ref.linear_acceleration.to_tuple())
            + list(ref.state.orientation.to_wxyz())
            + list(ref.state.angular_velocity.to_tuple())
        )
        rows.append(",".join(repr(v) for v in vals))
    (out / "plan.csv").write_text("\n".join(rows) + "\n")
    print(
        f"{scenario.name}: planned {plan.total_duration:.2f} s trajectory in "
        f"{wall:.2f} s (jerk cost {plan.jerk_cost:.4g}, "
        f"{plan.stats.scp_iterations} SCP iterations)"
    )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="freeflyer",
        description="Free-flyer cargo-transport planning and control scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="plan, simulate, and log a scenario")
    p_run.add_argument("scenario", help="scenario file path or bundled name")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p_run.add_argument(
        "--workers",
        type=int,
        default=None,
        help=f"MPC rollout workers (default ${_WORKERS_ENV} or 1)",
    )

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("scenario")

    p_plan = sub.add_parser("plan", help="global plan only, write samples")
    p_plan.add_argument("scenario")
    p_plan.add_argument("--out", default=None)
    p_plan.add_argument("--samples", type=int, default=200)

    args = parser.parse_args(argv)
    if args.command == "run":
        return run_scenario(args.scenario, args.out, args.seed, args.workers)
    if args.command == "validate":
        return _cmd_validate(args.scenario)
    return _cmd_plan(args.scenario, args.out, args.samples)


if __name__ == "__main__":
    sys.exit(main())
