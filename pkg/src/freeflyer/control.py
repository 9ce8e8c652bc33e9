"""PD trajectory tracking and sampling-based receding-horizon control.

The PD controller exploits the robot's double-integrator dynamics: mass
times feedforward acceleration plus proportional/derivative terms on
position and velocity, and an attitude PD on the rotation-vector error.

The MPC perturbs the *terminal state* handed to the local planner (never
raw wrenches, so every candidate stays dynamically smooth), rolls each
candidate's wrench sequence out on a private reduced-order simulator copy,
scores collisions, bag-robot relative velocity, and tracking error, and
applies the first ``apply_count`` wrenches of the argmin candidate.
Candidate 0 is always the unperturbed lookahead target, so the chosen cost
never exceeds the nominal candidate's.  Per-candidate RNG streams are
derived as seed XOR candidate index, making the result independent of the
worker count and scheduling.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import ActuatorLimits, BodyParams, RigidState, UnitQuaternion, Vec3, Wrench, quat_multiply
from .corridor import Corridor
from .orientation import DegeneratePathError
from .planner_global import GlobalPlan
from .planner_local import MotionState, plan_local
from .simdyn import SimState, Simulator

__all__ = [
    "PdGains",
    "MpcConfig",
    "CostBreakdown",
    "RolloutResult",
    "TrackRecord",
    "pd_control",
    "track",
    "rollout_cost",
    "MpcController",
]


@dataclass(frozen=True, slots=True)
class PdGains:
    """Proportional/derivative gains; all must be non-negative."""

    kp_pos: float
    kd_pos: float
    kp_att: float
    kd_att: float

    def __post_init__(self) -> None:
        for name in ("kp_pos", "kd_pos", "kp_att", "kd_att"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def critically_damped(
        cls, kp_pos: float, kp_att: float, params: BodyParams
    ) -> PdGains:
        """Derivative gains set to 2*sqrt(kp*m) (and the attitude analog)."""
        inertia = min(params.inertia_diagonal.to_tuple())
        return cls(
            kp_pos=kp_pos,
            kd_pos=2.0 * math.sqrt(kp_pos * params.mass),
            kp_att=kp_att,
            kd_att=2.0 * math.sqrt(kp_att * inertia),
        )


@dataclass(frozen=True, slots=True)
class MpcConfig:
    """Sampling-MPC configuration; see class docstring for semantics."""

    num_samples: int = 32
    horizon: float = 3.0
    apply_count: int = 5
    control_dt: float = 0.05
    sigma_position: float = 0.1
    sigma_velocity: float = 0.05
    sigma_orientation: float = 0.1
    w_track: float = 1.0
    w_relvel: float = 0.5
    w_coll: float = 1.0
    collision_penalty: float = 1e3
    w_margin: float = 1e2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not self.horizon > self.apply_count * self.control_dt > 0.0:
            raise ValueError(
                "require horizon > apply_count * control_dt > 0, got "
                f"H={self.horizon}, n={self.apply_count}, dt={self.control_dt}"
            )
        for name in ("w_track", "w_relvel", "w_coll", "collision_penalty", "w_margin"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def horizon_steps(self) -> int:
        return max(1, int(round(self.horizon / self.control_dt)))


def pd_control(
    current: RigidState,
    reference: MotionState,
    gains: PdGains,
    params: BodyParams,
    limits: ActuatorLimits,
) -> Wrench:
    """Feedforward-plus-PD wrench toward a reference state, saturated.

    force  = m*a_ff + kp_pos*(p_ref - p) + kd_pos*(v_ref - v)
    torque = kp_att*rotvec(q_ref * q^-1) + kd_att*(w_ref - w)

    The inertia feedforward on the attitude side is deliberately omitted.
    """
    ref = reference.state
    force = (
        reference.linear_acceleration.scale(params.mass)
        + (ref.position - current.position).scale(gains.kp_pos)
        + (ref.linear_velocity - current.linear_velocity).scale(gains.kd_pos)
    )
    att_err = quat_multiply(
        ref.orientation, current.orientation.conjugate()
    ).rotation_vector()
    torque = att_err.scale(gains.kp_att) + (
        ref.angular_velocity - current.angular_velocity
    ).scale(gains.kd_att)
    return Wrench(force, torque).saturated(limits)


@dataclass(frozen=True, slots=True)
class TrackRecord:
    time: float
    state: SimState
    wrench: Wrench
    reference: MotionState

    @property
    def position_error(self) -> float:
        return (self.reference.state.position - self.state.robot.position).norm()


def track(
    plan: GlobalPlan,
    simulator: Simulator,
    initial: SimState,
    gains: PdGains,
    duration: float | None = None,
) -> list[TrackRecord]:
    """Run the PD controller against time-sampled plan references.

    Steps the simulator at its own dt and logs state, wrench, and reference
    each step.  ``duration`` defaults to the plan horizon.
    """
    horizon = plan.total_duration if duration is None else duration
    state = initial
    records: list[TrackRecord] = []
    steps = int(round(horizon / simulator.dt))
    for _ in range(steps):
        reference = plan.reference_at(state.time)
        wrench = pd_control(
            state.robot, reference, gains, simulator.robot_params, simulator.limits
        )
        state = simulator.step(state, wrench)
        records.append(TrackRecord(state.time, state, wrench, reference))
    return records


@dataclass(frozen=True, slots=True)
class CostBreakdown:
    """Weighted rollout cost; ``total`` is the weighted sum of the terms."""

    tracking: float
    relative_velocity: float
    collision: float
    total: float


@dataclass(frozen=True)
class RolloutResult:
    """One candidate's wrench sequence, terminal state, and score."""

    candidate_index: int
    controls: tuple[Wrench, ...]
    terminal_state: SimState
    cost: CostBreakdown


def rollout_cost(
    log: Sequence[SimState],
    nominal: GlobalPlan,
    corridor: Corridor,
    cfg: MpcConfig,
    simulator: Simulator,
) -> CostBreakdown:
    """Score a rollout trajectory against the nominal plan and corridor.

    tracking  = mean |p - p_nom(t)|^2 + |rotvec(q_nom q^-1)|^2
    relvel    = mean |v_bag_com - v_robot|^2
    collision = sum over steps and bodies of
                collision_penalty * 1(margin < 0) + w_margin * max(0, -margin)
    """
    if not log:
        raise ValueError("rollout log is empty")
    track_term = 0.0
    relvel_term = 0.0
    collision_term = 0.0
    bag_masses = [p.mass for p in simulator.body_params[1:]]
    total_bag_mass = sum(bag_masses)
    for state in log:
        ref = nominal.reference_at(state.time)
        perr = ref.state.position - state.robot.position
        aerr = quat_multiply(
            ref.state.orientation, state.robot.orientation.conjugate()
        ).rotation_vector()
        track_term += perr.dot(perr) + aerr.dot(aerr)
        if total_bag_mass > 0.0:
            com_vel = Vec3.zero()
            for body, m in zip(state.bag_bodies, bag_masses):
                com_vel = com_vel + body.linear_velocity.scale(m / total_bag_mass)
            dv = com_vel - state.robot.linear_velocity
            relvel_term += dv.dot(dv)
        report = simulator.collision_report(state, corridor)
        for margin in (report.robot_margin, *report.bag_margins):
            if margin < 0.0:
                collision_term += cfg.collision_penalty + cfg.w_margin * (-margin)
    track_term /= len(log)
    relvel_term /= len(log)
    total = (
        cfg.w_track * track_term
        + cfg.w_relvel * relvel_term
        + cfg.w_coll * collision_term
    )
    return CostBreakdown(track_term, relvel_term, collision_term, total)


class MpcController:
    """Receding-horizon sampling controller over a rollout simulator.

    The rollout simulator may use a different cargo variant than the main
    simulation to reproduce model mismatch; rollouts integrate one step per
    control period.
    """

    def __init__(
        self,
        rollout_simulator: Simulator,
        corridor: Corridor,
        gains: PdGains,
        cfg: MpcConfig,
        workers: int = 1,
    ):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        if rollout_simulator.dt != cfg.control_dt:
            rollout_simulator = Simulator(
                rollout_simulator.robot_params,
                rollout_simulator.limits,
                rollout_simulator.cargo,
                dt=cfg.control_dt,
            )
        self.simulator = rollout_simulator
        self.corridor = corridor
        self.gains = gains
        self.cfg = cfg
        self.workers = workers

    def _perturbed_target(self, base: MotionState, rng: np.random.Generator) -> MotionState:
        cfg = self.cfg
        dp = rng.normal(0.0, cfg.sigma_position, 3)
        dv = rng.normal(0.0, cfg.sigma_velocity, 3)
        axis_raw = rng.normal(0.0, 1.0, 3)
        angle = rng.normal(0.0, cfg.sigma_orientation)
        state = base.state
        position = state.position + Vec3(*dp)
        velocity = state.linear_velocity + Vec3(*dv)
        norm = float(np.linalg.norm(axis_raw))
        axis = Vec3(*axis_raw) if norm > 1e-12 else Vec3(1.0, 0.0, 0.0)
        orientation = quat_multiply(
            UnitQuaternion.from_axis_angle(axis, angle), state.orientation
        )
        return MotionState(
            RigidState(position, orientation, velocity, state.angular_velocity),
            base.linear_acceleration,
            base.angular_acceleration,
        )

    def _rollout(
        self,
        index: int,
        start: SimState,
        current: MotionState,
        target: MotionState,
        t_now: float,
        nominal: GlobalPlan,
    ) -> RolloutResult | None:
        cfg = self.cfg
        try:
            local = plan_local(current, target, cfg.horizon)
        except (DegeneratePathError, ValueError):
            return None
        state = Simulator.restore(Simulator.snapshot(start))
        controls: list[Wrench] = []
        log: list[SimState] = []
        for j in range(cfg.horizon_steps):
            t_local = j * cfg.control_dt
            quat, omega, alpha = local.attitude(t_local)
            ref = MotionState(
                RigidState(
                    local.position(t_local), quat, local.velocity(t_local), omega
                ),
                linear_acceleration=local.acceleration(t_local),
                angular_acceleration=alpha,
            )
            wrench = pd_control(
                state.robot, ref, self.gains, self.simulator.robot_params,
                self.simulator.limits,
            )
            state = self.simulator.step(state, wrench, cfg.control_dt)
            controls.append(wrench)
            log.append(state)
        cost = rollout_cost(log, nominal, self.corridor, cfg, self.simulator)
        return RolloutResult(index, tuple(controls), state, cost)

    def mpc_step(
        self,
        state: SimState,
        nominal: GlobalPlan,
        t_now: float,
        step_seed: int | None = None,
        current_acceleration: Vec3 = Vec3.zero(),
        current_angular_acceleration: Vec3 = Vec3.zero(),
    ) -> tuple[list[Wrench], list[RolloutResult]]:
        """One replanning step: sample, roll out, pick, return first n wrenches.

        Candidate 0 targets the unperturbed plan state at t_now + horizon;
        candidates 1..K-1 perturb that target.  Deterministic for a given
        seed under any worker count.  If every candidate fails to plan, the
        fallback is PD against the nominal reference (with a warning).
        """
        cfg = self.cfg
        seed = cfg.rng_seed if step_seed is None else step_seed
        # Rebase the state clock so rollout logs carry absolute times that
        # line up with the nominal plan's timeline.
        if state.time != t_now:
            state = replace(state, time=t_now)
        lookahead = nominal.reference_at(t_now + cfg.horizon)
        current = MotionState(
            state.robot,
            linear_acceleration=current_acceleration,
            angular_acceleration=current_angular_acceleration,
        )
        targets = [lookahead]
        for k in range(1, cfg.num_samples):
            rng = np.random.default_rng(seed ^ k)
            targets.append(self._perturbed_target(lookahead, rng))

        def run(k: int) -> RolloutResult | None:
            return self._rollout(k, state, current, targets[k], t_now, nominal)

        if self.workers == 1 or cfg.num_samples == 1:
            results = [run(k) for k in range(cfg.num_samples)]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(run, range(cfg.num_samples)))

        valid = [r for r in results if r is not None]
        if not valid:
            warnings.warn(
                "all MPC candidates failed to plan; falling back to PD on the "
                "nominal reference",
                RuntimeWarning,
            )
            return self._pd_fallback(state, nominal), []

        best = min(valid, key=lambda r: (r.cost.total, r.candidate_index))
        if results[0] is not None and best.cost.total > results[0].cost.total:
            raise AssertionError(
                "argmin selection exceeded the nominal candidate's cost"
            )  # pragma: no cover - guaranteed by construction
        return list(best.controls[: cfg.apply_count]), valid

    def _pd_fallback(self, state: SimState, nominal: GlobalPlan) -> list[Wrench]:
        cfg = self.cfg
        controls = []
        rolled = state
        for _ in range(cfg.apply_count):
            ref = nominal.reference_at(rolled.time)
            wrench = pd_control(
                rolled.robot, ref, self.gains, self.simulator.robot_params,
                self.simulator.limits,
            )
            rolled = self.simulator.step(rolled, wrench, cfg.control_dt)
            controls.append(wrench)
        return controls
