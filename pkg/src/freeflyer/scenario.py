"""Scenario files: JSON schema, loading, and validation.

A scenario is a single JSON document with explicit unit-bearing field names
(for example ``max_force_newtons``).  ``load_scenario`` raises
:class:`ScenarioError` naming the offending field; ``validate_scenario``
collects every violation it can find (structural and physical) without
running anything.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .control import MpcConfig, PdGains
from .core import ActuatorLimits, BodyParams, RigidState, UnitQuaternion, Vec3
from .corridor import Aabb, Corridor
from .simdyn import CargoModel, AttachmentParams, Simulator

__all__ = ["Scenario", "ScenarioError", "load_scenario", "validate_scenario", "bundled_scenario_path"]


class ScenarioError(ValueError):
    """A scenario file failed to load; the message names the field."""


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (name without .json)."""
    path = Path(__file__).parent / "scenarios" / f"{name}.json"
    if not path.exists():
        available = sorted(p.stem for p in (Path(__file__).parent / "scenarios").glob("*.json"))
        raise ScenarioError(f"no bundled scenario {name!r}; available: {available}")
    return path


@dataclass(frozen=True)
class Scenario:
    """Fully parsed and cross-validated scenario."""

    name: str
    seed: int
    sim_dt: float
    settle_seconds: float
    corridor: Corridor
    robot_params: BodyParams
    limits: ActuatorLimits
    start: RigidState
    goal: RigidState
    cargo: CargoModel
    rollout_cargo: CargoModel
    controller_type: str
    gains: PdGains
    mpc: MpcConfig
    planner_degree: int
    max_scp_iters: int
    trust_region: float
    clearance: float


class _Reader:
    """Dict access that raises ScenarioError with dotted field paths."""

    def __init__(self, data: dict[str, Any], path: str = ""):
        if not isinstance(data, dict):
            raise ScenarioError(f"{path or 'document'}: expected an object")
        self.data = data
        self.path = path

    def _join(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def child(self, key: str) -> "_Reader":
        return _Reader(self.require(key, dict), self._join(key))

    def optional_child(self, key: str) -> "_Reader | None":
        if key not in self.data or self.data[key] is None:
            return None
        return self.child(key)

    def require(self, key: str, kind: type) -> Any:
        if key not in self.data:
            raise ScenarioError(f"missing field {self._join(key)!r}")
        value = self.data[key]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise ScenarioError(
                f"field {self._join(key)!r} must be {kind.__name__}, got "
                f"{type(value).__name__}"
            )
        return value

    def get(self, key: str, default: Any) -> Any:
        value = self.data.get(key, default)
        if value is None:
            return default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ScenarioError(f"field {self._join(key)!r} must be a boolean")
            return value
        if isinstance(default, float) and isinstance(value, (int, float)):
            return float(value)
        if isinstance(default, int) and isinstance(value, int):
            return value
        if isinstance(default, str) and isinstance(value, str):
            return value
        if type(value) is type(default):
            return value
        raise ScenarioError(
            f"field {self._join(key)!r} has unexpected type {type(value).__name__}"
        )

    def vec3(self, key: str) -> Vec3:
        raw = self.require(key, list)
        if len(raw) != 3 or not all(isinstance(v, (int, float)) for v in raw):
            raise ScenarioError(f"field {self._join(key)!r} must be a list of 3 numbers")
        return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))

    def optional_vec3(self, key: str, default: Vec3) -> Vec3:
        if key not in self.data or self.data[key] is None:
            return default
        return self.vec3(key)


def _parse_state(reader: _Reader) -> RigidState:
    position = reader.vec3("position_meters")
    quat_raw = reader.data.get("orientation_wxyz")
    if quat_raw is None:
        orientation = UnitQuaternion.identity()
    else:
        if not (isinstance(quat_raw, list) and len(quat_raw) == 4):
            raise ScenarioError(
                f"field {reader._join('orientation_wxyz')!r} must be a list of 4 numbers"
            )
        try:
            orientation = UnitQuaternion.from_wxyz([float(v) for v in quat_raw])
        except ValueError as exc:
            raise ScenarioError(f"{reader._join('orientation_wxyz')}: {exc}") from exc
    return RigidState(
        position=position,
        orientation=orientation,
        linear_velocity=reader.optional_vec3(
            "linear_velocity_meters_per_second", Vec3.zero()
        ),
        angular_velocity=reader.optional_vec3(
            "angular_velocity_radians_per_second", Vec3.zero()
        ),
    )


def _parse_corridor(reader: _Reader) -> Corridor:
    raw_boxes = reader.require("boxes", list)
    if not raw_boxes:
        raise ScenarioError(f"field {reader._join('boxes')!r} must be non-empty")
    boxes = []
    for i, raw in enumerate(raw_boxes):
        box_reader = _Reader(raw, f"{reader._join('boxes')}[{i}]")
        try:
            boxes.append(
                Aabb(box_reader.vec3("min_corner_meters"), box_reader.vec3("max_corner_meters"))
            )
        except ValueError as exc:
            raise ScenarioError(f"{box_reader.path}: {exc}") from exc
    try:
        return Corridor(tuple(boxes))
    except ValueError as exc:
        raise ScenarioError(f"{reader._join('boxes')}: {exc}") from exc


def _parse_body(reader: _Reader) -> BodyParams:
    try:
        return BodyParams(
            mass=reader.require("mass_kilograms", float),
            inertia_diagonal=reader.vec3("inertia_diagonal_kilogram_square_meters"),
            collision_radius=reader.require("collision_radius_meters", float),
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def _parse_limits(reader: _Reader) -> ActuatorLimits:
    try:
        return ActuatorLimits(
            max_force=reader.require("max_force_newtons", float),
            max_torque=reader.require("max_torque_newton_meters", float),
            max_velocity=reader.require("max_velocity_meters_per_second", float),
            max_acceleration=reader.require(
                "max_acceleration_meters_per_second_squared", float
            ),
            max_angular_velocity=reader.require(
                "max_angular_velocity_radians_per_second", float
            ),
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def _parse_attachment(reader: _Reader) -> AttachmentParams:
    breaking = reader.data.get("breaking_force_newtons")
    try:
        return AttachmentParams(
            linear_stiffness=reader.require("linear_stiffness_newtons_per_meter", float),
            linear_damping=reader.require(
                "linear_damping_newton_seconds_per_meter", float
            ),
            angular_stiffness=reader.require(
                "angular_stiffness_newton_meters_per_radian", float
            ),
            angular_damping=reader.require(
                "angular_damping_newton_meter_seconds_per_radian", float
            ),
            grip_point_robot=reader.vec3("grip_point_robot_meters"),
            grip_point_bag=reader.vec3("grip_point_bag_meters"),
            breaking_force=math.inf if breaking is None else float(breaking),
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def _parse_cargo(reader: _Reader | None, variant_override: str | None = None) -> CargoModel:
    if reader is None:
        return CargoModel.none()
    variant = variant_override or reader.require("variant", str)
    if variant == "none":
        return CargoModel.none()
    bag = _parse_body(reader)
    attachment = _parse_attachment(reader.child("attachment"))
    offsets_raw = reader.data.get("composite_offsets_meters")
    offsets: tuple[Vec3, ...] = ()
    if offsets_raw is not None:
        if not isinstance(offsets_raw, list):
            raise ScenarioError(
                f"field {reader._join('composite_offsets_meters')!r} must be a list"
            )
        offsets = tuple(
            _Reader({"o": o}, reader._join("composite_offsets_meters")).vec3("o")
            for o in offsets_raw
        )
    elif variant == "composite":
        offsets = (Vec3(0.18, 0.0, 0.0), Vec3(-0.18, 0.0, 0.0))
    try:
        return CargoModel(
            variant=variant,
            bag_params=bag,
            attachment=attachment,
            composite_offsets=offsets,
            composite_stiffness=reader.get(
                "composite_stiffness_newtons_per_meter", 500.0
            ),
            composite_damping=reader.get(
                "composite_damping_newton_seconds_per_meter", 5.0
            ),
            hinge_stiffness=reader.get("hinge_stiffness_newtons_per_meter", 2000.0),
            hinge_damping=reader.get("hinge_damping_newton_seconds_per_meter", 20.0),
            hinge_angular_stiffness=reader.get(
                "hinge_angular_stiffness_newton_meters_per_radian", 20.0
            ),
            hinge_angular_damping=reader.get(
                "hinge_angular_damping_newton_meter_seconds_per_radian", 0.2
            ),
            hinge_offset=reader.optional_vec3("hinge_offset_meters", Vec3(0.1, 0.0, 0.0)),
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def _parse_gains(reader: _Reader | None, robot: BodyParams) -> PdGains:
    if reader is None:
        return PdGains.critically_damped(2.0, 0.4, robot)
    try:
        return PdGains(
            kp_pos=reader.require("kp_pos_newtons_per_meter", float),
            kd_pos=reader.require("kd_pos_newton_seconds_per_meter", float),
            kp_att=reader.require("kp_att_newton_meters_per_radian", float),
            kd_att=reader.require("kd_att_newton_meter_seconds_per_radian", float),
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def _parse_mpc(reader: _Reader | None, rng_seed: int) -> MpcConfig:
    if reader is None:
        return MpcConfig(rng_seed=rng_seed)
    try:
        return MpcConfig(
            num_samples=reader.get("num_samples", 32),
            horizon=reader.get("horizon_seconds", 3.0),
            apply_count=reader.get("apply_count", 5),
            control_dt=reader.get("control_dt_seconds", 0.05),
            sigma_position=reader.get("sigma_position_meters", 0.1),
            sigma_velocity=reader.get("sigma_velocity_meters_per_second", 0.05),
            sigma_orientation=reader.get("sigma_orientation_radians", 0.1),
            w_track=reader.get("weight_tracking", 1.0),
            w_relvel=reader.get("weight_relative_velocity", 0.5),
            w_coll=reader.get("weight_collision", 1.0),
            collision_penalty=reader.get("collision_penalty", 1e3),
            w_margin=reader.get("weight_margin", 1e2),
            rng_seed=rng_seed,
        )
    except ValueError as exc:
        raise ScenarioError(f"{reader.path}: {exc}") from exc


def load_scenario(path: str | Path, seed_override: int | None = None) -> Scenario:
    """Load and cross-validate a scenario file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc

    root = _Reader(raw)
    name = root.get("name", path.stem)
    seed = root.get("seed", 0) if seed_override is None else seed_override

    sim = root.optional_child("sim")
    sim_dt = sim.get("dt_seconds", 0.005) if sim else 0.005
    settle = sim.get("settle_seconds", 2.0) if sim else 2.0
    if not 0.0 < sim_dt <= 0.05:
        raise ScenarioError(f"sim.dt_seconds must be in (0, 0.05], got {sim_dt}")
    if settle < 0.0:
        raise ScenarioError(f"sim.settle_seconds must be >= 0, got {settle}")

    corridor = _parse_corridor(root.child("corridor"))
    robot = root.child("robot")
    robot_params = _parse_body(robot)
    limits = _parse_limits(robot.child("limits"))
    start = _parse_state(robot.child("start"))
    goal = _parse_state(root.child("goal"))

    cargo_reader = root.optional_child("cargo")
    cargo = _parse_cargo(cargo_reader)
    rollout_variant = cargo_reader.data.get("rollout_variant") if cargo_reader else None
    if rollout_variant is not None and not isinstance(rollout_variant, str):
        raise ScenarioError("field 'cargo.rollout_variant' must be a string")
    if rollout_variant is None or rollout_variant == cargo.variant:
        rollout_cargo = cargo
    else:
        rollout_cargo = _parse_cargo(cargo_reader, variant_override=rollout_variant)

    controller = root.optional_child("controller")
    controller_type = controller.get("type", "pd") if controller else "pd"
    if controller_type not in ("pd", "mpc"):
        raise ScenarioError(
            f"controller.type must be 'pd' or 'mpc', got {controller_type!r}"
        )
    gains = _parse_gains(controller.optional_child("gains") if controller else None, robot_params)
    mpc = _parse_mpc(controller.optional_child("mpc") if controller else None, seed)

    planner = root.optional_child("planner")
    degree = planner.get("degree", 7) if planner else 7
    max_scp_iters = planner.get("max_scp_iters", 25) if planner else 25
    trust_region = planner.get("trust_region", 0.2) if planner else 0.2
    clearance = planner.get("clearance_meters", 0.0) if planner else 0.0

    scenario = Scenario(
        name=name,
        seed=seed,
        sim_dt=sim_dt,
        settle_seconds=settle,
        corridor=corridor,
        robot_params=robot_params,
        limits=limits,
        start=start,
        goal=goal,
        cargo=cargo,
        rollout_cargo=rollout_cargo,
        controller_type=controller_type,
        gains=gains,
        mpc=mpc,
        planner_degree=degree,
        max_scp_iters=max_scp_iters,
        trust_region=trust_region,
        clearance=clearance,
    )
    _cross_validate(scenario)
    return scenario


def _cross_validate(s: Scenario) -> None:
    if not s.corridor.contains_point(s.start.position):
        raise ScenarioError("robot.start.position_meters lies outside the corridor")
    if not s.corridor.contains_point(s.goal.position):
        raise ScenarioError("goal.position_meters lies outside the corridor")
    if s.planner_degree < 5:
        raise ScenarioError(f"planner.degree must be >= 5, got {s.planner_degree}")
    if not 0.0 < s.trust_region < 1.0:
        raise ScenarioError(
            f"planner.trust_region must be in (0, 1), got {s.trust_region}"
        )
    if s.clearance < 0.0:
        raise ScenarioError(f"planner.clearance_meters must be >= 0, got {s.clearance}")
    # Stability bound on every (stiffness, dt) pair: main sim and rollouts.
    try:
        Simulator(s.robot_params, s.limits, s.cargo, dt=s.sim_dt)
    except ValueError as exc:
        raise ScenarioError(f"sim.dt_seconds vs cargo stiffness: {exc}") from exc
    if s.controller_type == "mpc":
        try:
            Simulator(s.robot_params, s.limits, s.rollout_cargo, dt=s.mpc.control_dt)
        except ValueError as exc:
            raise ScenarioError(
                f"controller.mpc.control_dt_seconds vs rollout cargo stiffness: {exc}"
            ) from exc


def validate_scenario(path: str | Path) -> list[str]:
    """Full validation without running; returns all violations found."""
    violations: list[str] = []
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        return [str(exc)]
    if not isinstance(raw, dict):
        return ["document root must be a JSON object"]

    root = _Reader(raw)
    sections: dict[str, Any] = {}

    def attempt(label: str, fn) -> None:
        try:
            sections[label] = fn()
        except ScenarioError as exc:
            violations.append(str(exc))

    attempt("corridor", lambda: _parse_corridor(root.child("corridor")))
    attempt("robot", lambda: _parse_body(root.child("robot")))
    attempt("limits", lambda: _parse_limits(root.child("robot").child("limits")))
    attempt("start", lambda: _parse_state(root.child("robot").child("start")))
    attempt("goal", lambda: _parse_state(root.child("goal")))
    attempt("cargo", lambda: _parse_cargo(root.optional_child("cargo")))

    try:
        load_scenario(path)
    except ScenarioError as exc:
        message = str(exc)
        if message not in violations:
            violations.append(message)
    return violations
