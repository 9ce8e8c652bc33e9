"""Planning and control toolkit for a microgravity free-flyer with cargo.

Global minimum-jerk spline planning through a box corridor, quaternion
polynomial orientation planning, a millisecond-scale local planner,
reduced-order cargo dynamics, PD tracking, and sampling-based MPC with
parallel rollouts.
"""

from .bezier import BezierCurve, BezierSpline, jerk_energy_matrix
from .control import (
    CostBreakdown,
    MpcConfig,
    MpcController,
    PdGains,
    RolloutResult,
    pd_control,
    rollout_cost,
    track,
)
from .core import (
    DEFAULT_ACTUATOR_LIMITS,
    DEFAULT_ROBOT_PARAMS,
    ActuatorLimits,
    BodyParams,
    RigidState,
    UnitQuaternion,
    Vec3,
    Wrench,
    quat_derivative_to_omega,
    quat_multiply,
    slerp,
)
from .corridor import Aabb, Corridor, CorridorError
from .orientation import (
    DegeneratePathError,
    QuaternionPolynomial,
    face_forward_plan,
    plan_orientation,
    sample_orientation,
)
from .planner_global import (
    GlobalPlan,
    PlanInfeasibleError,
    PlanRequest,
    build_spline_qp,
    plan_global,
)
from .planner_local import LocalPlan, MotionState, choose_duration, plan_local
from .qp import QpInfeasibleError, QpMaxIterationsError, QpProblem, QpSolution, solve_qp
from .scenario import Scenario, ScenarioError, bundled_scenario_path, load_scenario
from .simdyn import (
    AttachmentParams,
    CargoModel,
    CollisionReport,
    SimState,
    Simulator,
    Snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "Aabb",
    "ActuatorLimits",
    "AttachmentParams",
    "BezierCurve",
    "BezierSpline",
    "BodyParams",
    "CargoModel",
    "CollisionReport",
    "Corridor",
    "CorridorError",
    "CostBreakdown",
    "DEFAULT_ACTUATOR_LIMITS",
    "DEFAULT_ROBOT_PARAMS",
    "DegeneratePathError",
    "GlobalPlan",
    "LocalPlan",
    "MotionState",
    "MpcConfig",
    "MpcController",
    "PdGains",
    "PlanInfeasibleError",
    "PlanRequest",
    "QpInfeasibleError",
    "QpMaxIterationsError",
    "QpProblem",
    "QpSolution",
    "QuaternionPolynomial",
    "RigidState",
    "RolloutResult",
    "Scenario",
    "ScenarioError",
    "SimState",
    "Simulator",
    "Snapshot",
    "UnitQuaternion",
    "Vec3",
    "Wrench",
    "build_spline_qp",
    "bundled_scenario_path",
    "choose_duration",
    "face_forward_plan",
    "jerk_energy_matrix",
    "load_scenario",
    "pd_control",
    "plan_global",
    "plan_local",
    "plan_orientation",
    "quat_derivative_to_omega",
    "quat_multiply",
    "rollout_cost",
    "sample_orientation",
    "slerp",
    "solve_qp",
    "track",
]
