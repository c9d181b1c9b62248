"""Distributed leader-follower control stack for cooperative payload
transportation, with a deterministic 2D multi-robot simulator and a
scenario/benchmark harness."""

from .geometry import Pose2D, RelativePoseMeasurement, Vector2, wrap_angle
from .payload import (
    FormationInfeasible,
    PayloadParams,
    ScaleBounds,
    pairwise_distance_bounds,
    payload_clearance,
    scale_bounds,
)
from .world import (
    BroadcastChannel,
    Circle,
    ConvexPolygon,
    RobotState,
    ScanResult,
    VelocityCmd,
    WorldModel,
    rotate_camera,
    simulate_camera,
    simulate_lidar,
    step_kinematics,
)
from .leader import LeaderDecision, LeaderParams, leader_step, predict_flag, speed_profile
from .follower import (
    CurvilinearOffset,
    LeaderSample,
    ReferenceTarget,
    StaleBuffer,
    TrajectoryBuffer,
    extrapolate_buffer,
    locate_reference_point,
    reference_target,
    reference_velocities,
)
from .constraints import (
    ConstraintEvaluation,
    ConstraintSpec,
    EvalContext,
    Kind,
    LinkDistance,
    ObstacleDistance,
    PairwiseDistance,
    build_context,
    decouple_mixed,
    evaluate,
    grad_tau,
    q_lower,
    q_two_sided,
    q_upper,
)
from .control import (
    ControlGains,
    Mode,
    ProcessState,
    TrackingErrors,
    blend,
    preservation_control,
    tracking_control,
    validate_gains,
)

__version__ = "0.1.0"
