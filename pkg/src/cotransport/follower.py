"""Follower reference generation from the leader's broadcast trajectory.

The follower reconstructs its desired pose by walking the buffered leader path
backward by an arc-length offset, shifting laterally in the path tangent
frame, and re-expressing the result in its own body frame using the relative
pose measurement of the leader. Reference velocities follow from the leader
velocities at the reconstructed point.

Offsets are stored leader-relative: s_d <= 0 places the follower behind the
leader along the path, q_d > 0 shifts its lane to the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import (
    Pose2D,
    RelativePoseMeasurement,
    Vector2,
    pose_from_frame,
    pose_to_frame,
    wrap_angle,
)


class StaleBuffer(RuntimeError):
    """The buffered path is shorter than the requested arc-length offset."""


@dataclass(frozen=True)
class LeaderSample:
    pose: Pose2D
    v: float
    omega: float
    t: float


@dataclass(frozen=True)
class CurvilinearOffset:
    """Leader-relative curvilinear displacement (s_d along path, q_d lateral)."""

    s_d: float
    q_d: float

    def distance(self) -> float:
        return math.hypot(self.s_d, self.q_d)


@dataclass(frozen=True)
class ReferenceTarget:
    desired_pose_local: Pose2D  # in the follower body frame
    v_r: float
    omega_r: float
    t_a: float


class TrajectoryBuffer:
    """Ring of timestamped leader samples, newest last."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("capacity must be >= 2")
        self.capacity = capacity
        self._samples: list[LeaderSample] = []

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    @property
    def samples(self) -> list[LeaderSample]:
        return self._samples

    def latest(self) -> LeaderSample:
        return self._samples[-1]

    def append(self, sample: LeaderSample) -> None:
        if self._samples and sample.t <= self._samples[-1].t:
            raise ValueError("sample timestamps must be strictly increasing")
        self._samples.append(sample)
        if len(self._samples) > self.capacity:
            del self._samples[0]

    def copy(self) -> "TrajectoryBuffer":
        out = TrajectoryBuffer(self.capacity)
        out._samples = list(self._samples)
        return out

    def arc_length(self) -> float:
        s = self._samples
        return sum(
            (s[k + 1].pose.position - s[k].pose.position).norm()
            for k in range(len(s) - 1)
        )


def extrapolate_buffer(buf: TrajectoryBuffer, dt: float) -> None:
    """Append one sample advanced under the latest known velocities.

    Uses the same explicit Euler step as the world integrator, so a silent
    (constant-velocity) interval reproduces the leader's own buffer exactly.
    """
    last = buf.latest()
    p = last.pose
    x = p.x + last.v * math.cos(p.heading) * dt
    y = p.y + last.v * math.sin(p.heading) * dt
    theta = wrap_angle(p.heading + last.omega * dt)
    buf.append(LeaderSample(Pose2D(Vector2(x, y), theta), last.v, last.omega, last.t + dt))


def prefill_straight_history(
    buf: TrajectoryBuffer, start: Pose2D, v: float, dt: float, arc_length: float
) -> None:
    """Seed an empty buffer with a virtual straight approach path.

    Backfills samples behind the start pose along its heading, spaced v * dt,
    with timestamps ending just before 0. Lets followers resolve references
    from the first step, before the leader has physically covered their
    arc-length offsets.
    """
    if len(buf) != 0:
        raise ValueError("prefill requires an empty buffer")
    if v <= 0 or dt <= 0:
        raise ValueError("prefill requires positive v and dt")
    n = int(math.ceil(arc_length / (v * dt))) + 1
    c, s = math.cos(start.heading), math.sin(start.heading)
    for k in range(n, 0, -1):
        d = -k * v * dt
        buf.append(
            LeaderSample(
                Pose2D(Vector2(start.x + d * c, start.y + d * s), start.heading),
                v, 0.0, -k * dt,
            )
        )


def locate_reference_point(
    buf: TrajectoryBuffer, offset: CurvilinearOffset
) -> tuple[Pose2D, float, float, float]:
    """Walk the buffered path backward by |s_d| of arc length.

    Returns (pose on the path, t_a, v_a, omega_a): the interpolated pose in
    the buffer's frame, the interpolated arrival timestamp, and the leader
    velocities in effect there (zero-order hold from the older bracketing
    sample). Raises StaleBuffer when the buffer does not cover |s_d|.
    """
    if len(buf) == 0:
        raise StaleBuffer("empty buffer")
    target = abs(offset.s_d)
    samples = buf.samples
    newest = samples[-1]
    if target == 0.0:
        return newest.pose, newest.t, newest.v, newest.omega

    walked = 0.0
    for k in range(len(samples) - 1, 0, -1):
        newer, older = samples[k], samples[k - 1]
        seg = (newer.pose.position - older.pose.position).norm()
        if walked + seg >= target:
            if seg == 0.0:
                frac = 0.0
            else:
                frac = (target - walked) / seg
            pos = newer.pose.position + frac * (older.pose.position - newer.pose.position)
            dtheta = wrap_angle(older.pose.heading - newer.pose.heading)
            heading = wrap_angle(newer.pose.heading + frac * dtheta)
            t_a = newer.t + frac * (older.t - newer.t)
            # velocities are held from the older sample across the segment
            return Pose2D(pos, heading), t_a, older.v, older.omega
        walked += seg
    raise StaleBuffer(
        f"buffer arc length {walked:.4g} m < requested offset {target:.4g} m"
    )


def desired_pose(
    on_path: Pose2D,
    offset: CurvilinearOffset,
    measurement: RelativePoseMeasurement,
    leader_now: Pose2D,
) -> Pose2D:
    """Desired follower pose in its own body frame.

    on_path and leader_now are in the trajectory frame; the lateral offset q_d
    is applied along the y axis of the path tangent frame at on_path, and the
    desired heading is the tangent direction. The result is re-expressed in
    the follower frame through the measured relative pose of the leader.
    """
    lateral = Vector2(-math.sin(on_path.heading), math.cos(on_path.heading))
    desired_traj = Pose2D(
        on_path.position + offset.q_d * lateral, on_path.heading
    )
    in_leader_body = pose_to_frame(leader_now, desired_traj)
    leader_in_follower = Pose2D(
        measurement.relative_position, measurement.relative_heading
    )
    return pose_from_frame(leader_in_follower, in_leader_body)


def reference_velocities(
    v_l_ta: float, omega_l_ta: float, q_d: float
) -> tuple[float, float]:
    """Follower reference velocities from the leader velocities at arrival.

    The linear part adds the lane-shift correction caused by leader rotation;
    the angular part mirrors the leader.
    """
    return v_l_ta - omega_l_ta * q_d, omega_l_ta


def reference_target(
    buf: TrajectoryBuffer,
    offset: CurvilinearOffset,
    measurement: RelativePoseMeasurement,
) -> ReferenceTarget:
    """Full reference for one follower: desired local pose plus velocities."""
    on_path, t_a, v_a, omega_a = locate_reference_point(buf, offset)
    local = desired_pose(on_path, offset, measurement, buf.latest().pose)
    v_r, omega_r = reference_velocities(v_a, omega_a, offset.q_d)
    return ReferenceTarget(local, v_r, omega_r, t_a)


def dead_reckon_measurement(own_pose: Pose2D, leader_est: Pose2D) -> RelativePoseMeasurement:
    """Fallback relative pose when the camera reports nothing: own odometry
    against the extrapolated leader pose."""
    rel = pose_to_frame(own_pose, leader_est)
    return RelativePoseMeasurement(rel.position, rel.heading)


def default_buffer_capacity(max_s_offset: float, v_min: float, dt: float) -> int:
    """Buffer length covering the largest arc offset at the slowest expected
    speed, with 25% margin."""
    if v_min <= 0 or dt <= 0:
        raise ValueError("v_min and dt must be positive")
    return int(math.ceil(1.25 * (abs(max_s_offset) / (v_min * dt)))) + 2
