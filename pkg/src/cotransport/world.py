"""Deterministic discrete-time 2D world: unicycle integration, convex
obstacles, lidar and rotating limited-FOV camera models, and the
leader-trajectory broadcast channel.

The world steps single-threaded in a fixed order (sense -> communicate ->
control -> integrate); the integrator is the only writer of robot state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .geometry import (
    Pose2D,
    RelativePoseMeasurement,
    Vector2,
    point_segment_distance,
    pose_to_frame,
    segment_segment_distance,
    wrap_angle,
)


@dataclass(frozen=True)
class VelocityCmd:
    v: float
    omega: float

    def is_finite(self) -> bool:
        return math.isfinite(self.v) and math.isfinite(self.omega)


@dataclass(frozen=True)
class RobotState:
    pose: Pose2D
    id: str
    role: str  # "leader" | "follower"
    camera_angle: float = 0.0  # camera axis relative to body, followers only

    def __post_init__(self) -> None:
        object.__setattr__(self, "camera_angle", wrap_angle(self.camera_angle))


@dataclass(frozen=True)
class Circle:
    center: Vector2
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("circle radius must be positive")


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple[Vector2, ...]  # CCW order
    bounding_center: Vector2 = field(init=False)
    bounding_radius: float = field(init=False)

    def __post_init__(self) -> None:
        v = self.vertices
        if len(v) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        n = len(v)
        for k in range(n):
            a, b, c = v[k], v[(k + 1) % n], v[(k + 2) % n]
            if (b - a).cross(c - b) <= 0:
                raise ValueError("polygon must be strictly convex with CCW vertices")
        center = Vector2(sum(p.x for p in v) / n, sum(p.y for p in v) / n)
        object.__setattr__(self, "bounding_center", center)
        object.__setattr__(
            self, "bounding_radius", max((p - center).norm() for p in v)
        )

    def edges(self) -> list[tuple[Vector2, Vector2]]:
        v = self.vertices
        return [(v[k], v[(k + 1) % len(v)]) for k in range(len(v))]

    def contains(self, p: Vector2) -> bool:
        return all((b - a).cross(p - a) >= 0 for a, b in self.edges())


Obstacle = Union[Circle, ConvexPolygon]


@dataclass(frozen=True)
class WorldModel:
    obstacles: tuple[Obstacle, ...]
    goal: Vector2


@dataclass(frozen=True)
class ScanResult:
    """Lidar returns in the robot's local frame, all within max_range."""

    points: tuple[Vector2, ...]
    max_range: float

    def min_range(self) -> float:
        if not self.points:
            return math.inf
        return min(p.norm() for p in self.points)


def step_kinematics(s: RobotState, cmd: VelocityCmd, dt: float) -> RobotState:
    """Explicit Euler step of the unicycle model."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not cmd.is_finite():
        raise ValueError(f"non-finite command: {cmd!r}")
    p = s.pose
    x = p.x + cmd.v * math.cos(p.heading) * dt
    y = p.y + cmd.v * math.sin(p.heading) * dt
    theta = wrap_angle(p.heading + cmd.omega * dt)
    return replace(s, pose=Pose2D(Vector2(x, y), theta))


def integrate_camera(
    s: RobotState, omega_c: float, dt: float, cap: float = math.inf
) -> RobotState:
    """Advance the camera motor angle; cap is the optional rate limit."""
    w = max(-cap, min(cap, omega_c))
    return replace(s, camera_angle=wrap_angle(s.camera_angle + w * dt))


# ---------------------------------------------------------------------------
# Lidar


def simulate_lidar(
    s: RobotState,
    w: WorldModel,
    d_r: float,
    n_beams: int = 360,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> ScanResult:
    """Cast n_beams rays at equally spaced bearings in [-pi, pi).

    Returns the nearest obstacle-boundary hit per beam within d_r, expressed in
    the robot frame; missing beams are omitted. Other robots are never seen.
    Optional zero-mean Gaussian range noise (seeded rng required if used).
    """
    if n_beams < 8:
        raise ValueError("n_beams must be >= 8")
    bearings = -math.pi + 2.0 * math.pi * np.arange(n_beams) / n_beams
    angles = s.pose.heading + bearings
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (n, 2)
    origin = np.array([s.pose.x, s.pose.y])

    ranges = np.full(n_beams, np.inf)
    for obs in w.obstacles:
        if isinstance(obs, Circle):
            hits = _ray_circle_ranges(origin, dirs, obs)
        else:
            hits = _ray_polygon_ranges(origin, dirs, obs)
        ranges = np.minimum(ranges, hits)

    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noisy lidar requires a seeded rng")
        noisy = ranges + rng.normal(0.0, noise_std, n_beams)
        ranges = np.where(np.isfinite(ranges), np.maximum(noisy, 0.0), ranges)

    keep = ranges <= d_r
    pts = tuple(
        Vector2(r * math.cos(b), r * math.sin(b))
        for r, b in zip(ranges[keep], bearings[keep])
    )
    return ScanResult(points=pts, max_range=d_r)


def _ray_circle_ranges(origin: np.ndarray, dirs: np.ndarray, c: Circle) -> np.ndarray:
    rel = np.array([c.center.x, c.center.y]) - origin
    b = dirs @ rel  # projection of center onto each ray
    disc = b * b - (rel @ rel - c.radius**2)
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t_near = b - sq
    t_far = b + sq
    t = np.where(t_near >= 0.0, t_near, t_far)  # inside: exit point
    return np.where(hit & (t >= 0.0), t, np.inf)


def _ray_polygon_ranges(
    origin: np.ndarray, dirs: np.ndarray, poly: ConvexPolygon
) -> np.ndarray:
    best = np.full(len(dirs), np.inf)
    for a, b in poly.edges():
        e = np.array([b.x - a.x, b.y - a.y])
        ao = np.array([a.x - origin[0], a.y - origin[1]])
        denom = dirs[:, 0] * e[1] - dirs[:, 1] * e[0]
        ok = np.abs(denom) > 1e-15
        safe = np.where(ok, denom, 1.0)
        t = (ao[0] * e[1] - ao[1] * e[0]) / safe
        u = (ao[0] * dirs[:, 1] - ao[1] * dirs[:, 0]) / safe
        valid = ok & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
        best = np.minimum(best, np.where(valid, t, np.inf))
    return best


# ---------------------------------------------------------------------------
# Exact clearance queries (used by online invariant checking, not by sensors)


def obstacle_clearance(p: Vector2, obs: Obstacle) -> float:
    """Signed distance from a point to an obstacle boundary (negative inside)."""
    if isinstance(obs, Circle):
        return (p - obs.center).norm() - obs.radius
    d = min(point_segment_distance(p, a, b) for a, b in obs.edges())
    return -d if obs.contains(p) else d


def link_obstacle_clearance(a: Vector2, b: Vector2, obs: Obstacle) -> float:
    """Signed distance from segment (a, b) to an obstacle boundary."""
    if isinstance(obs, Circle):
        return point_segment_distance(obs.center, a, b) - obs.radius
    d = min(segment_segment_distance(a, b, e0, e1) for e0, e1 in obs.edges())
    if obs.contains(a) or obs.contains(b):
        return -d
    return d


def min_obstacle_clearance(
    p: Vector2, w: WorldModel, exact_below: float = math.inf
) -> float:
    """Smallest signed clearance from a point to any obstacle boundary.

    Same conservative-bound shortcut as min_link_clearance for polygons whose
    bounding circle is already farther than exact_below.
    """
    if not w.obstacles:
        return math.inf
    best = math.inf
    for obs in w.obstacles:
        if isinstance(obs, Circle):
            best = min(best, (p - obs.center).norm() - obs.radius)
            continue
        cheap = (p - obs.bounding_center).norm() - obs.bounding_radius
        if cheap > exact_below:
            best = min(best, cheap)
        else:
            best = min(best, obstacle_clearance(p, obs))
    return best


def min_link_clearance(
    a: Vector2, b: Vector2, w: WorldModel, exact_below: float = math.inf
) -> float:
    """Smallest clearance of segment (a, b) from any obstacle.

    Clearances whose cheap triangle-inequality bound already exceeds
    exact_below are reported as that conservative lower bound instead of the
    exact value; pass the default to force exact everywhere.
    """
    if not w.obstacles:
        return math.inf
    mid = Vector2(0.5 * (a.x + b.x), 0.5 * (a.y + b.y))
    half = 0.5 * (b - a).norm()
    best = math.inf
    for obs in w.obstacles:
        if isinstance(obs, Circle):
            center, radius = obs.center, obs.radius
        else:
            center, radius = obs.bounding_center, obs.bounding_radius
        cheap = (center - mid).norm() - half - radius
        if cheap > exact_below:
            best = min(best, cheap)
        else:
            best = min(best, link_obstacle_clearance(a, b, obs))
    return best


# ---------------------------------------------------------------------------
# Camera


def simulate_camera(
    follower: RobotState,
    leader: Pose2D,
    fov: float,
    c_max: float,
    range_noise_std: float = 0.0,
    bearing_noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Optional[RelativePoseMeasurement]:
    """Relative pose of the leader in the follower body frame, or None.

    Visible iff the leader is within c_max and within +/- fov/2 of the camera
    optical axis (body heading + camera_angle).
    """
    if not 0.0 < fov < math.pi:
        raise ValueError("fov must lie in (0, pi)")
    rel = pose_to_frame(follower.pose, leader)
    r = rel.position.norm()
    if r > c_max:
        return None
    delta = wrap_angle(rel.position.bearing() - follower.camera_angle)
    if abs(delta) > fov / 2.0:
        return None
    if rng is not None and (range_noise_std > 0.0 or bearing_noise_std > 0.0):
        r_n = max(0.0, r + rng.normal(0.0, range_noise_std))
        b_n = rel.position.bearing() + rng.normal(0.0, bearing_noise_std)
        return RelativePoseMeasurement(
            Vector2(r_n * math.cos(b_n), r_n * math.sin(b_n)), rel.heading
        )
    return RelativePoseMeasurement(rel.position, rel.heading)


def rotate_camera(delta: float, delta_c: float, k_c: float) -> float:
    """Camera motor rate keeping the target inside the FOV deadband.

    Zero while |delta| <= delta_c; outside the deadband a proportional pull
    toward the deadband edge, continuous at the boundary.
    """
    if k_c <= 0 or delta_c <= 0:
        raise ValueError("k_c and delta_c must be positive")
    if abs(delta) <= delta_c:
        return 0.0
    return k_c * (delta - delta_c * _sgn(delta - delta_c))


def _sgn(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


# ---------------------------------------------------------------------------
# Broadcast channel


@dataclass
class BroadcastChannel:
    """Instantaneous lossless channel carrying the leader's trajectory buffer.

    A send occurs at step t iff the leader velocity changed at t or it is the
    first step. Subscribers hold independent copies.
    """

    subscribers: dict[str, object] = field(default_factory=dict)
    log: list[float] = field(default_factory=list)
    _sent_once: bool = False

    def register(self, subscriber_id: str) -> None:
        self.subscribers.setdefault(subscriber_id, None)

    def send_if_changed(self, cmd_changed: bool, t: float, buffer) -> bool:
        if self._sent_once and not cmd_changed:
            return False
        for sid in self.subscribers:
            self.subscribers[sid] = buffer.copy()
        self.log.append(t)
        self._sent_once = True
        return True

    def latest(self, subscriber_id: str):
        return self.subscribers.get(subscriber_id)
