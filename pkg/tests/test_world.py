import math

import numpy as np
import pytest

from cotransport.follower import LeaderSample, TrajectoryBuffer
from cotransport.geometry import Pose2D, Vector2
from cotransport.world import (
    BroadcastChannel,
    Circle,
    ConvexPolygon,
    RobotState,
    VelocityCmd,
    WorldModel,
    link_obstacle_clearance,
    min_link_clearance,
    min_obstacle_clearance,
    obstacle_clearance,
    rotate_camera,
    simulate_camera,
    simulate_lidar,
    step_kinematics,
)


def robot(x=0.0, y=0.0, theta=0.0, cam=0.0, role="follower"):
    return RobotState(pose=Pose2D.from_xytheta(x, y, theta), id="r", role=role,
                      camera_angle=cam)


def world(*obstacles, goal=(25.0, 25.0)):
    return WorldModel(obstacles=tuple(obstacles), goal=Vector2(*goal))


# --------------------------------------------------------------------------
# kinematics


def test_step_straight():
    s = step_kinematics(robot(), VelocityCmd(1.0, 0.0), 0.1)
    assert s.pose.x == pytest.approx(0.1)
    assert s.pose.y == 0.0
    assert s.pose.heading == 0.0


def test_step_pure_rotation():
    s = step_kinematics(robot(), VelocityCmd(0.0, math.pi), 1.0)
    assert s.pose.position.norm() == 0.0
    assert s.pose.heading == pytest.approx(math.pi)


def test_step_circle_closure():
    # v = w = 1 traces a unit circle; Euler at dt=0.01 closes within O(dt)
    s = robot()
    dt = 0.01
    n = round(2 * math.pi / dt)
    for _ in range(n):
        s = step_kinematics(s, VelocityCmd(1.0, 1.0), dt)
    assert s.pose.position.norm() < 0.05


def test_step_rejects_bad_input():
    with pytest.raises(ValueError):
        step_kinematics(robot(), VelocityCmd(math.nan, 0.0), 0.1)
    with pytest.raises(ValueError):
        step_kinematics(robot(), VelocityCmd(1.0, 0.0), 0.0)


# --------------------------------------------------------------------------
# lidar


def test_lidar_empty_world():
    scan = simulate_lidar(robot(), world(), d_r=5.0, n_beams=36)
    assert scan.points == ()


def test_lidar_circle_ahead_closed_form():
    w = world(Circle(Vector2(2.0, 0.0), 0.5))
    scan = simulate_lidar(robot(), w, d_r=5.0, n_beams=360)
    assert scan.min_range() == pytest.approx(1.5, abs=1e-9)
    nearest = min(scan.points, key=lambda p: p.norm())
    assert nearest.y == pytest.approx(0.0, abs=1e-9)


def test_lidar_points_lie_on_boundaries_within_range():
    w = world(
        Circle(Vector2(3.0, 1.0), 0.8),
        ConvexPolygon((Vector2(-2, -2), Vector2(-1, -2), Vector2(-1, -1), Vector2(-2, -1))),
    )
    s = robot(0.3, -0.2, 0.7)
    scan = simulate_lidar(s, w, d_r=6.0, n_beams=180)
    assert scan.points
    for p in scan.points:
        assert p.norm() <= 6.0 + 1e-12
        world_p = p.rotated(s.pose.heading) + s.pose.position
        d = min(abs(obstacle_clearance(world_p, o)) for o in w.obstacles)
        assert d < 1e-6


def test_lidar_matches_dense_ray_oracle():
    # min return approximates the true boundary distance within beam spacing
    w = world(Circle(Vector2(2.5, 1.5), 0.7))
    s = robot(0.0, 0.0, 0.3)
    scan = simulate_lidar(s, w, d_r=8.0, n_beams=720)
    true_min = min_obstacle_clearance(s.pose.position, w)
    # chord error at 0.5 deg spacing
    assert scan.min_range() == pytest.approx(true_min, abs=5e-3)


def test_lidar_deterministic_with_seed():
    w = world(Circle(Vector2(2.0, 0.5), 0.6))
    a = simulate_lidar(robot(), w, 5.0, 90, noise_std=0.01,
                       rng=np.random.default_rng(9))
    b = simulate_lidar(robot(), w, 5.0, 90, noise_std=0.01,
                       rng=np.random.default_rng(9))
    assert a.points == b.points
    assert a.points != simulate_lidar(robot(), w, 5.0, 90).points


def test_lidar_noise_requires_rng():
    with pytest.raises(ValueError):
        simulate_lidar(robot(), world(), 5.0, 36, noise_std=0.01, rng=None)


# --------------------------------------------------------------------------
# exact clearances


def test_obstacle_clearance_signed():
    c = Circle(Vector2(0, 0), 1.0)
    assert obstacle_clearance(Vector2(3, 0), c) == pytest.approx(2.0)
    assert obstacle_clearance(Vector2(0.5, 0), c) == pytest.approx(-0.5)
    poly = ConvexPolygon((Vector2(0, 0), Vector2(2, 0), Vector2(2, 2), Vector2(0, 2)))
    assert obstacle_clearance(Vector2(3, 1), poly) == pytest.approx(1.0)
    assert obstacle_clearance(Vector2(1, 1), poly) == pytest.approx(-1.0)


def test_link_clearance():
    c = Circle(Vector2(1.0, 2.0), 0.5)
    d = link_obstacle_clearance(Vector2(0, 0), Vector2(2, 0), c)
    assert d == pytest.approx(1.5)
    w = world(c)
    assert min_link_clearance(Vector2(0, 0), Vector2(2, 0), w) == pytest.approx(1.5)
    # conservative far bound never exceeds the true clearance
    far = Circle(Vector2(50.0, 0.0), 0.5)
    w2 = world(far)
    cheap = min_link_clearance(Vector2(0, 0), Vector2(2, 0), w2, exact_below=3.0)
    exact = min_link_clearance(Vector2(0, 0), Vector2(2, 0), w2)
    assert cheap <= exact + 1e-12


def test_polygon_validation():
    with pytest.raises(ValueError):
        ConvexPolygon((Vector2(0, 0), Vector2(1, 0)))
    with pytest.raises(ValueError):  # clockwise
        ConvexPolygon((Vector2(0, 0), Vector2(0, 1), Vector2(1, 1), Vector2(1, 0)))
    with pytest.raises(ValueError):  # non-convex
        ConvexPolygon((Vector2(0, 0), Vector2(2, 0), Vector2(0.1, 0.1), Vector2(0, 2)))


# --------------------------------------------------------------------------
# camera


def test_camera_dead_ahead():
    m = simulate_camera(robot(), Pose2D.from_xytheta(1, 0, 0), fov=math.pi / 2,
                        c_max=5.0)
    assert m is not None
    assert m.relative_position.x == pytest.approx(1.0)
    assert m.relative_position.y == pytest.approx(0.0)
    assert m.relative_heading == 0.0


def test_camera_fov_boundary_exclusion():
    fov = math.pi / 2
    b = fov / 2 + 0.01
    leader = Pose2D.from_xytheta(math.cos(b), math.sin(b), 0)
    assert simulate_camera(robot(), leader, fov, 5.0) is None
    inside = Pose2D.from_xytheta(math.cos(b - 0.02), math.sin(b - 0.02), 0)
    assert simulate_camera(robot(), inside, fov, 5.0) is not None


def test_camera_range_gate():
    assert simulate_camera(robot(), Pose2D.from_xytheta(6, 0, 0), math.pi / 2, 5.0) is None


def test_camera_uses_camera_angle():
    # leader dead ahead of the *camera*, which is rotated 90 degrees left
    leader = Pose2D.from_xytheta(0, 1, 0)
    m = simulate_camera(robot(cam=math.pi / 2), leader, math.pi / 2, 5.0)
    assert m is not None
    assert m.relative_position.x == pytest.approx(0.0, abs=1e-15)
    assert m.relative_position.y == pytest.approx(1.0)


def test_camera_gating_matches_brute_force_predicate():
    rng = np.random.default_rng(31)
    fov, c_max = 1.2, 4.0
    for _ in range(500):
        s = robot(*rng.uniform(-3, 3, 2), rng.uniform(-3, 3), cam=rng.uniform(-3, 3))
        leader = Pose2D.from_xytheta(*rng.uniform(-6, 6, 2), rng.uniform(-3, 3))
        m = simulate_camera(s, leader, fov, c_max)
        rel = leader.position - s.pose.position
        rng_ok = rel.norm() <= c_max
        axis = s.pose.heading + s.camera_angle
        delta = math.atan2(
            math.sin(rel.bearing() - axis), math.cos(rel.bearing() - axis)
        )
        fov_ok = abs(delta) <= fov / 2
        assert (m is not None) == (rng_ok and fov_ok)


def test_rotate_camera_deadband():
    assert rotate_camera(0.3, 0.5, 0.2) == 0.0


def test_rotate_camera_just_above_threshold():
    eps = 1e-6
    assert rotate_camera(0.5 + eps, 0.5, 0.2) == pytest.approx(0.2 * eps)


def test_rotate_camera_negative_side():
    assert rotate_camera(-1.0, 0.5, 0.2) == pytest.approx(-0.1)


# --------------------------------------------------------------------------
# broadcast channel


def _buffer_with(n: int) -> TrajectoryBuffer:
    buf = TrajectoryBuffer(16)
    for k in range(n):
        buf.append(LeaderSample(Pose2D.from_xytheta(k * 0.1, 0, 0), 0.5, 0.0, k * 0.1))
    return buf


def test_broadcast_constant_velocity_single_send():
    ch = BroadcastChannel()
    ch.register("f")
    buf = _buffer_with(1)
    sends = 0
    for step in range(100):
        if ch.send_if_changed(False, step * 0.1, buf):
            sends += 1
    assert sends == 1
    assert ch.log == [0.0]


def test_broadcast_on_changes():
    ch = BroadcastChannel()
    ch.register("f")
    buf = _buffer_with(1)
    times = []
    for step in range(10):
        changed = step in (3, 7)
        if ch.send_if_changed(changed, float(step), buf):
            times.append(float(step))
    assert times == [0.0, 3.0, 7.0]
    assert ch.log == times


def test_broadcast_copy_semantics():
    ch = BroadcastChannel()
    ch.register("f")
    buf = _buffer_with(3)
    ch.send_if_changed(True, 0.0, buf)
    got = ch.latest("f")
    assert got is not buf
    assert [s.pose.x for s in got] == [s.pose.x for s in buf]
    # later mutation of the sender's buffer does not leak
    buf.append(LeaderSample(Pose2D.from_xytheta(9, 9, 0), 0.5, 0.0, 99.0))
    assert len(got) == 3
