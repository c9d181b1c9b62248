import math

import pytest

from cotransport.geometry import Pose2D, Vector2
from cotransport.leader import LeaderParams, leader_step, predict_flag, speed_profile
from cotransport.world import ScanResult


PARAMS = LeaderParams(v_tilde=0.5, omega_tilde=0.4, d_t=2.5, d_o=0.5, delta_T=1.0)


def scan_of(*points, max_range=10.0):
    return ScanResult(points=tuple(Vector2(*p) for p in points), max_range=max_range)


def test_speed_profile_above_threshold():
    assert speed_profile(3.0, 0.5, 2.5) == 1.0


def test_speed_profile_below_safety():
    assert speed_profile(0.3, 0.5, 2.5) == 0.0


def test_speed_profile_linear_ramp_midpoint():
    assert speed_profile(1.5, 0.5, 2.5) == pytest.approx(0.5)


def test_speed_profile_rejects_bad_params():
    with pytest.raises(ValueError):
        speed_profile(1.0, 2.5, 2.5)


def test_predict_flag_receding():
    assert predict_flag(scan_of((-1.0, 0.0)), v=0.5, delta_T=1.0) == 1


def test_predict_flag_approaching():
    assert predict_flag(scan_of((2.0, 0.0)), v=0.5, delta_T=1.0) == -1


def test_predict_flag_zero_velocity():
    assert predict_flag(scan_of((2.0, 0.0)), v=0.0, delta_T=1.0) == 0


def test_predict_flag_empty_scan():
    assert predict_flag(scan_of(), v=0.5, delta_T=1.0) == 1


def test_leader_step_open_space_turns_to_goal():
    pose = Pose2D.from_xytheta(0, 0, 0)
    goal = Vector2(math.cos(0.8) * 10, math.sin(0.8) * 10)
    d = leader_step(scan_of(), pose, goal, PARAMS)
    assert d.cmd.v == pytest.approx(PARAMS.v_tilde)
    assert d.cmd.omega == pytest.approx(PARAMS.omega_tilde)
    assert d.rho_lo == math.inf
    assert d.F == 1


def test_leader_step_goal_dead_ahead_no_turn():
    d = leader_step(scan_of(), Pose2D.from_xytheta(0, 0, 0), Vector2(10, 0), PARAMS)
    assert d.cmd.omega == 0.0


def test_leader_step_obstacle_near_receding_seeks_goal():
    # obstacle behind at 1.0 m < d_t, but moving away from it: goal turn
    pose = Pose2D.from_xytheta(0, 0, 0)
    d = leader_step(scan_of((-1.0, 0.0)), pose, Vector2(10, -5), PARAMS)
    assert d.F == 1
    assert d.cmd.omega == pytest.approx(-PARAMS.omega_tilde)
    assert d.cmd.v == pytest.approx(speed_profile(1.0, 0.5, 2.5) * 0.5)


def test_leader_step_turn_positive_when_obstacle_on_negative_bearing():
    # approaching obstacle below the axis: turn at +omega_tilde
    pose = Pose2D.from_xytheta(0, 0, 0)
    d = leader_step(scan_of((0.9, -0.4)), pose, Vector2(10, 0), PARAMS)
    assert d.F == -1
    assert d.alpha_lo < 0
    assert d.cmd.omega == pytest.approx(PARAMS.omega_tilde)


def test_leader_step_turn_negative_when_obstacle_on_positive_bearing():
    pose = Pose2D.from_xytheta(0, 0, 0)
    d = leader_step(scan_of((0.9, 0.4)), pose, Vector2(10, 0), PARAMS)
    assert d.F == -1
    assert d.alpha_lo > 0
    assert d.cmd.omega == pytest.approx(-PARAMS.omega_tilde)


def test_leader_step_velocity_envelope():
    pose = Pose2D.from_xytheta(0, 0, 0)
    for pts in [(), ((0.6, 0.1),), ((3.0, 1.0),), ((1.4, -0.9), (2.0, 2.0))]:
        d = leader_step(scan_of(*pts), pose, Vector2(7, 3), PARAMS)
        assert abs(d.cmd.v) <= PARAMS.v_tilde + 1e-12
        assert abs(d.cmd.omega) in (0.0, pytest.approx(PARAMS.omega_tilde))


def test_leader_step_pure():
    pose = Pose2D.from_xytheta(1, 2, 0.3)
    scan = scan_of((1.0, 0.5), (-2.0, 0.2))
    a = leader_step(scan, pose, Vector2(9, 9), PARAMS)
    b = leader_step(scan, pose, Vector2(9, 9), PARAMS)
    assert a == b


def test_chain_violations_report():
    ok = LeaderParams(v_tilde=0.1, omega_tilde=0.5, d_t=1.2, d_o=0.5, delta_T=1.0)
    assert ok.chain_violations(d_r=10.0, R_f=1.0) == []
    bad = LeaderParams(v_tilde=0.5, omega_tilde=0.4, d_t=2.5, d_o=0.5, delta_T=1.0)
    msgs = bad.chain_violations(d_r=10.0, R_f=1.0)
    assert len(msgs) == 2
    assert any("turn radius" in m for m in msgs)
