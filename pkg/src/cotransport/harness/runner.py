"""Deterministic run loop: sense -> communicate -> control -> integrate,
with online invariant checking and buffered telemetry.

Follower control evaluations are pure given their per-step inputs; the
optional parallel mode runs them in a thread pool and produces telemetry
byte-identical to the serial mode.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from ..geometry import Pose2D, Vector2, to_frame, wrap_angle
from ..world import (
    BroadcastChannel,
    RobotState,
    ScanResult,
    VelocityCmd,
    integrate_camera,
    min_link_clearance,
    min_obstacle_clearance,
    rotate_camera,
    simulate_camera,
    simulate_lidar,
    step_kinematics,
)
from ..leader import LeaderDecision, leader_step
from ..follower import (
    CurvilinearOffset,
    LeaderSample,
    StaleBuffer,
    TrajectoryBuffer,
    dead_reckon_measurement,
    extrapolate_buffer,
    prefill_straight_history,
    reference_target,
)
from ..constraints import ConstraintEvaluation, ConstraintSpec, EvalContext, evaluate
from ..control import (
    Mode,
    TrackingErrors,
    blend,
    preservation_control,
    tracking_control,
)
from .scenario import MIXED_FORMS, Scenario, ScenarioError, build_constraint_sets, pairwise_bounds_for, validate_scenario
from .telemetry import TelemetryRecord, emit_plot_bundles, write_telemetry, write_timings

EPS = 1e-9
STALE_GRACE = 0.2  # seconds a follower holds its previous command


@dataclass
class Violation:
    step: int
    t: float
    robot: str
    kind: str
    detail: str

    def text(self) -> str:
        return (
            f"step {self.step} (t={self.t:.3f}s) robot {self.robot}: "
            f"{self.kind}: {self.detail}"
        )


@dataclass
class RunResult:
    reached_goal: bool
    steps: int
    sim_time: float
    final_leader_position: Vector2
    violations: list[Violation]
    records: list[TelemetryRecord]
    timings: list[tuple[int, str, str, float]]
    transmissions: list[float]
    max_tau: float
    visibility_losses: int
    telemetry_path: Optional[Path] = None
    timings_path: Optional[Path] = None

    def timing_stats(self) -> dict[str, tuple[float, float]]:
        """Mean/std controller wall time in microseconds, pooled per phase
        and broken out per robot ("phase" and "phase/robot" keys)."""
        groups: dict[str, list[float]] = {}
        for _, rid, phase, micros in self.timings:
            groups.setdefault(phase, []).append(micros)
            groups.setdefault(f"{phase}/{rid}", []).append(micros)
        return {
            key: (float(np.mean(vals)), float(np.std(vals)))
            for key, vals in sorted(groups.items())
        }

    def summary(self) -> str:
        lines = [
            f"reached_goal: {self.reached_goal}",
            f"steps: {self.steps} ({self.sim_time:.2f} s simulated)",
            f"final leader position: ({self.final_leader_position.x:.3f}, "
            f"{self.final_leader_position.y:.3f})",
            f"broadcasts: {len(self.transmissions)}",
            f"camera dropouts (dead-reckoned): {self.visibility_losses}",
            f"max |tau|: {self.max_tau:.4g}",
        ]
        for key, (mean, std) in self.timing_stats().items():
            lines.append(f"step time {key}: {mean:.1f} +/- {std:.1f} us")
        lines.append(f"violations: {len(self.violations)}")
        lines += ["  " + v.text() for v in self.violations[:20]]
        if len(self.violations) > 20:
            lines.append(f"  ... and {len(self.violations) - 20} more")
        return "\n".join(lines)


@dataclass
class _FollowerRt:
    """Mutable per-follower runtime owned by the run loop."""

    state: RobotState
    offset: CurvilinearOffset
    link_partners: tuple[str, ...]
    specs: list[ConstraintSpec]
    buffer: TrajectoryBuffer
    psi_bound: float  # 1 - (1 - beta_t)^n, fixed per constraint set
    prev_cmd: VelocityCmd = VelocityCmd(0.0, 0.0)
    prev_mode: Mode = Mode.NORMAL
    stale_since: Optional[float] = None
    in_preservation_since: Optional[float] = None


@dataclass
class _FollowerStep:
    """Everything one follower's control evaluation produced this step."""

    cmd: VelocityCmd
    mode_label: str
    beta: Optional[float]
    psi: Optional[float]
    errors: Optional[TrackingErrors]
    evaluation: Optional[ConstraintEvaluation]
    omega_c: float
    dead_reckoned: bool
    stale: bool
    gen_us: float
    track_us: float


def run(
    sc: Scenario,
    out_dir: Optional[Path] = None,
    parallel: bool = False,
    plots: bool = False,
) -> RunResult:
    report = validate_scenario(sc)
    if not report.ok:
        raise ScenarioError("scenario failed validation:\n" + report.text())
    if parallel and _camera_noise(sc.sensors):
        # camera noise draws happen inside the worker threads; scheduling
        # would reorder them and break reproducibility
        raise ScenarioError("parallel mode requires noise-free cameras")

    dt = sc.sim.dt
    sens = sc.sensors
    gains = sc.gains
    rng = np.random.default_rng(sc.sim.seed)

    leader_state = RobotState(pose=sc.leader_start, id=sc.leader_id, role="leader")
    sets = build_constraint_sets(sc)
    channel = BroadcastChannel()

    leader_buffer = TrajectoryBuffer(sc.buffer_capacity())
    if sc.sim.prefill_virtual_path:
        max_s = max((abs(f.offset.s_d) for f in sc.followers), default=0.0)
        if max_s > 0.0:
            prefill_straight_history(
                leader_buffer, sc.leader_start, sc.leader_params.v_tilde, dt,
                1.25 * max_s,
            )

    followers: dict[str, _FollowerRt] = {}
    for f in sc.followers:
        channel.register(f.id)
        state = RobotState(pose=f.start, id=f.id, role="follower")
        # aim the camera at the leader's start pose
        aim = wrap_angle(to_frame(f.start, sc.leader_start.position).bearing())
        state = replace(state, camera_angle=aim)
        n_specs = len(sets[f.id])
        followers[f.id] = _FollowerRt(
            state=state,
            offset=f.offset,
            link_partners=f.link_partners,
            specs=sets[f.id],
            buffer=TrajectoryBuffer(sc.buffer_capacity()),
            psi_bound=1.0 - (1.0 - gains.beta_t) ** n_specs,
        )

    bounds = {
        (f.id, j): pairwise_bounds_for(sc, _sb(sc), f.id, j)
        for f in sc.followers for j in sc.robot_ids() if j != f.id
    }

    records: list[TelemetryRecord] = []
    timings: list[tuple[int, str, str, float]] = []
    violations: list[Violation] = []
    prev_leader_cmd: Optional[VelocityCmd] = None
    reached = False
    max_tau = 0.0
    visibility_losses = 0
    step = 0
    pool = ThreadPoolExecutor(max_workers=max(1, len(followers))) if parallel else None

    try:
        for step in range(sc.sim.max_steps):
            t = step * dt

            # --- sense
            scans: dict[str, ScanResult] = {}
            scans[sc.leader_id] = simulate_lidar(
                leader_state, sc.world, sens.lidar_range, sens.lidar_beams,
                sens.lidar_noise_std, rng,
            )
            for fid, fr in followers.items():
                scans[fid] = simulate_lidar(
                    fr.state, sc.world, sens.lidar_range, sens.lidar_beams,
                    sens.lidar_noise_std, rng,
                )

            # --- leader decision
            t0 = time.perf_counter_ns()
            decision = leader_step(
                scans[sc.leader_id], leader_state.pose, sc.world.goal,
                sc.leader_params,
            )
            timings.append(
                (step, sc.leader_id, "generation",
                 (time.perf_counter_ns() - t0) / 1e3)
            )

            # --- communicate
            leader_buffer.append(
                LeaderSample(leader_state.pose, decision.cmd.v,
                             decision.cmd.omega, t)
            )
            changed = prev_leader_cmd is None or decision.cmd != prev_leader_cmd
            sent = channel.send_if_changed(changed, t, leader_buffer)
            prev_leader_cmd = decision.cmd
            for fid, fr in followers.items():
                if sent:
                    fr.buffer = channel.latest(fid)
                else:
                    extrapolate_buffer(fr.buffer, dt)

            # --- follower control (pure per follower; parallelizable)
            poses = {sc.leader_id: leader_state.pose}
            for fid, fr in followers.items():
                poses[fid] = fr.state.pose

            def control_one(fid: str) -> _FollowerStep:
                return _follower_control(
                    followers[fid], sc, scans[fid], poses, leader_state.pose,
                    t, rng if _camera_noise(sens) else None,
                )

            fids = list(followers)
            if pool is not None:
                results = dict(zip(fids, pool.map(control_one, fids)))
            else:
                results = {fid: control_one(fid) for fid in fids}

            # --- bookkeeping derived from control outputs
            for fid, out in results.items():
                timings.append((step, fid, "generation", out.gen_us))
                timings.append((step, fid, "tracking", out.track_us))
                if out.dead_reckoned:
                    visibility_losses += 1
                if out.evaluation is not None:
                    max_tau = max(max_tau, out.evaluation.tau.norm())

            # --- online invariants and telemetry at time t
            diags = _step_diagnostics(sc, leader_state, followers, poses)
            _check_step(
                sc, step, t, decision, followers, results, poses, bounds,
                diags, violations,
            )
            records.append(
                _leader_record(t, leader_state, decision, diags, sc.leader_params.d_t)
            )
            for fid in fids:
                records.append(
                    _follower_record(t, followers[fid], results[fid], diags)
                )

            # --- integrate (single writer)
            leader_state = step_kinematics(leader_state, decision.cmd, dt)
            for fid, out in results.items():
                fr = followers[fid]
                fr.state = step_kinematics(fr.state, out.cmd, dt)
                fr.state = integrate_camera(
                    fr.state, out.omega_c, dt, sens.camera_rate_cap
                )
                fr.prev_cmd = out.cmd

            step += 1
            if (leader_state.pose.position - sc.world.goal).norm() <= sc.sim.goal_tolerance:
                reached = True
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=True)

    result = RunResult(
        reached_goal=reached,
        steps=step,
        sim_time=step * dt,
        final_leader_position=leader_state.pose.position,
        violations=violations,
        records=records,
        timings=timings,
        transmissions=list(channel.log),
        max_tau=max_tau,
        visibility_losses=visibility_losses,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.telemetry_path = out_dir / "telemetry.csv"
        result.timings_path = out_dir / "timings.csv"
        write_telemetry(records, result.telemetry_path)
        write_timings(timings, result.timings_path)
        (out_dir / "summary.txt").write_text(result.summary() + "\n")
        if plots:
            emit_plot_bundles(records, out_dir / "plots")
    return result


def _sb(sc: Scenario):
    from ..payload import scale_bounds

    return scale_bounds(sc.payload)


def _camera_noise(sens) -> bool:
    return sens.camera_range_noise_std > 0.0 or sens.camera_bearing_noise_std > 0.0


def _follower_control(
    fr: _FollowerRt,
    sc: Scenario,
    scan: ScanResult,
    poses: dict[str, Pose2D],
    leader_pose: Pose2D,
    t: float,
    cam_rng,
) -> _FollowerStep:
    sens = sc.sensors
    gains = sc.gains

    # generation: measure the leader, walk the buffer, build the reference
    gen_t0 = time.perf_counter_ns()
    meas = simulate_camera(
        fr.state, leader_pose, sens.camera_fov, sens.camera_range,
        sens.camera_range_noise_std, sens.camera_bearing_noise_std, cam_rng,
    )
    dead_reckoned = meas is None
    leader_est = fr.buffer.latest().pose
    if meas is None:
        meas = dead_reckon_measurement(fr.state.pose, leader_est)
    stale = False
    ref = None
    try:
        ref = reference_target(fr.buffer, fr.offset, meas)
    except StaleBuffer:
        stale = True
    gen_us = (time.perf_counter_ns() - gen_t0) / 1e3

    # camera servo around the estimated leader bearing
    delta = wrap_angle(
        to_frame(fr.state.pose, leader_est.position).bearing() - fr.state.camera_angle
    )
    omega_c = rotate_camera(delta, sens.camera_deadband, sens.camera_gain)

    # tracking: constraint evaluation plus the three-process blend
    track_t0 = time.perf_counter_ns()
    ctx = EvalContext(
        heading=fr.state.pose.heading,
        neighbors={
            j: to_frame(fr.state.pose, p.position)
            for j, p in poses.items() if j != fr.state.id
        },
        obstacle_points=scan.points,
    )
    ev = evaluate(ctx, fr.specs, tau_max=sc.constraints.tau_max)

    if stale:
        if fr.stale_since is None:
            fr.stale_since = t
        cmd = fr.prev_cmd if (t - fr.stale_since) <= STALE_GRACE else VelocityCmd(0.0, 0.0)
        track_us = (time.perf_counter_ns() - track_t0) / 1e3
        return _FollowerStep(
            cmd=cmd, mode_label="stale", beta=ev.beta, psi=ev.psi, errors=None,
            evaluation=ev, omega_c=omega_c, dead_reckoned=dead_reckoned,
            stale=True, gen_us=gen_us, track_us=track_us,
        )
    fr.stale_since = None

    errors = TrackingErrors.from_local_target(ref.desired_pose_local)
    n_cmd = tracking_control(errors, ref.v_r, ref.omega_r, gains)
    o_cmd = preservation_control(ev.tau, fr.state.pose.heading, gains)
    cmd, proc = blend(n_cmd, o_cmd, ev.beta, gains.beta_t)
    track_us = (time.perf_counter_ns() - track_t0) / 1e3

    return _FollowerStep(
        cmd=cmd, mode_label=proc.mode.value, beta=ev.beta, psi=ev.psi,
        errors=errors, evaluation=ev, omega_c=omega_c,
        dead_reckoned=dead_reckoned, stale=False, gen_us=gen_us,
        track_us=track_us,
    )


def _branch_label(d: LeaderDecision, d_t: float) -> str:
    if d.rho_lo > d_t:
        return "goal"
    if d.F > 0:
        return "recede"
    if d.alpha_lo < 0:
        return "turn+"
    return "turn-"


# Exact clearances are only needed near the safety bounds; beyond this the
# cheap conservative bound is recorded instead.
EXACT_CLEARANCE_BELOW = 3.0


@dataclass
class _RobotDiag:
    rho_io: float
    rho_il: float = math.inf
    pair_min: float = math.inf
    pair_max: float = 0.0


def _step_diagnostics(
    sc: Scenario,
    leader_state: RobotState,
    followers: dict[str, _FollowerRt],
    poses: dict[str, Pose2D],
) -> dict[str, _RobotDiag]:
    diags = {
        sc.leader_id: _RobotDiag(
            rho_io=min_obstacle_clearance(
                leader_state.pose.position, sc.world, EXACT_CLEARANCE_BELOW
            )
        )
    }
    for fid, fr in followers.items():
        own = fr.state.pose.position
        rho_io = min_obstacle_clearance(own, sc.world, EXACT_CLEARANCE_BELOW)
        rho_il = min(
            (
                min_link_clearance(
                    own, poses[p].position, sc.world, EXACT_CLEARANCE_BELOW
                )
                for p in fr.link_partners
            ),
            default=math.inf,
        )
        ds = [(poses[j].position - own).norm() for j in poses if j != fid]
        diags[fid] = _RobotDiag(
            rho_io=rho_io, rho_il=rho_il,
            pair_min=min(ds) if ds else math.inf,
            pair_max=max(ds) if ds else 0.0,
        )
    return diags


def _check_step(
    sc: Scenario,
    step: int,
    t: float,
    decision: LeaderDecision,
    followers: dict[str, _FollowerRt],
    results: dict[str, _FollowerStep],
    poses: dict[str, Pose2D],
    bounds: dict[tuple[str, str], tuple[float, float]],
    diags: dict[str, "_RobotDiag"],
    violations: list[Violation],
) -> None:
    gains = sc.gains

    def bad(robot: str, kind: str, detail: str) -> None:
        violations.append(Violation(step, t, robot, kind, detail))

    cmds = {sc.leader_id: decision.cmd}
    for fid, out in results.items():
        cmds[fid] = out.cmd

    for rid, cmd in cmds.items():
        if abs(cmd.v) > gains.v_max + EPS or abs(cmd.omega) > gains.omega_max + EPS:
            bad(rid, "velocity-cap",
                f"|v|={abs(cmd.v):.4g} |w|={abs(cmd.omega):.4g} "
                f"caps ({gains.v_max:.4g}, {gains.omega_max:.4g})")

    for rid in poses:
        rho = diags[rid].rho_io
        if rho < sc.constraints.obstacle_safety - EPS:
            bad(rid, "obstacle-distance",
                f"rho_io={rho:.4g} < d_o={sc.constraints.obstacle_safety:.4g}")

    for fid, fr in followers.items():
        rho_il = diags[fid].rho_il
        if rho_il < sc.constraints.link_safety - EPS:
            bad(fid, "link-distance",
                f"rho_il={rho_il:.4g} < d_l={sc.constraints.link_safety:.4g}")

        own = poses[fid].position
        for j in sc.robot_ids():
            if j == fid:
                continue
            d = (poses[j].position - own).norm()
            lo, hi = bounds[(fid, j)]
            if d < lo - EPS or d > hi + EPS:
                bad(fid, "pairwise-distance",
                    f"|p_{fid},{j}|={d:.4g} outside [{lo:.4g}, {hi:.4g}]")

        out = results[fid]
        if out.beta is not None and out.beta > 1.0 + EPS:
            bad(fid, "beta-range", f"beta={out.beta:.4g} > 1")
        if out.psi is not None and out.psi >= 1.0:
            bad(fid, "psi-range", f"psi={out.psi:.4g} >= 1")

        for m in sc.constraints.mixed:
            form = MIXED_FORMS[m.form]
            targets = (
                [j for j in sc.robot_ids() if j != fid]
                if m.targets == "neighbors" else [m.targets]
            )
            for j in targets:
                r = (poses[j].position - own).norm()
                raw = form.raw(out.cmd.v, out.cmd.omega, r)
                if raw < m.lower - EPS or raw > m.upper + EPS:
                    bad(fid, "mixed-raw",
                        f"{m.form}({j}) = {raw:.4g} outside "
                        f"[{m.lower:.4g}, {m.upper:.4g}]")

        # Theorem-style bound while the preservation process is active
        mode = out.mode_label
        if mode == Mode.PRESERVATION.value:
            if fr.in_preservation_since is None:
                fr.in_preservation_since = t
            if out.psi is not None and out.psi > fr.psi_bound + EPS:
                bad(fid, "preservation-psi-bound",
                    f"psi={out.psi:.6g} > 1-(1-beta_t)^n={fr.psi_bound:.6g}")
        else:
            fr.in_preservation_since = None
        fr.prev_mode = Mode(mode) if mode in (m.value for m in Mode) else fr.prev_mode


def _leader_record(
    t: float, state: RobotState, decision: LeaderDecision,
    diags: dict[str, _RobotDiag], d_t: float,
) -> TelemetryRecord:
    rho = diags[state.id].rho_io
    return TelemetryRecord(
        t=t, id=state.id, role="leader",
        x=state.pose.x, y=state.pose.y, theta=state.pose.heading,
        v=decision.cmd.v, omega=decision.cmd.omega,
        mode=_branch_label(decision, d_t),
        rho_io=rho if math.isfinite(rho) else None,
    )


def _follower_record(
    t: float,
    fr: _FollowerRt,
    out: _FollowerStep,
    diags: dict[str, _RobotDiag],
) -> TelemetryRecord:
    state = fr.state
    d = diags[state.id]
    return TelemetryRecord(
        t=t, id=state.id, role="follower",
        x=state.pose.x, y=state.pose.y, theta=state.pose.heading,
        v=out.cmd.v, omega=out.cmd.omega,
        beta=out.beta, psi=out.psi, mode=out.mode_label,
        x_e=out.errors.x_e if out.errors else None,
        y_e=out.errors.y_e if out.errors else None,
        theta_e=out.errors.theta_e if out.errors else None,
        rho_io=d.rho_io if math.isfinite(d.rho_io) else None,
        rho_il=d.rho_il if math.isfinite(d.rho_il) else None,
        pair_min=d.pair_min if math.isfinite(d.pair_min) else None,
        pair_max=d.pair_max,
        camera_angle=state.camera_angle,
    )
