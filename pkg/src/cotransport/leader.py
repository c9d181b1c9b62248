"""Reactive leader guidance: constant-time goal seeking with obstacle-distance
based turning and speed shaping.

The decision uses only the current scan, the pose and the goal; no map, no
memory. Cost per step is linear in the scan size and independent of goal
distance or robot count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Vector2, Pose2D, wrap_angle
from .world import ScanResult, VelocityCmd


@dataclass(frozen=True)
class LeaderParams:
    v_tilde: float  # cruise speed
    omega_tilde: float  # fixed turn rate magnitude
    d_t: float  # turn threshold distance
    d_o: float  # obstacle safety distance
    delta_T: float  # forward prediction horizon

    def chain_violations(self, d_r: float, R_f: float) -> list[str]:
        """Check the parameter chain that guarantees obstacle avoidance.

        Returns human-readable violations (empty when the chain holds). The
        chain is sufficient, not necessary; callers may treat violations as
        warnings.
        """
        turn_radius = self.v_tilde / self.omega_tilde
        out = []
        if not turn_radius < self.d_o:
            out.append(
                f"turn radius v~/w~ = {turn_radius:.4g} must be < d_o = {self.d_o:.4g}"
            )
        if not self.d_o < self.d_t - 2.0 * turn_radius:
            out.append(
                f"d_o = {self.d_o:.4g} must be < d_t - 2v~/w~ = "
                f"{self.d_t - 2.0 * turn_radius:.4g}"
            )
        if not self.d_t < d_r:
            out.append(f"d_t = {self.d_t:.4g} must be < lidar range d_r = {d_r:.4g}")
        if not self.d_t > R_f:
            out.append(
                f"d_t = {self.d_t:.4g} should exceed the formation radius {R_f:.4g}"
            )
        return out


@dataclass(frozen=True)
class LeaderDecision:
    cmd: VelocityCmd
    rho_lo: float  # distance to nearest scan point
    alpha_lo: float  # bearing of nearest scan point (local frame)
    alpha_g: float  # bearing of goal (local frame)
    F: int  # sign of predicted obstacle-distance change


def speed_profile(rho_lo: float, d_o: float, d_t: float) -> float:
    """Speed factor in [0, 1]: full above d_t, zero below d_o, linear between."""
    if d_o >= d_t:
        raise ValueError("requires d_o < d_t")
    if rho_lo >= d_t:
        return 1.0
    if rho_lo < d_o:
        return 0.0
    return (rho_lo - d_o) / (d_t - d_o)


def predict_flag(scan: ScanResult, v: float, delta_T: float) -> int:
    """Sign of the predicted change in obstacle distance.

    Advances the robot straight ahead by v * delta_T (local frame: along +x)
    and compares the min distance to the same scan points against the current
    one. Empty scan yields +1 (open space, receding by convention).
    """
    if not scan.points:
        return 1
    rho_now = scan.min_range()
    dx = v * delta_T
    rho_pred = min(math.hypot(p.x - dx, p.y) for p in scan.points)
    return _sgn(rho_pred - rho_now)


def leader_step(
    scan: ScanResult, pose: Pose2D, goal: Vector2, p: LeaderParams
) -> LeaderDecision:
    """One guidance decision.

    Far from obstacles (or when the predicted distance is growing) the leader
    turns toward the goal at the fixed rate; otherwise it turns away from the
    nearest obstacle, positive rate when that obstacle has negative bearing.
    Speed is always the shaped cruise speed.
    """
    if scan.points:
        nearest = min(scan.points, key=lambda q: q.norm())
        rho_lo = nearest.norm()
        alpha_lo = nearest.bearing()
    else:
        rho_lo = math.inf
        alpha_lo = 0.0

    alpha_g = wrap_angle((goal - pose.position).bearing() - pose.heading)
    v = speed_profile(rho_lo, p.d_o, p.d_t) * p.v_tilde
    F = predict_flag(scan, v, p.delta_T)

    if rho_lo > p.d_t:
        omega = p.omega_tilde * _sgn(alpha_g)
    elif F > 0:
        omega = p.omega_tilde * _sgn(alpha_g)
    elif alpha_lo < 0:
        omega = p.omega_tilde
    else:
        omega = -p.omega_tilde

    return LeaderDecision(
        cmd=VelocityCmd(v, omega), rho_lo=rho_lo, alpha_lo=alpha_lo,
        alpha_g=alpha_g, F=F,
    )


def _sgn(x: float) -> int:
    if x > 0:
        return 1
    if x < 0:
        return -1
    return 0
