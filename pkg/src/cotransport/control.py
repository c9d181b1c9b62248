"""Three-process follower controller: normal tracking, constraint
preservation, and the continuous blend between them.

The process is classified by beta (the largest constraint risk): zero risk
runs the pure tracking law, risk above beta_t runs the pure preservation law,
and the band in between mixes both with weights that are continuous at the
switching values, so commands never jump across a mode change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .geometry import Vector2, Pose2D, wrap_angle
from .leader import LeaderParams
from .follower import CurvilinearOffset
from .world import VelocityCmd


class Mode(Enum):
    NORMAL = "normal"
    TRANSITION = "transition"
    PRESERVATION = "preservation"


@dataclass(frozen=True)
class ControlGains:
    c1: float
    c2: float
    c3: float
    k_v: float  # preservation linear gain
    k_omega: float  # preservation angular gain
    beta_t: float  # process threshold in (0, 1)
    v_max: float  # hardware linear velocity cap
    omega_max: float  # hardware angular velocity cap

    def __post_init__(self) -> None:
        if not 0.0 < self.beta_t < 1.0:
            raise ValueError("beta_t must lie in (0, 1)")
        for name in ("c1", "c2", "c3", "k_v", "k_omega", "v_max", "omega_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ProcessState:
    mode: Mode
    beta: float
    w_normal: float
    w_preserve: float


@dataclass(frozen=True)
class TrackingErrors:
    """Errors in the follower body frame: along-body x, lateral y, heading."""

    x_e: float
    y_e: float
    theta_e: float

    @staticmethod
    def from_local_target(desired_local: Pose2D) -> "TrackingErrors":
        return TrackingErrors(
            desired_local.x, desired_local.y, wrap_angle(desired_local.heading)
        )


def tracking_control(
    err: TrackingErrors, v_r: float, omega_r: float, g: ControlGains
) -> VelocityCmd:
    """Normal tracking law around the reference velocities.

    The position correction saturates at c1 / c2 by construction, so
    |v| <= |v_r| + c1 and |omega| <= |omega_r| + c2 |v_r| + c3.
    """
    den = math.sqrt(1.0 + err.x_e**2 + err.y_e**2)
    half = err.theta_e / 2.0
    v = v_r + g.c1 * err.x_e / den
    omega = (
        omega_r
        + g.c2 * v_r * (err.y_e * math.cos(half) - err.x_e * math.sin(half)) / den
        + g.c3 * math.sin(half)
    )
    return VelocityCmd(v, omega)


def sat(x: float, y: float) -> float:
    """Saturation factor: 1 when |x| <= y, else y/|x| (always >= 0)."""
    if abs(x) <= y:
        return 1.0
    return y / abs(x)


def preservation_control(tau: Vector2, theta: float, g: ControlGains) -> VelocityCmd:
    """Back the robot down the risk gradient.

    tau is the world-frame gradient of Psi at the robot's position; theta its
    world heading. Outputs are magnitude-clamped to the hardware caps.
    """
    norm = tau.norm()
    if norm == 0.0:
        return VelocityCmd(0.0, 0.0)
    phi_d = tau.bearing()
    a = wrap_angle(theta - phi_d)
    v_hat = -g.k_v * math.cos(a) * norm
    omega_hat = -g.k_omega * a
    return VelocityCmd(sat(v_hat, g.v_max) * v_hat,
                       sat(omega_hat, g.omega_max) * omega_hat)


def blend(
    n: VelocityCmd, o: VelocityCmd, beta: float, beta_t: float
) -> tuple[VelocityCmd, ProcessState]:
    """Convex mix of the tracking and preservation commands driven by beta."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if beta == 0.0:
        return n, ProcessState(Mode.NORMAL, beta, 1.0, 0.0)
    if beta > beta_t:
        return o, ProcessState(Mode.PRESERVATION, beta, 0.0, 1.0)
    w_o = beta / beta_t
    w_n = 1.0 - w_o
    cmd = VelocityCmd(w_n * n.v + w_o * o.v, w_n * n.omega + w_o * o.omega)
    return cmd, ProcessState(Mode.TRANSITION, beta, w_n, w_o)


def validate_gains(
    g: ControlGains, leader: LeaderParams, offsets: list[CurvilinearOffset]
) -> list[str]:
    """Check the velocity-bound feasibility chain against every lane offset.

    |v| <= v~ + w~ |q_d| + c1 must stay within v_max, and
    |omega| <= w~ + c2 v~ + c3 within omega_max. Returns all violations.
    """
    out = []
    for off in offsets:
        v_bound = leader.v_tilde + leader.omega_tilde * abs(off.q_d) + g.c1
        if v_bound > g.v_max:
            out.append(
                f"linear bound v~ + w~|q_d| + c1 = {v_bound:.4g} exceeds "
                f"v_max = {g.v_max:.4g} for offset q_d = {off.q_d:.4g}"
            )
    omega_bound = leader.omega_tilde + g.c2 * leader.v_tilde + g.c3
    if omega_bound > g.omega_max:
        out.append(
            f"angular bound w~ + c2 v~ + c3 = {omega_bound:.4g} exceeds "
            f"omega_max = {g.omega_max:.4g}"
        )
    return out
