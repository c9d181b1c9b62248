"""Geometric bounds that the cable-suspended payload imposes on the formation.

All bounds are static functions of the physical payload parameters and are
computed once at scenario load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class FormationInfeasible(ValueError):
    """The payload parameters leave no feasible formation scale band."""


@dataclass(frozen=True)
class PayloadParams:
    """Physical parameters of the cable suspension.

    cable_length: cable length l from robot mount to payload attachment
    mount_height: height d of the cable mount on each robot
    payload_height: height h0 of the payload body
    min_safe_height: minimum allowed clearance h_min between payload and ground
    suspension_radius: circumradius R_s of the payload attachment points
    formation_radius: circumradius R_f of the nominal robot formation
    """

    cable_length: float
    mount_height: float
    payload_height: float
    min_safe_height: float
    suspension_radius: float
    formation_radius: float

    def __post_init__(self) -> None:
        if self.cable_length < 0:
            raise ValueError("cable_length must be >= 0")
        for name in ("mount_height", "payload_height", "min_safe_height",
                     "suspension_radius", "formation_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.formation_radius < self.suspension_radius:
            raise ValueError("formation_radius must be >= suspension_radius")
        if self.mount_height <= self.payload_height + self.min_safe_height:
            raise ValueError(
                "mount_height must exceed payload_height + min_safe_height; "
                "the payload cannot be carried clear of the ground otherwise"
            )


@dataclass(frozen=True)
class ScaleBounds:
    """Allowed scale ratios of the formation relative to its nominal radius."""

    R_min: float
    r_minus: float
    r_plus: float


def payload_clearance(p: PayloadParams, effective_Rf: float) -> float:
    """Clearance between the payload's lowest point and the ground.

    effective_Rf is the current formation circumradius. The cables hang from
    mount height and splay outward by (effective_Rf - R_s), so the vertical
    drop is sqrt(l^2 - (effective_Rf - R_s)^2). The result may be negative
    (payload grounded); callers compare against min_safe_height.
    """
    spread = effective_Rf - p.suspension_radius
    if abs(spread) > p.cable_length:
        if abs(spread) - p.cable_length < 1e-9:
            spread = math.copysign(p.cable_length, spread)  # taut, float grazing
        else:
            raise ValueError(
                f"cable stretched: |effective_Rf - R_s| = {abs(spread):.6g} "
                f"exceeds cable length {p.cable_length:.6g}"
            )
    drop = math.sqrt(p.cable_length**2 - spread**2)
    return p.mount_height - p.payload_height - drop


def scale_bounds(p: PayloadParams) -> ScaleBounds:
    """Minimum and maximum formation scale ratios keeping the payload safe.

    The formation radius may range over [R_min, l + R_s]: above R_min the
    payload clears the ground by at least min_safe_height, and at l + R_s the
    cables are taut. Raises FormationInfeasible when the nominal radius falls
    outside that band.
    """
    k0 = p.mount_height - p.payload_height - p.min_safe_height
    if k0 > p.cable_length:
        R_min = p.suspension_radius
    else:
        R_min = p.suspension_radius + math.sqrt(p.cable_length**2 - k0**2)
    r_minus = R_min / p.formation_radius
    r_plus = (p.cable_length + p.suspension_radius) / p.formation_radius
    if r_minus > 1.0 or r_plus < 1.0:
        raise FormationInfeasible(
            f"nominal formation radius {p.formation_radius:.6g} outside the "
            f"feasible band [{R_min:.6g}, "
            f"{p.cable_length + p.suspension_radius:.6g}]"
        )
    return ScaleBounds(R_min=R_min, r_minus=r_minus, r_plus=r_plus)


def pairwise_distance_bounds(
    sb: ScaleBounds, desired: float, rho_c: float, c_max: float
) -> tuple[float, float]:
    """Merged lower/upper bounds on one inter-robot distance.

    Merges the formation scale band around the desired distance with the
    collision-avoidance floor rho_c and the camera range ceiling c_max.
    """
    if desired <= 0:
        raise ValueError("desired distance must be positive")
    lower = max(sb.r_minus * desired, rho_c)
    upper = min(sb.r_plus * desired, c_max)
    if lower >= upper:
        raise FormationInfeasible(
            f"empty distance band for desired {desired:.6g}: "
            f"lower {lower:.6g} >= upper {upper:.6g}"
        )
    return lower, upper
