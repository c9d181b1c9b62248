"""Barrier-like constraint machinery for the follower controllers.

Each constraint maps a scalar measurement g (a relative distance, an obstacle
clearance, a link clearance, or a transformed distance) to a risk value
Q in [0, 1]: zero on a safe plateau, ramping to exactly 1 at the hard bound
over a margin of width gamma. A follower aggregates its constraints into

    beta = max_k Q_k            (process classifier)
    Psi  = 1 - prod_k (1 - Q_k) (risk potential)

and the preservation controller descends Psi along its exact analytic
gradient with respect to the follower's own position.

Velocity-coupled (mixed) constraints are decoupled at configuration time by
bounding their velocity part and tightening the position bounds; the engine
then treats them as ordinary one- or two-sided constraints.

Evaluation cost is linear in the number of constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

from .geometry import Vector2, Pose2D, to_frame


class ConstraintConfigError(ValueError):
    pass


class InfeasibleMixedConstraint(ConstraintConfigError):
    pass


class Kind(Enum):
    TWO_SIDED = "two_sided"
    LOWER = "lower"
    UPPER = "upper"


# ---------------------------------------------------------------------------
# Measurement selectors


@dataclass(frozen=True)
class PairwiseDistance:
    """g = scale * r^power where r is the distance to one neighbor."""

    neighbor: str
    scale: float = 1.0
    power: int = 1


@dataclass(frozen=True)
class ObstacleDistance:
    """g = distance to the nearest scanned obstacle point."""


@dataclass(frozen=True)
class LinkDistance:
    """g = clearance between scanned obstacle points and the virtual segment
    from this robot to one link partner."""

    partner: str


Selector = Union[PairwiseDistance, ObstacleDistance, LinkDistance]


@dataclass(frozen=True)
class ConstraintSpec:
    kind: Kind
    selector: Selector
    margin: float
    lower: float = -math.inf
    upper: float = math.inf
    label: str = ""

    def __post_init__(self) -> None:
        if self.margin <= 0:
            raise ConstraintConfigError(f"margin must be positive ({self.label})")
        if self.kind is Kind.TWO_SIDED:
            if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
                raise ConstraintConfigError(
                    f"two-sided constraint needs finite bounds ({self.label})"
                )
            if self.margin >= (self.upper - self.lower) / 2.0:
                raise ConstraintConfigError(
                    f"margin {self.margin:.4g} must be < half the bound gap "
                    f"{(self.upper - self.lower) / 2.0:.4g} ({self.label})"
                )
        elif self.kind is Kind.LOWER and not math.isfinite(self.lower):
            raise ConstraintConfigError(f"lower bound required ({self.label})")
        elif self.kind is Kind.UPPER and not math.isfinite(self.upper):
            raise ConstraintConfigError(f"upper bound required ({self.label})")

    @staticmethod
    def equality(
        value: float, margin: float, selector: Selector, label: str = ""
    ) -> "ConstraintSpec":
        """Near-equality constraint: two-sided bounds value +/- 5*margin.

        10*margin is the minimum gap keeping the two ramps well separated;
        tighten the margin to tighten the equality.
        """
        return ConstraintSpec(
            Kind.TWO_SIDED, selector, margin,
            lower=value - 5.0 * margin, upper=value + 5.0 * margin, label=label,
        )


# ---------------------------------------------------------------------------
# Q functions (scalar risk ramps)


def _ramp_lower(u: float, gamma: float) -> float:
    # u = g - bound in [0, gamma]
    return (u - gamma) ** 2 / (u + gamma**2)


def _ramp_lower_deriv(u: float, gamma: float) -> float:
    # dQ/dg on the lower ramp
    return (u - gamma) * (u + 2.0 * gamma**2 + gamma) / (u + gamma**2) ** 2


def _ramp_upper(w: float, gamma: float) -> float:
    # w = bound - g in [0, gamma]
    return (gamma - w) ** 2 / (w + gamma**2)


def _ramp_upper_deriv(w: float, gamma: float) -> float:
    # dQ/dg on the upper ramp (note dw/dg = -1)
    return (gamma - w) * (w + 2.0 * gamma**2 + gamma) / (w + gamma**2) ** 2


def q_lower(g: float, bound: float, gamma: float) -> float:
    """Risk for g >= bound: 1 at the bound, 0 beyond the margin."""
    if g < bound:
        return 1.0
    if g >= bound + gamma:
        return 0.0
    return _ramp_lower(g - bound, gamma)


def q_upper(g: float, bound: float, gamma: float) -> float:
    """Risk for g <= bound: 1 at the bound, 0 below the margin."""
    if g > bound:
        return 1.0
    if g <= bound - gamma:
        return 0.0
    return _ramp_upper(bound - g, gamma)


def q_two_sided(g: float, lower: float, upper: float, gamma: float) -> float:
    """Risk for lower <= g <= upper with symmetric margins."""
    if gamma >= (upper - lower) / 2.0:
        raise ConstraintConfigError("margin must be < half the bound gap")
    if g < lower or g > upper:
        return 1.0
    if g <= lower + gamma:
        return _ramp_lower(g - lower, gamma)
    if g >= upper - gamma:
        return _ramp_upper(upper - g, gamma)
    return 0.0


def _q_and_deriv(spec: ConstraintSpec, g: float) -> tuple[float, float, int]:
    """(Q, dQ/dg, violation) for one spec; violation is -1/0/+1 for a value
    outside the admissible set below/inside/above."""
    m = spec.margin
    if spec.kind is not Kind.UPPER and g < spec.lower:
        return 1.0, 0.0, -1
    if spec.kind is not Kind.LOWER and g > spec.upper:
        return 1.0, 0.0, +1
    if spec.kind is not Kind.UPPER and g <= spec.lower + m:
        u = g - spec.lower
        return _ramp_lower(u, m), _ramp_lower_deriv(u, m), 0
    if spec.kind is not Kind.LOWER and g >= spec.upper - m:
        w = spec.upper - g
        return _ramp_upper(w, m), _ramp_upper_deriv(w, m), 0
    return 0.0, 0.0, 0


# ---------------------------------------------------------------------------
# Mixed (velocity-coupled) constraints


def decouple_mixed(
    f_bound: float, lower: float, upper: float
) -> tuple[Kind, float, float]:
    """Tightened position bounds after bounding the velocity part by f_bound.

    Raises InfeasibleMixedConstraint when the bound swallows the whole band;
    lowering the velocity caps shrinks f_bound.
    """
    if f_bound < 0:
        raise ConstraintConfigError("f_bound must be non-negative")
    if f_bound > (upper - lower) / 2.0:
        raise InfeasibleMixedConstraint(
            f"velocity-part bound {f_bound:.4g} exceeds half the constraint "
            f"band {(upper - lower) / 2.0:.4g}; lower the velocity caps"
        )
    new_lower = lower + f_bound
    new_upper = upper - f_bound
    if math.isfinite(new_lower) and math.isfinite(new_upper):
        return Kind.TWO_SIDED, new_lower, new_upper
    if math.isfinite(new_lower):
        return Kind.LOWER, new_lower, math.inf
    if math.isfinite(new_upper):
        return Kind.UPPER, -math.inf, new_upper
    raise ConstraintConfigError("mixed constraint needs at least one finite bound")


@dataclass(frozen=True)
class MixedForm:
    """One registered velocity-coupled constraint shape.

    raw(v, omega, r) is the original inequality value, checked online against
    the original bounds; f_bound and g envelope define the decoupling given
    the hardware velocity caps.
    """

    name: str
    f_bound: Callable[[float, float], float]
    g_scale: Callable[[float, float], float]
    g_power: int
    raw: Callable[[float, float, float], float]


MIXED_FORMS: dict[str, MixedForm] = {
    # v^2 + |omega| * r : velocity part bounded by v_max^2, the remaining
    # |omega| factor folded into the distance scale conservatively
    "vsq_plus_absw_dist": MixedForm(
        name="vsq_plus_absw_dist",
        f_bound=lambda v_max, w_max: v_max**2,
        g_scale=lambda v_max, w_max: w_max,
        g_power=1,
        raw=lambda v, w, r: v**2 + abs(w) * r,
    ),
    # |omega| + r^2 : velocity part bounded by omega_max
    "absw_plus_distsq": MixedForm(
        name="absw_plus_distsq",
        f_bound=lambda v_max, w_max: w_max,
        g_scale=lambda v_max, w_max: 1.0,
        g_power=2,
        raw=lambda v, w, r: abs(w) + r**2,
    ),
}


def build_mixed_spec(
    form: MixedForm,
    neighbor: str,
    lower: float,
    upper: float,
    margin: float,
    v_max: float,
    omega_max: float,
    label: str = "",
) -> ConstraintSpec:
    """Decouple one mixed constraint into a position-only spec."""
    f_bar = form.f_bound(v_max, omega_max)
    kind, lo, hi = decouple_mixed(f_bar, lower, upper)
    selector = PairwiseDistance(
        neighbor, scale=form.g_scale(v_max, omega_max), power=form.g_power
    )
    return ConstraintSpec(kind, selector, margin, lower=lo, upper=hi,
                          label=label or form.name)


# ---------------------------------------------------------------------------
# Evaluation


@dataclass(frozen=True)
class EvalContext:
    """Everything one follower's constraint set can measure, in its body frame.

    neighbors maps robot id to the relative position of that robot; obstacle
    points come from the lidar scan. heading is the follower's own heading,
    used only to express the output gradient in the world frame.
    """

    heading: float
    neighbors: dict[str, Vector2] = field(default_factory=dict)
    obstacle_points: tuple[Vector2, ...] = ()


def build_context(
    own_pose: Pose2D,
    neighbor_positions: dict[str, Vector2],
    obstacle_world_points: tuple[Vector2, ...] = (),
) -> EvalContext:
    """Build a body-frame context from world-frame state."""
    return EvalContext(
        heading=own_pose.heading,
        neighbors={
            rid: to_frame(own_pose, p) for rid, p in neighbor_positions.items()
        },
        obstacle_points=tuple(
            to_frame(own_pose, p) for p in obstacle_world_points
        ),
    )


@dataclass(frozen=True)
class ConstraintEvaluation:
    q_values: tuple[float, ...]
    g_values: tuple[float, ...]
    beta: float
    psi: float
    tau: Vector2  # gradient of psi w.r.t. own position, world frame
    saturated: bool  # some measurement strayed outside its admissible set


def _measure(spec: ConstraintSpec, ctx: EvalContext) -> tuple[float, Vector2]:
    """(g, gradient of g w.r.t. own position in the body frame)."""
    sel = spec.selector
    if isinstance(sel, PairwiseDistance):
        if sel.neighbor not in ctx.neighbors:
            raise ConstraintConfigError(
                f"constraint {spec.label!r} needs neighbor {sel.neighbor!r}"
            )
        u = ctx.neighbors[sel.neighbor]
        r = u.norm()
        if r == 0.0:
            raise ConstraintConfigError("coincident robots in pairwise measurement")
        g = sel.scale * r**sel.power
        dg_dr = sel.scale * sel.power * r ** (sel.power - 1)
        return g, (-dg_dr / r) * u
    if isinstance(sel, ObstacleDistance):
        if not ctx.obstacle_points:
            return math.inf, Vector2(0.0, 0.0)
        o = min(ctx.obstacle_points, key=lambda q: q.norm())
        r = o.norm()
        if r == 0.0:
            return 0.0, Vector2(0.0, 0.0)
        return r, (-1.0 / r) * o
    if isinstance(sel, LinkDistance):
        return _link_measure(spec, ctx, sel)
    raise ConstraintConfigError(f"unknown selector {sel!r}")


def _link_measure(
    spec: ConstraintSpec, ctx: EvalContext, sel: LinkDistance
) -> tuple[float, Vector2]:
    """Clearance of the own-to-partner segment from scanned obstacle points.

    The argmin point is treated as locally fixed; ties break on the first
    scan index. Inside the perpendicular band the clearance is the
    (absolute) perpendicular distance with its exact gradient; outside, the
    nearer endpoint distance, whose gradient vanishes at the partner end.
    """
    if sel.partner not in ctx.neighbors:
        raise ConstraintConfigError(
            f"constraint {spec.label!r} needs link partner {sel.partner!r}"
        )
    if not ctx.obstacle_points:
        return math.inf, Vector2(0.0, 0.0)
    u = ctx.neighbors[sel.partner]
    un = u.norm()
    if un == 0.0:
        raise ConstraintConfigError("coincident robots in link measurement")

    best_g = math.inf
    best_grad = Vector2(0.0, 0.0)
    for o in ctx.obstacle_points:
        in_band = o.dot(u) > 0.0 and (o - u).dot(u) < 0.0
        if in_band:
            rho = u.cross(o) / un  # signed perpendicular distance
            g = abs(rho)
            if g < best_g:
                s = 1.0 if rho >= 0.0 else -1.0
                grad = (1.0 / un**2) * (un * (o - u).perp() + rho * u)
                best_g, best_grad = g, s * grad
        else:
            d_own = o.norm()
            d_partner = (o - u).norm()
            if d_own <= d_partner:
                if d_own < best_g:
                    best_g = d_own
                    best_grad = (-1.0 / d_own) * o if d_own > 0 else Vector2(0.0, 0.0)
            else:
                if d_partner < best_g:
                    best_g = d_partner
                    best_grad = Vector2(0.0, 0.0)  # moves with the partner, not us
    return best_g, best_grad


def evaluate(
    ctx: EvalContext, specs: list[ConstraintSpec], tau_max: float = 10.0
) -> ConstraintEvaluation:
    """Q values, process classifier beta, risk potential Psi and its gradient.

    The gradient is assembled with prefix/suffix products of the (1 - Q_k)
    factors, so no division occurs and saturated constraints (Q pinned at 1
    outside the admissible set) fall back to a capped push along the
    restoring direction of their measurement.
    """
    n = len(specs)
    qs: list[float] = [0.0] * n
    gs: list[float] = [0.0] * n
    grads: list[Vector2] = [Vector2(0.0, 0.0)] * n
    saturated = False

    for k, spec in enumerate(specs):
        g, dg = _measure(spec, ctx)
        q, dq_dg, violation = _q_and_deriv(spec, g)
        gs[k] = g
        qs[k] = q
        if violation != 0:
            saturated = True
            norm = dg.norm()
            if norm > 0.0:
                # continue the ramp's push direction with capped magnitude:
                # the lower ramp slopes along -grad(g), the upper along +grad(g)
                grads[k] = (float(violation) * tau_max / norm) * dg
        else:
            grads[k] = dq_dg * dg

    beta = max(qs, default=0.0)
    p_factors = [1.0 - q for q in qs]
    prefix = [1.0] * (n + 1)
    for k in range(n):
        prefix[k + 1] = prefix[k] * p_factors[k]
    suffix = [1.0] * (n + 1)
    for k in range(n - 1, -1, -1):
        suffix[k] = suffix[k + 1] * p_factors[k]
    psi = 1.0 - prefix[n]

    tx = ty = 0.0
    for k in range(n):
        w = prefix[k] * suffix[k + 1]  # product of all other (1 - Q) factors
        tx += grads[k].x * w
        ty += grads[k].y * w
    tau_local = Vector2(tx, ty)
    tau_world = tau_local.rotated(ctx.heading)

    return ConstraintEvaluation(
        q_values=tuple(qs), g_values=tuple(gs), beta=beta, psi=psi,
        tau=tau_world, saturated=saturated,
    )


def grad_tau(
    ctx: EvalContext, specs: list[ConstraintSpec], tau_max: float = 10.0
) -> Vector2:
    """Gradient of Psi w.r.t. own position (world frame)."""
    return evaluate(ctx, specs, tau_max=tau_max).tau
