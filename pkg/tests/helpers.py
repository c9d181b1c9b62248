"""Shared test utilities: random smooth constraint configurations."""

import math

from cotransport.geometry import Pose2D, Vector2
from cotransport.constraints import (
    ConstraintSpec,
    Kind,
    LinkDistance,
    MIXED_FORMS,
    ObstacleDistance,
    PairwiseDistance,
    build_context,
    build_mixed_spec,
    evaluate,
)


def psi_at(position, heading, neighbors, points, specs):
    ctx = build_context(Pose2D(position, heading), neighbors, points)
    return evaluate(ctx, specs).psi


def random_constraint_config(rng, min_beta=0.0):
    """Random multi-constraint configuration, or None when not smooth enough.

    Configurations within 1e-3 of any ramp junction, argmin tie or band edge
    are rejected so central differences and single-step descent act on a
    smooth patch; geometry follows the standing assumption of one convex
    obstacle cluster with free space around it.
    """
    own = Pose2D(Vector2(*rng.uniform(-0.5, 0.5, 2)), float(rng.uniform(-3, 3)))
    neighbors = {
        "a": own.position + Vector2(*rng.uniform(-2.2, 2.2, 2)),
        "b": own.position + Vector2(*rng.uniform(-2.2, 2.2, 2)),
    }
    if any((p - own.position).norm() < 0.3 for p in neighbors.values()):
        return None
    # one obstacle cluster near the a-link
    anchor = own.position + 0.5 * (neighbors["a"] - own.position)
    side = Vector2(*rng.uniform(-1.2, 1.2, 2))
    if side.norm() < 0.3:
        return None
    points = tuple(
        anchor + side + Vector2(*rng.uniform(-0.15, 0.15, 2)) for _ in range(12)
    )
    specs = [
        ConstraintSpec(Kind.TWO_SIDED, PairwiseDistance("a"), 0.4,
                       lower=0.4, upper=2.8, label="pair-a"),
        ConstraintSpec(Kind.LOWER, PairwiseDistance("b"), 0.5, lower=0.4,
                       label="pair-b"),
        ConstraintSpec(Kind.LOWER, ObstacleDistance(), 0.8, lower=0.2,
                       label="obstacle"),
        ConstraintSpec(Kind.LOWER, LinkDistance("a"), 0.8, lower=0.15,
                       label="link-a"),
        build_mixed_spec(MIXED_FORMS["absw_plus_distsq"], "b", -math.inf, 9.0,
                         0.5, 1.8, 1.8),
    ]
    ctx = build_context(own, neighbors, points)
    ev = evaluate(ctx, specs)
    for spec, g in zip(specs, ev.g_values):
        if not math.isfinite(g):
            continue
        for edge in (spec.lower, spec.upper,
                     spec.lower + spec.margin, spec.upper - spec.margin):
            if math.isfinite(edge) and abs(g - edge) < 1e-3:
                return None
    dists = sorted(p.norm() for p in ctx.obstacle_points)
    if len(dists) >= 2 and dists[1] - dists[0] < 1e-3:
        return None
    u = ctx.neighbors["a"]
    clear = sorted(
        abs(u.cross(o)) / u.norm() if (o.dot(u) > 0 and (o - u).dot(u) < 0)
        else min(o.norm(), (o - u).norm())
        for o in ctx.obstacle_points
    )
    if len(clear) >= 2 and clear[1] - clear[0] < 1e-3:
        return None
    if ev.beta <= min_beta or ev.saturated:
        return None
    return own, neighbors, points, specs
