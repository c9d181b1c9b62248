"""Scenario files: schema, loading, validation and constraint-set building.

Scenarios are TOML with SI units and radians throughout (full schema in
docs/scenario.md). Loading is strict: unknown obstacle kinds, malformed
polygons, infeasible payload bands or gain chains are configuration errors.
Validation separates hard errors (the run is rejected) from warnings
(surfaced in the report but not fatal).
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..geometry import Pose2D, Vector2, to_frame
from ..payload import (
    FormationInfeasible,
    PayloadParams,
    ScaleBounds,
    pairwise_distance_bounds,
    scale_bounds,
)
from ..world import Circle, ConvexPolygon, Obstacle, WorldModel, simulate_lidar, RobotState
from ..leader import LeaderParams
from ..follower import CurvilinearOffset, default_buffer_capacity
from ..control import ControlGains, validate_gains
from ..constraints import (
    ConstraintConfigError,
    ConstraintSpec,
    EvalContext,
    Kind,
    LinkDistance,
    MIXED_FORMS,
    ObstacleDistance,
    PairwiseDistance,
    build_mixed_spec,
    evaluate,
)

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Configuration could not be loaded or is invalid."""


@dataclass(frozen=True)
class FollowerConfig:
    id: str
    start: Pose2D
    offset: CurvilinearOffset  # leader-relative (s_d, q_d)
    link_partners: tuple[str, ...]


@dataclass(frozen=True)
class MixedDecl:
    form: str
    lower: float
    upper: float
    margin: float
    targets: str  # "neighbors" or one robot id


@dataclass(frozen=True)
class ConstraintConfig:
    obstacle_safety: float  # d_o
    link_safety: float  # d_l
    robot_separation: float  # rho_c
    margin_pairwise: float
    margin_obstacle: float
    margin_link: float
    tau_max: float
    mixed: tuple[MixedDecl, ...]


@dataclass(frozen=True)
class SimConfig:
    dt: float
    max_steps: int
    seed: int
    goal_tolerance: float
    prefill_virtual_path: bool
    buffer_capacity: int  # 0 = derive from offsets


@dataclass(frozen=True)
class SensorConfig:
    lidar_range: float
    lidar_beams: int
    lidar_noise_std: float
    camera_fov: float
    camera_range: float  # c_max
    camera_deadband: float  # delta_c
    camera_gain: float  # k_c
    camera_range_noise_std: float
    camera_bearing_noise_std: float
    camera_rate_cap: float


@dataclass(frozen=True)
class Scenario:
    name: str
    world: WorldModel
    payload: PayloadParams
    leader_id: str
    leader_start: Pose2D
    leader_params: LeaderParams
    sensors: SensorConfig
    gains: ControlGains
    followers: tuple[FollowerConfig, ...]
    constraints: ConstraintConfig
    sim: SimConfig
    expected_scale_ratios: tuple[float, float] | None = None

    def robot_ids(self) -> list[str]:
        return [self.leader_id] + [f.id for f in self.followers]

    def offsets(self) -> dict[str, CurvilinearOffset]:
        out = {self.leader_id: CurvilinearOffset(0.0, 0.0)}
        for f in self.followers:
            out[f.id] = f.offset
        return out

    def desired_distance(self, i: str, j: str) -> float:
        off = self.offsets()
        ci, cj = off[i], off[j]
        return math.hypot(cj.s_d - ci.s_d, cj.q_d - ci.q_d)

    def buffer_capacity(self) -> int:
        if self.sim.buffer_capacity > 0:
            return self.sim.buffer_capacity
        max_s = max((abs(f.offset.s_d) for f in self.followers), default=1.0)
        # slow segments shrink per-sample arc length; budget for a tenth of cruise
        v_min = max(0.1 * self.leader_params.v_tilde, 1e-3)
        return default_buffer_capacity(max_s, v_min, self.sim.dt)


# ---------------------------------------------------------------------------
# Loading


def _req(table: dict, key: str, where: str):
    if key not in table:
        raise ScenarioError(f"missing key {key!r} in [{where}]")
    return table[key]


def _vec(raw, where: str) -> Vector2:
    if not (isinstance(raw, list) and len(raw) == 2):
        raise ScenarioError(f"expected [x, y] in {where}, got {raw!r}")
    return Vector2(float(raw[0]), float(raw[1]))


def _pose(raw, where: str) -> Pose2D:
    if not (isinstance(raw, list) and len(raw) == 3):
        raise ScenarioError(f"expected [x, y, theta] in {where}, got {raw!r}")
    return Pose2D.from_xytheta(float(raw[0]), float(raw[1]), float(raw[2]))


def _obstacle(raw: dict, idx: int) -> Obstacle:
    where = f"world.obstacles[{idx}]"
    kind = _req(raw, "kind", where)
    try:
        if kind == "circle":
            return Circle(_vec(_req(raw, "center", where), where),
                          float(_req(raw, "radius", where)))
        if kind == "polygon":
            verts = _req(raw, "vertices", where)
            return ConvexPolygon(tuple(_vec(v, where) for v in verts))
    except ValueError as e:
        raise ScenarioError(f"bad obstacle in {where}: {e}") from e
    raise ScenarioError(f"unknown obstacle kind {kind!r} in {where}")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ScenarioError(f"scenario {path} is not valid TOML: {e}") from e
    return parse_scenario(raw, name=path.stem)


def parse_scenario(raw: dict, name: str = "scenario") -> Scenario:
    if raw.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported schema {raw.get('schema')!r}; expected {SCHEMA_VERSION}"
        )

    wt = _req(raw, "world", "root")
    obstacles = tuple(
        _obstacle(o, i) for i, o in enumerate(wt.get("obstacles", []))
    )
    world = WorldModel(obstacles=obstacles, goal=_vec(_req(wt, "goal", "world"), "world.goal"))

    pt = _req(raw, "payload", "root")
    try:
        payload = PayloadParams(
            cable_length=float(_req(pt, "cable_length", "payload")),
            mount_height=float(_req(pt, "mount_height", "payload")),
            payload_height=float(_req(pt, "payload_height", "payload")),
            min_safe_height=float(_req(pt, "min_safe_height", "payload")),
            suspension_radius=float(_req(pt, "suspension_radius", "payload")),
            formation_radius=float(_req(pt, "formation_radius", "payload")),
        )
    except ValueError as e:
        raise ScenarioError(f"bad payload parameters: {e}") from e
    expected = pt.get("expected_scale_ratios")
    expected_ratios = (float(expected[0]), float(expected[1])) if expected else None

    lt = _req(raw, "leader", "root")
    leader_params = LeaderParams(
        v_tilde=float(_req(lt, "cruise_speed", "leader")),
        omega_tilde=float(_req(lt, "turn_rate", "leader")),
        d_t=float(_req(lt, "turn_threshold", "leader")),
        d_o=float(_req(lt, "safety_distance", "leader")),
        delta_T=float(_req(lt, "prediction_horizon", "leader")),
    )
    leader_id = str(lt.get("id", "L"))
    leader_start = _pose(_req(lt, "start", "leader"), "leader.start")

    st = _req(raw, "sensors", "root")
    sensors = SensorConfig(
        lidar_range=float(_req(st, "lidar_range", "sensors")),
        lidar_beams=int(st.get("lidar_beams", 360)),
        lidar_noise_std=float(st.get("lidar_noise_std", 0.0)),
        camera_fov=float(_req(st, "camera_fov", "sensors")),
        camera_range=float(_req(st, "camera_range", "sensors")),
        camera_deadband=float(_req(st, "camera_deadband", "sensors")),
        camera_gain=float(_req(st, "camera_gain", "sensors")),
        camera_range_noise_std=float(st.get("camera_range_noise_std", 0.0)),
        camera_bearing_noise_std=float(st.get("camera_bearing_noise_std", 0.0)),
        camera_rate_cap=float(st.get("camera_rate_cap", math.inf)),
    )

    gt = _req(raw, "gains", "root")
    try:
        gains = ControlGains(
            c1=float(_req(gt, "c1", "gains")),
            c2=float(_req(gt, "c2", "gains")),
            c3=float(_req(gt, "c3", "gains")),
            k_v=float(_req(gt, "k_v", "gains")),
            k_omega=float(_req(gt, "k_omega", "gains")),
            beta_t=float(_req(gt, "beta_t", "gains")),
            v_max=float(_req(gt, "v_max", "gains")),
            omega_max=float(_req(gt, "omega_max", "gains")),
        )
    except ValueError as e:
        raise ScenarioError(f"bad gains: {e}") from e

    fts = raw.get("followers", [])
    if not fts:
        raise ScenarioError("at least one [[followers]] entry required")
    followers = []
    seen = {leader_id}
    for i, ft in enumerate(fts):
        fid = str(_req(ft, "id", f"followers[{i}]"))
        if fid in seen:
            raise ScenarioError(f"duplicate robot id {fid!r}")
        seen.add(fid)
        off = _req(ft, "offset", f"followers[{i}]")
        followers.append(
            FollowerConfig(
                id=fid,
                start=_pose(_req(ft, "start", f"followers[{i}]"), f"followers[{i}].start"),
                offset=CurvilinearOffset(float(off[0]), float(off[1])),
                link_partners=tuple(str(p) for p in ft.get("link_partners", [])),
            )
        )
    all_ids = seen
    for f in followers:
        for p in f.link_partners:
            if p not in all_ids:
                raise ScenarioError(f"follower {f.id}: unknown link partner {p!r}")

    ct = _req(raw, "constraints", "root")
    mixed = tuple(
        MixedDecl(
            form=str(_req(m, "form", f"constraints.mixed[{i}]")),
            lower=float(m.get("lower", -math.inf)),
            upper=float(m.get("upper", math.inf)),
            margin=float(_req(m, "margin", f"constraints.mixed[{i}]")),
            targets=str(m.get("targets", "neighbors")),
        )
        for i, m in enumerate(ct.get("mixed", []))
    )
    for m in mixed:
        if m.form not in MIXED_FORMS:
            raise ScenarioError(
                f"unknown mixed constraint form {m.form!r}; "
                f"known: {sorted(MIXED_FORMS)}"
            )
    constraints = ConstraintConfig(
        obstacle_safety=float(_req(ct, "obstacle_safety", "constraints")),
        link_safety=float(_req(ct, "link_safety", "constraints")),
        robot_separation=float(_req(ct, "robot_separation", "constraints")),
        margin_pairwise=float(_req(ct, "margin_pairwise", "constraints")),
        margin_obstacle=float(_req(ct, "margin_obstacle", "constraints")),
        margin_link=float(_req(ct, "margin_link", "constraints")),
        tau_max=float(ct.get("tau_max", 10.0)),
        mixed=mixed,
    )

    smt = _req(raw, "sim", "root")
    sim = SimConfig(
        dt=float(smt.get("dt", 0.02)),
        max_steps=int(_req(smt, "max_steps", "sim")),
        seed=int(smt.get("seed", 0)),
        goal_tolerance=float(smt.get("goal_tolerance", 0.3)),
        prefill_virtual_path=bool(smt.get("prefill_virtual_path", True)),
        buffer_capacity=int(smt.get("buffer_capacity", 0)),
    )
    if sim.dt <= 0:
        raise ScenarioError("sim.dt must be positive")
    if sim.max_steps < 0:
        raise ScenarioError("sim.max_steps must be >= 0")

    return Scenario(
        name=name, world=world, payload=payload,
        leader_id=leader_id, leader_start=leader_start,
        leader_params=leader_params, sensors=sensors, gains=gains,
        followers=tuple(followers), constraints=constraints, sim=sim,
        expected_scale_ratios=expected_ratios,
    )


# ---------------------------------------------------------------------------
# Constraint sets and bound tables


def build_constraint_sets(sc: Scenario) -> dict[str, list[ConstraintSpec]]:
    """One immutable constraint list per follower.

    Per neighbor: a two-sided distance band merging the formation scale band
    with the collision floor and camera ceiling; one obstacle clearance floor;
    one link clearance floor per link partner; plus every declared mixed
    constraint, decoupled.
    """
    sb = scale_bounds(sc.payload)
    cc = sc.constraints
    sets: dict[str, list[ConstraintSpec]] = {}
    for f in sc.followers:
        specs: list[ConstraintSpec] = []
        for j in sc.robot_ids():
            if j == f.id:
                continue
            lo, hi = pairwise_bounds_for(sc, sb, f.id, j)
            specs.append(
                ConstraintSpec(
                    Kind.TWO_SIDED, PairwiseDistance(j), cc.margin_pairwise,
                    lower=lo, upper=hi, label=f"dist[{f.id},{j}]",
                )
            )
        specs.append(
            ConstraintSpec(
                Kind.LOWER, ObstacleDistance(), cc.margin_obstacle,
                lower=cc.obstacle_safety, label=f"obstacle[{f.id}]",
            )
        )
        for p in f.link_partners:
            specs.append(
                ConstraintSpec(
                    Kind.LOWER, LinkDistance(p), cc.margin_link,
                    lower=cc.link_safety, label=f"link[{f.id},{p}]",
                )
            )
        for m in cc.mixed:
            targets = (
                [j for j in sc.robot_ids() if j != f.id]
                if m.targets == "neighbors" else [m.targets]
            )
            for j in targets:
                specs.append(
                    build_mixed_spec(
                        MIXED_FORMS[m.form], j, m.lower, m.upper, m.margin,
                        sc.gains.v_max, sc.gains.omega_max,
                        label=f"{m.form}[{f.id},{j}]",
                    )
                )
        sets[f.id] = specs
    return sets


def pairwise_bounds_for(
    sc: Scenario, sb: ScaleBounds, i: str, j: str
) -> tuple[float, float]:
    return pairwise_distance_bounds(
        sb, sc.desired_distance(i, j),
        sc.constraints.robot_separation, sc.sensors.camera_range,
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def text(self) -> str:
        lines = []
        for e in self.errors:
            lines.append(f"ERROR   {e}")
        for w in self.warnings:
            lines.append(f"WARNING {w}")
        for n in self.notes:
            lines.append(f"note    {n}")
        lines.append("result  " + ("OK" if self.ok else "INVALID"))
        return "\n".join(lines)


def validate_scenario(sc: Scenario) -> ValidationReport:
    """Static feasibility checks plus the initial-risk gate.

    Hard errors: infeasible payload band, empty pairwise distance bands,
    invalid margins, gain-chain violations, initial beta above the process
    threshold. Warnings: leader parameter chain (sufficient-condition only)
    and mismatches between formula-derived scale ratios and the ratios the
    scenario author expected.
    """
    rep = ValidationReport()

    try:
        sb = scale_bounds(sc.payload)
        rep.notes.append(
            f"scale ratios from payload geometry: r- = {sb.r_minus:.6g}, "
            f"r+ = {sb.r_plus:.6g} (R_min = {sb.R_min:.6g})"
        )
    except FormationInfeasible as e:
        rep.errors.append(f"payload: {e}")
        return rep

    if sc.expected_scale_ratios is not None:
        exp_minus, exp_plus = sc.expected_scale_ratios
        for got, exp, tag in ((sb.r_minus, exp_minus, "r-"), (sb.r_plus, exp_plus, "r+")):
            if abs(got - exp) > 0.01:
                rep.warnings.append(
                    f"scale ratio {tag}: formula gives {got:.4g} but the "
                    f"scenario expects {exp:.4g}; using the formula value"
                )

    try:
        sets = build_constraint_sets(sc)
    except (FormationInfeasible, ConstraintConfigError) as e:
        rep.errors.append(f"constraints: {e}")
        return rep
    for fid, specs in sets.items():
        rep.notes.append(f"{fid}: {len(specs)} constraints registered")

    offsets = [f.offset for f in sc.followers]
    for v in validate_gains(sc.gains, sc.leader_params, offsets):
        rep.errors.append(f"gains: {v}")

    for v in sc.leader_params.chain_violations(
        sc.sensors.lidar_range, sc.payload.formation_radius
    ):
        rep.warnings.append(f"leader parameter chain: {v}")

    beta0 = initial_betas(sc, sets)
    for fid, beta in beta0.items():
        if beta > sc.gains.beta_t:
            rep.errors.append(
                f"initial risk gate: beta({fid}) = {beta:.4g} exceeds "
                f"beta_t = {sc.gains.beta_t:.4g} at the start poses"
            )
        else:
            rep.notes.append(f"initial beta({fid}) = {beta:.4g}")
    return rep


def initial_betas(
    sc: Scenario, sets: dict[str, list[ConstraintSpec]]
) -> dict[str, float]:
    poses = {sc.leader_id: sc.leader_start}
    for f in sc.followers:
        poses[f.id] = f.start
    out = {}
    for f in sc.followers:
        state = RobotState(pose=f.start, id=f.id, role="follower")
        scan = simulate_lidar(
            state, sc.world, sc.sensors.lidar_range, sc.sensors.lidar_beams
        )
        ctx = EvalContext(
            heading=f.start.heading,
            neighbors={
                j: to_frame(f.start, poses[j].position)
                for j in sc.robot_ids() if j != f.id
            },
            obstacle_points=scan.points,
        )
        out[f.id] = evaluate(ctx, sets[f.id], tau_max=sc.constraints.tau_max).beta
    return out
