"""Timing benchmarks for the complexity claims.

Two claims are measured at desk scale: the tracking pipeline (constraint
evaluation + gradient + blend) scales linearly with the number of
constraints, and the trajectory-generation steps of leader and followers are
flat in the robot count. Wall times exclude all telemetry I/O.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..geometry import Pose2D, RelativePoseMeasurement, Vector2
from ..world import ScanResult
from ..leader import LeaderParams, leader_step
from ..follower import (
    CurvilinearOffset,
    LeaderSample,
    TrajectoryBuffer,
    reference_target,
)
from ..constraints import (
    ConstraintSpec,
    EvalContext,
    Kind,
    LinkDistance,
    ObstacleDistance,
    PairwiseDistance,
    evaluate,
)
from ..control import ControlGains, TrackingErrors, blend, preservation_control, tracking_control

DEFAULT_CONSTRAINT_COUNTS = (4, 8, 16, 32, 64)
DEFAULT_ROBOT_COUNTS = (2, 4, 8, 16)


@dataclass
class BenchRow:
    group: str  # "tracking" | "generation"
    config: str  # e.g. "n=8" or "robots=4"
    mean_us: float
    std_us: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    tracking_means: dict[int, float] = field(default_factory=dict)
    generation_means: dict[int, float] = field(default_factory=dict)
    leader_means: dict[int, float] = field(default_factory=dict)

    def tracking_fit(self) -> tuple[float, float, float]:
        """(slope us/constraint, intercept us, R^2) over constraint counts."""
        ns = sorted(self.tracking_means)
        xs = np.array(ns, dtype=float)
        ys = np.array([self.tracking_means[n] for n in ns])
        slope, intercept = np.polyfit(xs, ys, 1)
        pred = slope * xs + intercept
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return float(slope), float(intercept), r2

    def doubling_ratios(self) -> list[float]:
        ns = sorted(self.tracking_means)
        return [
            self.tracking_means[b] / self.tracking_means[a]
            for a, b in zip(ns, ns[1:]) if b == 2 * a
        ]

    def generation_spread(self) -> float:
        """(max - min) / min of per-call generation time across robot counts."""
        vals = list(self.generation_means.values())
        return (max(vals) - min(vals)) / min(vals)

    def text(self) -> str:
        lines = ["group,config,mean_us,std_us"]
        for r in self.rows:
            lines.append(f"{r.group},{r.config},{r.mean_us:.3f},{r.std_us:.3f}")
        slope, intercept, r2 = self.tracking_fit()
        lines.append("")
        lines.append(
            f"tracking linear fit: {slope:.3f} us/constraint + {intercept:.3f} us, "
            f"R^2 = {r2:.4f}"
        )
        ratios = ", ".join(f"{r:.2f}" for r in self.doubling_ratios())
        lines.append(f"tracking doubling ratios: {ratios}")
        lines.append(
            f"generation spread across robot counts: "
            f"{100.0 * self.generation_spread():.1f}%"
        )
        return "\n".join(lines)

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("group,config,mean_us,std_us\n")
            for r in self.rows:
                fh.write(f"{r.group},{r.config},{r.mean_us:.3f},{r.std_us:.3f}\n")


def _time_call(fn: Callable[[], object], repetitions: int, inner: int) -> tuple[float, float]:
    """Mean and std of the per-call time in microseconds.

    Each repetition times `inner` consecutive calls and contributes one
    per-call sample, mirroring repeated measurements of a running controller.
    """
    fn()  # warm up
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter_ns() - t0) / 1e3 / inner)
    return statistics.mean(samples), statistics.pstdev(samples)


def _synthetic_context(n_points: int = 30) -> EvalContext:
    """Fixed follower surroundings: four neighbors and an obstacle arc."""
    neighbors = {
        "a": Vector2(1.6, 0.4),
        "b": Vector2(-0.3, 1.5),
        "c": Vector2(-1.4, -0.9),
        "d": Vector2(0.8, -1.2),
    }
    pts = tuple(
        Vector2(2.0 + 0.8 * math.cos(a), -1.5 + 0.8 * math.sin(a))
        for a in np.linspace(2.0, 3.6, n_points)
    )
    return EvalContext(heading=0.3, neighbors=neighbors, obstacle_points=pts)


def _synthetic_specs(n: int) -> list[ConstraintSpec]:
    """n constraints cycling through all selector kinds, several active."""
    ids = ["a", "b", "c", "d"]
    specs: list[ConstraintSpec] = []
    for k in range(n):
        which = k % 3
        nid = ids[k % 4]
        if which == 0:
            specs.append(
                ConstraintSpec(
                    Kind.TWO_SIDED, PairwiseDistance(nid), 0.5,
                    lower=0.6, upper=2.4, label=f"pair{k}",
                )
            )
        elif which == 1:
            specs.append(
                ConstraintSpec(
                    Kind.LOWER, ObstacleDistance(), 0.8, lower=0.5,
                    label=f"obs{k}",
                )
            )
        else:
            specs.append(
                ConstraintSpec(
                    Kind.LOWER, LinkDistance(nid), 0.8, lower=0.4,
                    label=f"link{k}",
                )
            )
    return specs


def _bench_gains() -> ControlGains:
    return ControlGains(c1=0.4, c2=0.7, c3=0.4, k_v=0.2, k_omega=0.2,
                        beta_t=0.5, v_max=1.8, omega_max=1.8)


def bench_tracking(
    n_constraints: int, repetitions: int, inner: int = 200
) -> tuple[float, float]:
    """Per-call time of the full tracking pipeline for one follower."""
    ctx = _synthetic_context()
    specs = _synthetic_specs(n_constraints)
    gains = _bench_gains()
    err = TrackingErrors(0.12, -0.07, 0.05)

    def call():
        ev = evaluate(ctx, specs)
        n = tracking_control(err, 0.5, 0.1, gains)
        o = preservation_control(ev.tau, ctx.heading, gains)
        blend(n, o, ev.beta, gains.beta_t)

    return _time_call(call, repetitions, inner)


def _circle_buffer(n_samples: int, dt: float = 0.02) -> TrajectoryBuffer:
    buf = TrajectoryBuffer(n_samples + 1)
    v, w = 0.5, 0.25
    for k in range(n_samples):
        t = k * dt
        th = w * t
        buf.append(
            LeaderSample(
                Pose2D(Vector2(v / w * math.sin(th), v / w * (1 - math.cos(th))), th),
                v, w, t,
            )
        )
    return buf


def bench_generation(
    n_robots: int, repetitions: int, inner: int = 200
) -> tuple[tuple[float, float], tuple[float, float]]:
    """((leader mean, std), (per-follower mean, std)) per-call times.

    The follower count is n_robots - 1; per-robot generation cost must not
    depend on it, which is exactly what the measurement demonstrates.
    """
    rng = np.random.default_rng(42)
    pts = tuple(
        Vector2(float(x), float(y))
        for x, y in rng.uniform(-8.0, 8.0, size=(120, 2))
        if math.hypot(x, y) > 1.0
    )
    scan = ScanResult(points=pts, max_range=10.0)
    pose = Pose2D(Vector2(0.0, 0.0), 0.0)
    goal = Vector2(25.0, 25.0)
    lp = LeaderParams(v_tilde=0.5, omega_tilde=0.4, d_t=2.0, d_o=0.5, delta_T=1.0)

    leader_stats = _time_call(lambda: leader_step(scan, pose, goal, lp), repetitions, inner)

    buf = _circle_buffer(400)
    followers = [
        (CurvilinearOffset(-1.0 - 0.1 * (k % 5), 0.5 * ((-1) ** k)),
         RelativePoseMeasurement(Vector2(1.0, 0.2 * k % 3), 0.1))
        for k in range(n_robots - 1)
    ]

    def gen_all():
        for off, meas in followers:
            reference_target(buf, off, meas)

    mean_all, std_all = _time_call(gen_all, repetitions, max(1, inner // max(1, n_robots - 1)))
    n_f = max(1, n_robots - 1)
    return leader_stats, (mean_all / n_f, std_all / n_f)


def run_bench(
    n_constraints_list: tuple[int, ...] = DEFAULT_CONSTRAINT_COUNTS,
    robot_counts: tuple[int, ...] = DEFAULT_ROBOT_COUNTS,
    repetitions: int = 10,
) -> BenchReport:
    if repetitions < 10:
        raise ValueError("repetitions must be >= 10")
    report = BenchReport()
    for n in n_constraints_list:
        mean, std = bench_tracking(n, repetitions)
        report.tracking_means[n] = mean
        report.rows.append(BenchRow("tracking", f"n={n}", mean, std))
    for r in robot_counts:
        (lm, ls), (fm, fs) = bench_generation(r, repetitions)
        report.leader_means[r] = lm
        report.generation_means[r] = fm
        report.rows.append(BenchRow("leader-generation", f"robots={r}", lm, ls))
        report.rows.append(BenchRow("generation", f"robots={r}", fm, fs))
    return report
