"""Telemetry records and CSV serialization.

The main telemetry stream is fully deterministic (one record per step per
robot, 9 significant digits, UNIX line endings); controller wall times are
written to a separate file because they are not reproducible across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


TELEMETRY_COLUMNS = [
    "t", "id", "role", "x", "y", "theta", "v", "omega",
    "beta", "psi", "mode", "x_e", "y_e", "theta_e",
    "rho_io", "rho_il", "pair_min", "pair_max", "camera_angle",
]

TIMING_COLUMNS = ["step", "id", "phase", "micros"]


@dataclass
class TelemetryRecord:
    t: float
    id: str
    role: str
    x: float
    y: float
    theta: float
    v: float
    omega: float
    beta: Optional[float] = None
    psi: Optional[float] = None
    mode: str = ""
    x_e: Optional[float] = None
    y_e: Optional[float] = None
    theta_e: Optional[float] = None
    rho_io: Optional[float] = None
    rho_il: Optional[float] = None
    pair_min: Optional[float] = None
    pair_max: Optional[float] = None
    camera_angle: Optional[float] = None

    def row(self) -> list[str]:
        return [
            _fmt(self.t), self.id, self.role,
            _fmt(self.x), _fmt(self.y), _fmt(self.theta),
            _fmt(self.v), _fmt(self.omega),
            _fmt(self.beta), _fmt(self.psi), self.mode,
            _fmt(self.x_e), _fmt(self.y_e), _fmt(self.theta_e),
            _fmt(self.rho_io), _fmt(self.rho_il),
            _fmt(self.pair_min), _fmt(self.pair_max),
            _fmt(self.camera_angle),
        ]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "%.9g" % x
    return str(x)


def write_telemetry(records: list[TelemetryRecord], path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        for rec in records:
            w.writerow(rec.row())


def write_timings(rows: list[tuple[int, str, str, float]], path: Path) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for step, rid, phase, micros in rows:
            w.writerow([step, rid, phase, "%.3f" % micros])


# Per-figure bundles: column subsets of the main stream, one file per family.
PLOT_BUNDLES = {
    "errors": ["t", "id", "x_e", "y_e", "theta_e"],
    "distances": ["t", "id", "rho_io", "rho_il", "pair_min", "pair_max"],
    "velocities": ["t", "id", "role", "v", "omega", "beta", "psi", "mode"],
    "camera": ["t", "id", "camera_angle"],
}


def emit_plot_bundles(records: list[TelemetryRecord], out_dir: Path) -> list[Path]:
    """Write one CSV per figure family; follower-only families skip leaders."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, cols in PLOT_BUNDLES.items():
        path = out_dir / f"{name}.csv"
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for rec in records:
                if name in ("errors", "distances", "camera") and rec.role != "follower":
                    continue
                full = dict(zip(TELEMETRY_COLUMNS, rec.row()))
                w.writerow([full[c] for c in cols])
        written.append(path)
    return written
