"""Run outputs: trajectory CSV, metrics and manifest files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import tomli_w

from . import __version__
from .consensus import agreement_step
from .dynamics import TrajectoryRecord
from .metrics import MetricsReport, ProtocolMetrics

TRAJECTORY_COLUMNS = ("time_s", "agent_id", "px", "py", "theta_x", "theta_y", "in_danger")

REACHED = "formation_reached"
LOCAL_MINIMUM = "local_minimum"
NOT_CONVERGED = "not_converged"
SAFETY_VIOLATION = "safety_violation"
INVALID_INPUT = "invalid_input"
IO_ERROR = "io_error"

EXIT_CODES = {
    REACHED: 0,
    INVALID_INPUT: 1,
    SAFETY_VIOLATION: 2,
    LOCAL_MINIMUM: 3,
    IO_ERROR: 4,
    NOT_CONVERGED: 5,
}

TRAJECTORY_FILE = "trajectory.csv"
METRICS_FILE = "metrics.toml"
MANIFEST_FILE = "manifest.toml"
PLOT_FILE = "trajectory.svg"


class TrajectoryFormatError(ValueError):
    """A trajectory CSV is empty or malformed."""


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """Trajectory read back from CSV, arrays indexed ``[sample, agent]``."""

    times: np.ndarray
    positions: np.ndarray
    references: np.ndarray
    in_danger: np.ndarray

    @property
    def n(self) -> int:
        return self.positions.shape[1]


def classify_outcome(record: TrajectoryRecord) -> str:
    cfg = record.config
    if record.formation_error() < cfg.formation_tolerance:
        return REACHED
    if record.max_final_speed() < cfg.velocity_tolerance:
        return LOCAL_MINIMUM
    return NOT_CONVERGED


def record_agreement(record: TrajectoryRecord) -> Optional[int]:
    return agreement_step(record.reference_offsets, record.config.agreement_threshold)


def build_report(record: TrajectoryRecord,
                 baseline: Optional[TrajectoryRecord] = None) -> MetricsReport:
    """Metrics for an over-the-air run and, optionally, the exact-mean baseline.

    The baseline run feeds both the node-to-node and the orthogonal-broadcast
    rows, which differ only in how the same exchange is counted.
    """
    cfg = record.config
    report = MetricsReport(
        n=cfg.n,
        outcome=classify_outcome(record),
        formation_error=record.formation_error(),
        min_distance=record.min_distance,
        max_final_speed=record.max_final_speed(),
    )
    k_ota = record_agreement(record)
    report.protocols.append(ProtocolMetrics.from_run("ota", k_ota, cfg.n))
    if baseline is not None:
        k_base = record_agreement(baseline)
        report.protocols.append(ProtocolMetrics.from_run(
            "node_to_node", k_base, cfg.n, baseline.arc_counts.tolist(), cfg.messages_per_arc))
        report.protocols.append(ProtocolMetrics.from_run("orthogonal_broadcast", k_base, cfg.n))
        if k_ota is not None and k_base is not None:
            margin = max(5, math.ceil(0.25 * k_ota))
            verdict = "holds" if k_base <= k_ota + margin else "does not hold"
            report.notes.append(
                f"expected baseline agreement step <= ota step + {margin}: {verdict} "
                f"(baseline {k_base}, ota {k_ota})")
    return report


def write_trajectory(record: TrajectoryRecord, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for s, t in enumerate(record.times):
            for i in range(record.config.n):
                p = record.positions[s, i]
                r = record.references[s, i]
                w.writerow((repr(float(t)), i, repr(float(p[0])), repr(float(p[1])),
                            repr(float(r[0])), repr(float(r[1])),
                            int(bool(record.in_danger[s, i]))))


def read_trajectory(path: Path) -> TrajectoryTable:
    """Parse a trajectory CSV written by :func:`write_trajectory`."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TrajectoryFormatError(f"{path}: file is empty")
    if tuple(rows[0]) != TRAJECTORY_COLUMNS:
        raise TrajectoryFormatError(f"{path}:1: expected header {','.join(TRAJECTORY_COLUMNS)}")
    body = rows[1:]
    if not body:
        raise TrajectoryFormatError(f"{path}: no samples")
    parsed = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(TRAJECTORY_COLUMNS):
            raise TrajectoryFormatError(f"{path}:{lineno}: expected {len(TRAJECTORY_COLUMNS)} "
                                        f"fields, got {len(row)}")
        try:
            t, agent = float(row[0]), int(row[1])
            vals = [float(x) for x in row[2:6]]
            danger = int(row[6])
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
        if danger not in (0, 1) or not all(map(math.isfinite, [t, *vals])):
            raise TrajectoryFormatError(f"{path}:{lineno}: bad value")
        parsed.append((t, agent, *vals, danger))

    n = max(r[1] for r in parsed) + 1
    if len(parsed) % n:
        raise TrajectoryFormatError(f"{path}: row count is not a multiple of {n} agents")
    arr = np.array(parsed, dtype=float).reshape(-1, n, 7)
    if np.any(arr[:, :, 1] != np.arange(n)[None]) or np.any(arr[:, :, 0] != arr[:, :1, 0]):
        raise TrajectoryFormatError(f"{path}: rows must list agents 0..{n - 1} per time sample")
    return TrajectoryTable(
        times=arr[:, 0, 0],
        positions=arr[:, :, 2:4],
        references=arr[:, :, 4:6],
        in_danger=arr[:, :, 6].astype(bool),
    )


def write_toml(data: dict, path: Path) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(data, fh)


def write_weights(record: TrajectoryRecord, path: Path) -> None:
    """Per-round mixing matrices, one row per (round, receiver)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n = record.config.n
        w.writerow(("round", "receiver", *(f"h{j}" for j in range(n))))
        for k, h in enumerate(record.weights):
            for i in range(n):
                w.writerow((k, i, *(repr(float(x)) for x in h[i])))


def manifest(digest: str, seed: int, outcome: str, artifacts: dict[str, str]) -> dict:
    return {
        "config_digest": digest,
        "seed": seed,
        "tool_version": __version__,
        "outcome": outcome,
        "exit_code": EXIT_CODES[outcome],
        "artifacts": dict(artifacts),
    }
