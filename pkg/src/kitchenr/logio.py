"""Trajectory and report I/O.

Trajectories are JSON Lines with a fixed field order per record and a
footer line carrying the record count, which makes truncation detectable
without checksums. Floats go through Python's shortest round-trip repr,
so a write/read cycle is numerically exact for 64-bit values.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

from .sim import DT, ActionTuple


class CorruptLog(Exception):
    """Trajectory file failed an integrity check."""


@dataclass(frozen=True)
class TrajectoryRecord:
    tick: int
    sim_time: float
    task_index: int
    action: ActionTuple
    base: tuple[float, float, float]
    ee: tuple[float, float, float, float, float, float, float]
    gripper: float
    object_poses: dict[str, tuple[float, float, float]]
    events: tuple[str, ...] = ()

    def __post_init__(self):
        if abs(self.sim_time - self.tick * DT) > 1e-9:
            raise ValueError(
                f"sim_time {self.sim_time} inconsistent with tick {self.tick} at dt={DT}"
            )


def _record_to_json(r: TrajectoryRecord) -> str:
    doc = {
        "tick": r.tick,
        "t": r.sim_time,
        "task": r.task_index,
        "a": list(r.action.as_vector()),
        "base": list(r.base),
        "ee": list(r.ee),
        "g": r.gripper,
        "obj": {k: list(v) for k, v in sorted(r.object_poses.items())},
        "ev": list(r.events),
    }
    return json.dumps(doc)


def write_trajectory(path, records: list[TrajectoryRecord]) -> None:
    """Write records as JSON Lines plus an integrity footer."""
    last = -1
    for r in records:
        if r.tick <= last:
            raise ValueError("ticks must be strictly increasing")
        last = r.tick
    with open(path, "w") as f:
        for r in records:
            f.write(_record_to_json(r) + "\n")
        f.write(json.dumps({"footer": {"count": len(records)}}) + "\n")


def read_trajectory(path) -> list[TrajectoryRecord]:
    """Read and validate a trajectory file written by write_trajectory."""
    records: list[TrajectoryRecord] = []
    footer_count: Optional[int] = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "footer" in doc:
                footer_count = int(doc["footer"]["count"])
                continue
            a = doc["a"]
            rec = TrajectoryRecord(
                tick=int(doc["tick"]),
                sim_time=float(doc["t"]),
                task_index=int(doc["task"]),
                action=ActionTuple(*a),
                base=tuple(doc["base"]),
                ee=tuple(doc["ee"]),
                gripper=float(doc["g"]),
                object_poses={k: tuple(v) for k, v in doc["obj"].items()},
                events=tuple(doc["ev"]),
            )
            records.append(rec)
    if footer_count is None:
        raise CorruptLog(f"{path}: missing footer")
    if footer_count != len(records):
        raise CorruptLog(f"{path}: footer count {footer_count} != {len(records)} records")
    for a, b in zip(records, records[1:]):
        if b.tick <= a.tick:
            raise CorruptLog(f"{path}: tick monotonicity violated at tick {b.tick}")
    return records


def log_rate(records: list[TrajectoryRecord]) -> float:
    """Record count divided by spanned simulation time."""
    if len(records) < 2:
        return math.inf
    span = records[-1].sim_time - records[0].sim_time
    if span <= 0:
        return math.inf
    return len(records) / span


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    engine_version: str
    dt: float
    episode_ids: tuple[str, ...]
    record_counts: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "seed": self.seed,
                "engine_version": self.engine_version,
                "dt": self.dt,
                "episodes": list(self.episode_ids),
                "record_counts": dict(sorted(self.record_counts.items())),
            },
            indent=2,
        )


def hash_payload(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def emit_report(report, out_dir) -> list[str]:
    """Write report.json, tasks.csv, and summary.txt for a MetricsReport.

    Returns the written paths. Re-emitting the same report produces
    byte-identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    json_path = os.path.join(out_dir, "report.json")
    with open(json_path, "w") as f:
        f.write(report.to_json() + "\n")
    paths.append(json_path)

    csv_path = os.path.join(out_dir, "tasks.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["episode_id", "task_index", "kind", "em_j", "sr_j", "duration", "abort_reason"]
    )
    for ep in report.episodes:
        for j, task in enumerate(ep.tasks):
            writer.writerow(
                [ep.instruction_id, j, task.kind, task.em, task.sr,
                 repr(task.duration), task.abort_reason or ""]
            )
    with open(csv_path, "w") as f:
        f.write(buf.getvalue())
    paths.append(csv_path)

    summary_path = os.path.join(out_dir, "summary.txt")
    p_text = "undefined (EM=0)" if report.p is None else f"{report.p:.6f}"
    lines = [
        f"instructions: {report.n}",
        f"EM: {report.em:.6f}",
        f"mean MSE: {report.mean_mse:.6f}",
        f"P: {p_text}",
        f"M: {report.m:.6f}",
        f"SR: {report.sr:.6f}",
    ]
    with open(summary_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    paths.append(summary_path)
    return paths
