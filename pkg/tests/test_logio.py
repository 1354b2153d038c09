import json
import math

import numpy as np
import pytest

from kitchenr.eval import EpisodeResult, TaskRecord, aggregate
from kitchenr.logio import (
    CorruptLog,
    RunManifest,
    TrajectoryRecord,
    emit_report,
    hash_payload,
    log_rate,
    read_trajectory,
    write_trajectory,
)
from kitchenr.sim import DT, ActionTuple


def make_records(n, rng=None, start_tick=1):
    rng = rng or np.random.default_rng(0)
    records = []
    for i in range(n):
        tick = start_tick + i
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        vals = rng.uniform(-0.15, 0.15, size=5)
        action = ActionTuple(*vals, *q, float(rng.uniform(0, 1)))
        records.append(
            TrajectoryRecord(
                tick=tick,
                sim_time=tick * DT,
                task_index=i % 4,
                action=action,
                base=tuple(rng.uniform(0, 8, 3)),
                ee=tuple(rng.uniform(-1, 1, 3)) + tuple(q),
                gripper=float(rng.uniform(0, 1)),
                object_poses={"cup_0": tuple(rng.uniform(0, 5, 3))},
                events=("grasp",) if i == 7 else (),
            )
        )
    return records


class TestTrajectoryRoundTrip:
    def test_thousand_records_numerically_exact(self, tmp_path):
        records = make_records(1000)
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, records)
        back = read_trajectory(path)
        assert back == records  # dataclass equality covers every float

    def test_empty_trajectory(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_trajectory(path, [])
        assert read_trajectory(path) == []

    def test_record_schema_keys(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, make_records(1))
        doc = json.loads(path.read_text().splitlines()[0])
        assert list(doc) == ["tick", "t", "task", "a", "base", "ee", "g", "obj", "ev"]
        assert len(doc["a"]) == 10
        assert len(doc["ee"]) == 7

    def test_footer_present(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, make_records(3))
        last = json.loads(path.read_text().splitlines()[-1])
        assert last == {"footer": {"count": 3}}

    def test_sim_time_consistency_enforced(self):
        with pytest.raises(ValueError):
            TrajectoryRecord(
                tick=5, sim_time=0.4, task_index=0,
                action=ActionTuple(0, 0, 0, 0, 0, 1, 0, 0, 0, 1),
                base=(0, 0, 0), ee=(0, 0, 0, 1, 0, 0, 0), gripper=1.0,
                object_poses={},
            )


class TestCorruption:
    def test_missing_footer(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, make_records(5))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(CorruptLog, match="footer"):
            read_trajectory(path)

    def test_truncated_body(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, make_records(5))
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:3] + lines[-1:]) + "\n")
        with pytest.raises(CorruptLog, match="count"):
            read_trajectory(path)

    def test_shuffled_ticks(self, tmp_path):
        path = tmp_path / "traj.jsonl"
        write_trajectory(path, make_records(5))
        lines = path.read_text().splitlines()
        lines[0], lines[2] = lines[2], lines[0]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorruptLog, match="monotonicity"):
            read_trajectory(path)

    def test_writer_rejects_non_monotone_input(self, tmp_path):
        records = make_records(3)
        with pytest.raises(ValueError):
            write_trajectory(tmp_path / "x.jsonl", records + [records[0]])


class TestLogRate:
    def test_ten_hz(self):
        assert log_rate(make_records(101)) == pytest.approx(101 / 10.0)

    def test_short_logs_are_infinite(self):
        assert log_rate([]) == math.inf
        assert log_rate(make_records(1)) == math.inf


class TestManifestAndHash:
    def test_hash_is_stable_sha256(self):
        assert hash_payload(b"abc") == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_manifest_json_fields(self):
        m = RunManifest("deadbeef", 7, "0.1.0", DT, ("ep_0000",), {"ep_0000.jsonl": 12})
        doc = json.loads(m.to_json())
        assert doc["config_hash"] == "deadbeef"
        assert doc["dt"] == DT
        assert doc["episodes"] == ["ep_0000"]
        assert doc["record_counts"] == {"ep_0000.jsonl": 12}


def small_report():
    return aggregate([
        EpisodeResult("ep_0", (
            TaskRecord("move", 1, 1, 12.5),
            TaskRecord("pick", 1, 0, 30.0, "timeout"),
        ), 1.0, (0.01,)),
        EpisodeResult("ep_1", (TaskRecord("move", 0, 1, 8.0),), 0.0),
    ])


class TestEmitReport:
    def test_files_written(self, tmp_path):
        paths = emit_report(small_report(), tmp_path)
        names = [p.split("/")[-1] for p in paths]
        assert names == ["report.json", "tasks.csv", "summary.txt"]

    def test_tasks_csv_rows(self, tmp_path):
        emit_report(small_report(), tmp_path)
        lines = (tmp_path / "tasks.csv").read_text().splitlines()
        assert lines[0] == "episode_id,task_index,kind,em_j,sr_j,duration,abort_reason"
        assert lines[1] == "ep_0,0,move,1,1,12.5,"
        assert lines[2] == "ep_0,1,pick,1,0,30.0,timeout"
        assert len(lines) == 4

    def test_summary_lines(self, tmp_path):
        emit_report(small_report(), tmp_path)
        text = (tmp_path / "summary.txt").read_text()
        assert "instructions: 2" in text
        assert "EM: 0.500000" in text

    def test_degenerate_p_text(self, tmp_path):
        rep = aggregate([EpisodeResult("e", (TaskRecord("move", 0, 0, 1.0),), 0.0)])
        emit_report(rep, tmp_path)
        assert "P: undefined (EM=0)" in (tmp_path / "summary.txt").read_text()

    def test_reemission_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        emit_report(small_report(), a)
        emit_report(small_report(), b)
        for name in ("report.json", "tasks.csv", "summary.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
