"""Benchmark protocol: metric aggregation, the monitoring module, and the
online-validation runner."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .logio import RunManifest, TrajectoryRecord, hash_payload, write_trajectory
from .manip import PICK_LIFT_HEIGHT, grasp_check
from .plan import Plan, exact_match
from .sim import (
    DT,
    SimLimits,
    SimState,
    TaskSpec,
    check_success,
    reset,
    run_task,
)
from .world import EpisodeConfig, Pose2D, Scene

ENGINE_VERSION = "0.1.0"


class DegenerateMetric(ValueError):
    """A metric is undefined for the given inputs (e.g. 1/EM at EM=0)."""


# ---------------------------------------------------------------------------
# Metrics


def mse_trajectory(pred: np.ndarray, expert: np.ndarray) -> tuple[float, int]:
    """Mean squared error over the common prefix of two trajectories.

    Both arguments are (T, 10) arrays. The mean runs over
    min(T_pred, T_expert) timesteps and all 10 dimensions; a length
    mismatch is reported as the second return value (number of
    unmatched timesteps), not an error.
    """
    pred = np.asarray(pred, dtype=float)
    expert = np.asarray(expert, dtype=float)
    if pred.size == 0 or expert.size == 0:
        raise ValueError("trajectories must be non-empty")
    pred = np.atleast_2d(pred)
    expert = np.atleast_2d(expert)
    if pred.shape[1] != expert.shape[1]:
        raise ValueError("trajectory dimensionality mismatch")
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(expert))):
        raise ValueError("trajectories must be finite")
    n = min(pred.shape[0], expert.shape[0])
    mismatch = abs(pred.shape[0] - expert.shape[0])
    return float(np.mean((pred[:n] - expert[:n]) ** 2)), mismatch


def composite_p(em: float, per_instruction_mse: Sequence[Sequence[float]]) -> float:
    """Composite planning+control metric: 1/EM plus the double mean of
    the per-task MSE values. Lower is better."""
    if em == 0:
        raise DegenerateMetric("P is undefined at EM = 0")
    if not (0 < em <= 1):
        raise ValueError("EM must be in (0, 1]")
    total = 0.0
    n = len(per_instruction_mse)
    if n == 0:
        raise ValueError("need at least one instruction")
    for mses in per_instruction_mse:
        if len(mses) > 0:
            total += sum(mses) / len(mses)
    return 1.0 / em + total / n


@dataclass(frozen=True)
class TaskRecord:
    kind: str
    em: int  # per-step match indicator for this task's plan step
    sr: int
    duration: float
    abort_reason: Optional[str] = None

    def __post_init__(self):
        if self.em not in (0, 1) or self.sr not in (0, 1):
            raise ValueError("EM_j and SR_j are binary")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")


@dataclass(frozen=True)
class EpisodeResult:
    instruction_id: str
    tasks: tuple[TaskRecord, ...]
    plan_accuracy: float
    mse_values: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("episode must contain at least one task")


def composite_m(results: Sequence[EpisodeResult]) -> float:
    """Final online metric: mean over instructions of the per-task mean of
    EM_j + SR_j. Bounded by [0, 2]."""
    if not results:
        raise ValueError("empty result set")
    total = 0.0
    for r in results:
        n_i = len(r.tasks)
        total += sum(t.em + t.sr for t in r.tasks) / n_i
    return total / len(results)


@dataclass(frozen=True)
class MetricsReport:
    n: int
    em: float
    mean_mse: float
    p: Optional[float]  # None when degenerate (EM = 0)
    m: float
    sr: float
    episodes: tuple[EpisodeResult, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "em": self.em,
                "mean_mse": self.mean_mse,
                "p": self.p,
                "m": self.m,
                "sr": self.sr,
                "episodes": [
                    {
                        "id": ep.instruction_id,
                        "plan_accuracy": ep.plan_accuracy,
                        "mse": list(ep.mse_values),
                        "tasks": [
                            {
                                "kind": t.kind,
                                "em_j": t.em,
                                "sr_j": t.sr,
                                "duration": t.duration,
                                "abort_reason": t.abort_reason,
                            }
                            for t in ep.tasks
                        ],
                    }
                    for ep in self.episodes
                ],
            },
            indent=2,
        )


def aggregate(results: Sequence[EpisodeResult]) -> MetricsReport:
    results = tuple(sorted(results, key=lambda r: r.instruction_id))
    if not results:
        raise ValueError("no episodes to aggregate")
    em = sum(r.plan_accuracy for r in results) / len(results)
    all_mse = [v for r in results for v in r.mse_values]
    mean_mse = sum(all_mse) / len(all_mse) if all_mse else 0.0
    try:
        p = composite_p(em, [list(r.mse_values) for r in results])
    except DegenerateMetric:
        p = None
    m = composite_m(results)
    all_tasks = [t for r in results for t in r.tasks]
    sr = sum(t.sr for t in all_tasks) / len(all_tasks)
    return MetricsReport(len(results), em, mean_mse, p, m, sr, results)


# ---------------------------------------------------------------------------
# Monitoring


@dataclass(frozen=True)
class MonitorConfig:
    move_timeout: float = 60.0
    pick_timeout: float = 30.0
    place_timeout: float = 30.0
    pick_proximity_threshold: float = 0.05
    place_distance_threshold: float = 0.05
    move_radius: float = 0.10
    min_log_rate: float = 5.0
    drop_floor_z: float = 0.05

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def timeout_for(self, kind: str) -> float:
        return {"move": self.move_timeout, "pick": self.pick_timeout,
                "place": self.place_timeout}[kind]


def monitor_step(
    config: MonitorConfig,
    state: SimState,
    task: TaskSpec,
    events: Sequence[str],
    elapsed_in_task: float,
    log_rate: float,
) -> Optional[str]:
    """One monitoring check; returns an abort reason or None to continue."""
    if elapsed_in_task > config.timeout_for(task.kind):
        return "timeout"
    if log_rate < config.min_log_rate:
        return "low_log_rate"
    for o in state.objects:
        if not o.attached and o.position[2] < config.drop_floor_z:
            return "object_dropped"
    if task.kind == "pick" and state.attached_object is not None:
        obj = state.object_by_id(state.attached_object)
        if not grasp_check(state.ee.position, obj.position, config.pick_proximity_threshold + 0.05):
            return "grasp_lost"
    if task.kind == "place" and "release" in events:
        obj = next(
            (o for o in state.objects if o.id == task.target or o.kind == task.target), None
        )
        if obj is not None:
            d = math.dist(obj.position, tuple(task.target_position))
            if d > config.place_distance_threshold:
                return "place_miss"
    if task.kind == "move" and "move_complete" in events:
        d = math.dist((state.base.x, state.base.y), tuple(task.target_position[:2]))
        if d > config.move_radius:
            return "move_miss"
    return None


# ---------------------------------------------------------------------------
# Task construction from plan steps


def tasks_from_plan(plan: Plan, config: EpisodeConfig, scene: Scene) -> list[TaskSpec]:
    """Translate canonical plan steps into executable task specs."""
    tasks = []
    for step in plan.steps:
        verb, arg = step.verb, step.argument
        if verb == "move to":
            zone_name = _zone_from_argument(arg, scene)
            z = scene.zones[zone_name]
            tasks.append(
                TaskSpec(
                    kind="move",
                    target=zone_name,
                    target_position=(z.approach_pose.x, z.approach_pose.y),
                    final_heading=z.approach_pose.theta,
                )
            )
        elif verb == "pick":
            kind = arg.removeprefix("the ").strip()
            tasks.append(
                TaskSpec(kind="pick", target=kind, target_position=(0.0, 0.0, 0.0))
            )
        else:  # place
            kind = arg.removeprefix("the ").strip()
            tasks.append(
                TaskSpec(kind="place", target=kind, target_position=(0.0, 0.0, 0.0))
            )
    return tasks


def _zone_from_argument(arg: str, scene: Scene) -> str:
    text = arg.removeprefix("the ").removesuffix(" zone").strip()
    if text not in scene.zones:
        raise KeyError(f"unknown zone in plan argument {arg!r}")
    return text


def _bind_manip_targets(tasks: list[TaskSpec], config: EpisodeConfig, state: SimState,
                        scene: Scene, task_index: int) -> TaskSpec:
    """Resolve a pick/place target position from the live object pose."""
    t = tasks[task_index]
    if t.kind == "pick":
        obj = next(o for o in state.objects if o.kind == t.target or o.id == t.target)
        pos = (obj.position[0], obj.position[1], obj.position[2] + PICK_LIFT_HEIGHT)
        return replace(t, target_position=pos)
    if t.kind == "place":
        # Place into the zone of the most recent preceding move step, at
        # the episode's sampled goal position when the zones agree.
        zone_name = None
        for j in range(task_index - 1, -1, -1):
            if tasks[j].kind == "move":
                zone_name = tasks[j].target
                break
        if zone_name == config.goal_zone or zone_name is None:
            return replace(t, target_position=tuple(config.object_goal_position))
        z = scene.zones[zone_name]
        return replace(t, target_position=(z.center.x, z.center.y, z.support_height))
    return t


def _nominal_post_state(state: SimState, task: TaskSpec, scene: Scene) -> SimState:
    """State the episode would be in had the task succeeded; used by
    teleport-on-failure so later tasks stay scoreable."""
    if task.kind == "move":
        base = Pose2D(task.target_position[0], task.target_position[1], task.final_heading)
        return replace(state, base=base)
    if task.kind == "pick":
        idx = next(i for i, o in enumerate(state.objects)
                   if o.kind == task.target or o.id == task.target)
        obj = state.objects[idx]
        objs = list(state.objects)
        objs[idx] = replace(obj, position=tuple(task.target_position), attached=True)
        from .manip import EePose as _EePose

        go = obj.grasp_offset
        ee = _EePose(np.asarray(task.target_position, dtype=float) + np.asarray(go), state.ee.orientation)
        return replace(
            state, objects=tuple(objs), attached_object=obj.id,
            attach_delta=tuple(-np.asarray(go, dtype=float)), ee=ee, gripper=0.0,
        )
    idx = next(i for i, o in enumerate(state.objects)
               if o.kind == task.target or o.id == task.target)
    objs = list(state.objects)
    objs[idx] = replace(objs[idx], position=tuple(task.target_position), attached=False)
    return replace(state, objects=tuple(objs), attached_object=None,
                   attach_delta=None, gripper=1.0)


# ---------------------------------------------------------------------------
# Benchmark runner


@dataclass(frozen=True)
class BenchmarkOptions:
    teleport_on_failure: bool = True
    max_plan_actions: Optional[int] = None
    log_dir: Optional[str] = None
    monitor: MonitorConfig = MonitorConfig()
    limits: SimLimits = SimLimits()


def run_episode(
    episode_id: str,
    config: EpisodeConfig,
    scene: Scene,
    planner,
    policy,
    opts: BenchmarkOptions = BenchmarkOptions(),
) -> tuple[EpisodeResult, list[TrajectoryRecord]]:
    """Score the planner and execute the ground-truth plan for one episode."""
    if hasattr(planner, "set_episode"):
        planner.set_episode(episode_id)
    try:
        predicted = planner.predict(config.instruction, scene.description, config.gt_plan)
    except Exception:  # noqa: BLE001 - planner faults score zero, never crash
        predicted = Plan(())
    accuracy, indicators = exact_match(predicted, config.gt_plan)

    tasks = tasks_from_plan(config.gt_plan, config, scene)
    state = reset(config, scene)
    records: list[TrajectoryRecord] = []
    task_records: list[TaskRecord] = []
    blocked = False
    tick_base = 0

    limit = len(tasks) if opts.max_plan_actions is None else min(opts.max_plan_actions, len(tasks))
    for j, _ in enumerate(tasks):
        if j >= limit or blocked:
            task_records.append(
                TaskRecord(tasks[j].kind, indicators[j], 0, 0.0, "not_executed")
            )
            continue
        task = _bind_manip_targets(tasks, config, state, scene, j)

        def on_record(tick_in_task, st, action, events, _j=j, _base=tick_base):
            records.append(
                TrajectoryRecord(
                    tick=_base + tick_in_task,
                    sim_time=(_base + tick_in_task) * DT,
                    task_index=_j,
                    action=action,
                    base=(st.base.x, st.base.y, st.base.theta),
                    ee=(float(st.ee.position[0]), float(st.ee.position[1]),
                        float(st.ee.position[2]), float(st.ee.orientation[0]),
                        float(st.ee.orientation[1]), float(st.ee.orientation[2]),
                        float(st.ee.orientation[3])),
                    gripper=st.gripper,
                    object_poses={o.id: tuple(o.position) for o in st.objects},
                    events=tuple(events),
                )
            )

        def monitor(st, tk, events, elapsed):
            return monitor_step(opts.monitor, st, tk, events, elapsed, log_rate=1.0 / DT)

        state, result = run_task(
            state, task, policy, scene, monitor=monitor, limits=opts.limits,
            on_record=on_record,
        )
        tick_base += result.ticks
        task_records.append(
            TaskRecord(task.kind, indicators[j], int(result.success),
                       result.duration, result.abort_reason)
        )
        if not result.success:
            if opts.teleport_on_failure:
                state = _nominal_post_state(state, task, scene)
            else:
                blocked = True

    return (
        EpisodeResult(episode_id, tuple(task_records), accuracy),
        records,
    )


def run_benchmark(
    configs: dict[str, EpisodeConfig],
    scene: Scene,
    planner,
    policy_factory,
    opts: BenchmarkOptions = BenchmarkOptions(),
) -> MetricsReport:
    """Run every episode, aggregate the metric suite, and (optionally)
    write per-episode trajectory logs plus a run manifest.

    ``policy_factory`` is called once per episode so policies start from
    clean state; aggregation is a deterministic reduce over sorted
    episode ids.
    """
    results = []
    counts = {}
    for episode_id in sorted(configs):
        config = configs[episode_id]
        policy = policy_factory()
        result, records = run_episode(episode_id, config, scene, planner, policy, opts)
        results.append(result)
        if opts.log_dir is not None:
            os.makedirs(opts.log_dir, exist_ok=True)
            path = os.path.join(opts.log_dir, f"{episode_id}.jsonl")
            write_trajectory(path, records)
            counts[f"{episode_id}.jsonl"] = len(records)
    report = aggregate(results)
    if opts.log_dir is not None:
        payload = json.dumps(
            {eid: configs[eid].seed for eid in sorted(configs)}, sort_keys=True
        ).encode()
        manifest = RunManifest(
            config_hash=hash_payload(payload),
            seed=min(c.seed for c in configs.values()),
            engine_version=ENGINE_VERSION,
            dt=DT,
            episode_ids=tuple(sorted(configs)),
            record_counts=counts,
        )
        with open(os.path.join(opts.log_dir, "manifest.json"), "w") as f:
            f.write(manifest.to_json() + "\n")
    return report
