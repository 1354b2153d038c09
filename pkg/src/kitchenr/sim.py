"""Deterministic kinematic environment: unicycle base, tracked
end-effector, grasp attachment, and per-step success evaluation behind a
Gym-style reset/step interface."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import quat_angle, quat_from_yaw, quat_multiply, quat_nlerp, quat_normalize, wrap_angle
from .manip import EePose, grasp_check
from .world import EpisodeConfig, ObjectState, Pose2D, Scene, validate_config

DT = 0.1
TIME_LIMIT = 120.0
MOVE_SUCCESS_RADIUS = 0.10
MANIP_SUCCESS_RADIUS = 0.05

# Home end-effector offset in the base frame (x forward, z up).
EE_HOME_OFFSET = (0.35, 0.0, 0.85)


@dataclass(frozen=True)
class ActionTuple:
    """The 10-value control point exchanged between policy and simulator:
    base velocities, end-effector offset + quaternion, gripper opening."""

    v: float
    w: float
    x: float
    y: float
    z: float
    qw: float
    qx: float
    qy: float
    qz: float
    g: float

    def __post_init__(self):
        vals = (self.v, self.w, self.x, self.y, self.z,
                self.qw, self.qx, self.qy, self.qz, self.g)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("action contains non-finite values")
        qn = math.sqrt(self.qw**2 + self.qx**2 + self.qy**2 + self.qz**2)
        if abs(qn - 1.0) > 1e-6:
            raise ValueError("action quaternion must be unit-norm")
        if not (0.0 <= self.g <= 1.0):
            raise ValueError("gripper command must be in [0, 1]")

    def as_vector(self) -> np.ndarray:
        return np.array([self.v, self.w, self.x, self.y, self.z,
                         self.qw, self.qx, self.qy, self.qz, self.g])

    @property
    def quat(self) -> np.ndarray:
        return np.array([self.qw, self.qx, self.qy, self.qz])


def hold_action(state: "SimState") -> ActionTuple:
    """The action that leaves the state unchanged for one tick."""
    off, quat = _ee_offset_in_base(state)
    return ActionTuple(0.0, 0.0, off[0], off[1], off[2],
                       quat[0], quat[1], quat[2], quat[3], state.gripper)


@dataclass(frozen=True)
class SimLimits:
    max_v: float = 0.18
    max_w: float = 0.7
    ee_max_lin_speed: float = 0.5
    ee_max_ang_speed: float = 2.0
    grasp_threshold: float = 0.06


@dataclass(frozen=True)
class SimState:
    base: Pose2D
    ee: EePose  # world frame
    gripper: float
    objects: tuple[ObjectState, ...]
    attached_object: Optional[str]
    attach_delta: Optional[tuple[float, float, float]]
    tick: int

    @property
    def clock(self) -> float:
        return self.tick * DT

    def object_by_id(self, oid: str) -> ObjectState:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)


@dataclass(frozen=True)
class TaskSpec:
    kind: str  # move | pick | place
    target: str  # zone or object name
    target_position: tuple[float, ...]
    final_heading: float = 0.0
    time_limit: float = TIME_LIMIT
    success_radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("move", "pick", "place"):
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.success_radius is None:
            r = MOVE_SUCCESS_RADIUS if self.kind == "move" else MANIP_SUCCESS_RADIUS
            object.__setattr__(self, "success_radius", r)


@dataclass(frozen=True)
class Observation:
    task_text: str
    base: Pose2D
    ee: EePose
    gripper: float
    relative_state: np.ndarray  # 10 values in the previous-state base frame
    objects: tuple[ObjectState, ...]


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    task_done: bool
    events: tuple[str, ...]


def _ee_offset_in_base(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """End-effector pose expressed in the base frame."""
    c, s = math.cos(state.base.theta), math.sin(state.base.theta)
    dx = state.ee.position[0] - state.base.x
    dy = state.ee.position[1] - state.base.y
    off = np.array([c * dx + s * dy, -s * dx + c * dy, state.ee.position[2]])
    base_q = quat_from_yaw(state.base.theta)
    # q_world = q_base * q_local  =>  q_local = conj(q_base) * q_world
    from .geometry import quat_conjugate

    local_q = quat_normalize(quat_multiply(quat_conjugate(base_q), state.ee.orientation))
    return off, local_q


def _ee_world_target(base: Pose2D, action: ActionTuple) -> EePose:
    c, s = math.cos(base.theta), math.sin(base.theta)
    wx = base.x + c * action.x - s * action.y
    wy = base.y + s * action.x + c * action.y
    quat = quat_normalize(quat_multiply(quat_from_yaw(base.theta), action.quat))
    return EePose(np.array([wx, wy, action.z]), quat)


def make_observation(state: SimState, prev: SimState | None, task_text: str) -> Observation:
    ref = prev if prev is not None else state
    c, s = math.cos(ref.base.theta), math.sin(ref.base.theta)
    dx, dy = state.base.x - ref.base.x, state.base.y - ref.base.y
    off, local_q = _ee_offset_in_base(state)
    # Same 10-value layout as ActionTuple, expressed in the previous
    # state's base frame: realized base velocities, ee offset, ee
    # quaternion, gripper.
    rel = np.array([
        (c * dx + s * dy) / DT,
        wrap_angle(state.base.theta - ref.base.theta) / DT,
        off[0], off[1], off[2],
        local_q[0], local_q[1], local_q[2], local_q[3],
        state.gripper,
    ])
    return Observation(task_text, state.base, state.ee, state.gripper, rel, state.objects)


def reset(config: EpisodeConfig, scene: Scene) -> SimState:
    """Initial simulator state for an episode configuration."""
    report = validate_config(config, scene)
    if not report.ok:
        raise ValueError("invalid episode config: " + "; ".join(report.violations))
    base = config.robot_start
    off = EE_HOME_OFFSET
    ee = _ee_world_target(base, ActionTuple(0, 0, off[0], off[1], off[2], 1, 0, 0, 0, 1.0))
    return SimState(
        base=base,
        ee=ee,
        gripper=1.0,
        objects=(config.object,),
        attached_object=None,
        attach_delta=None,
        tick=0,
    )


def step(
    state: SimState,
    action: ActionTuple,
    scene: Scene,
    limits: SimLimits = SimLimits(),
) -> tuple[SimState, tuple[str, ...]]:
    """Advance the world by one tick of DT seconds.

    The base integrates the unicycle model with clamped velocities; the
    end-effector tracks the commanded base-frame pose under linear and
    angular rate caps; the gripper triggers attachment when it crosses
    below 0.5 near an object and release when it crosses above 0.5.
    """
    events: list[str] = []
    v = max(-limits.max_v, min(limits.max_v, action.v))
    w = max(-limits.max_w, min(limits.max_w, action.w))
    base = Pose2D(
        state.base.x + v * math.cos(state.base.theta) * DT,
        state.base.y + v * math.sin(state.base.theta) * DT,
        wrap_angle(state.base.theta + w * DT),
    )

    target = _ee_world_target(base, action)
    delta = target.position - state.ee.position
    dist = float(np.linalg.norm(delta))
    max_step = limits.ee_max_lin_speed * DT
    if dist > max_step:
        new_pos = state.ee.position + delta * (max_step / dist)
    else:
        new_pos = target.position
    ang = quat_angle(state.ee.orientation, target.orientation)
    max_ang = limits.ee_max_ang_speed * DT
    if ang > max_ang:
        new_quat = quat_nlerp(state.ee.orientation, target.orientation, max_ang / ang)
    else:
        new_quat = target.orientation
    ee = EePose(new_pos, new_quat)

    prev_g = state.gripper
    g = action.g
    attached = state.attached_object
    attach_delta = state.attach_delta
    objects = list(state.objects)

    if prev_g >= 0.5 > g and attached is None:
        # Closing: attach the nearest object within the grasp threshold.
        best = None
        for i, o in enumerate(objects):
            d = math.dist(tuple(ee.position), o.position)
            if grasp_check(ee.position, o.position, limits.grasp_threshold) and (
                best is None or d < best[0]
            ):
                best = (d, i)
        if best is not None:
            i = best[1]
            o = objects[i]
            attached = o.id
            attach_delta = tuple(np.array(o.position) - ee.position)
            objects[i] = replace(o, attached=True)
            events.append("grasp")
    elif prev_g < 0.5 <= g and attached is not None:
        # Opening: release; the object settles on the zone beneath it.
        idx = next(i for i, o in enumerate(objects) if o.id == attached)
        o = objects[idx]
        zone = _zone_below(scene, o.position[0], o.position[1])
        if zone is not None:
            pos = (o.position[0], o.position[1], zone.support_height)
            events.append("release")
        else:
            pos = (o.position[0], o.position[1], 0.0)
            events.append("release")
            events.append("drop")
        objects[idx] = replace(o, position=pos, attached=False)
        attached = None
        attach_delta = None

    if attached is not None and attach_delta is not None:
        idx = next(i for i, o in enumerate(objects) if o.id == attached)
        o = objects[idx]
        objects[idx] = replace(o, position=tuple(ee.position + np.array(attach_delta)))

    new = SimState(
        base=base,
        ee=ee,
        gripper=g,
        objects=tuple(objects),
        attached_object=attached,
        attach_delta=attach_delta,
        tick=state.tick + 1,
    )
    return new, tuple(events)


def _zone_below(scene: Scene, x: float, y: float):
    best = None
    for z in scene.zones.values():
        d = math.dist((x, y), (z.center.x, z.center.y))
        if d <= max(z.radius, 0.35) and (best is None or d < best[0]):
            best = (d, z)
    return best[1] if best is not None else None


def check_success(state: SimState, task: TaskSpec) -> bool:
    """Per-step success predicate.

    Move: planar base-center distance to the target within the radius.
    Pick/place: 3D object-center distance to its target within the
    radius. Both comparisons are closed.
    """
    if task.kind == "move":
        d = math.dist((state.base.x, state.base.y), tuple(task.target_position[:2]))
        return d <= task.success_radius
    obj = next((o for o in state.objects if o.id == task.target or o.kind == task.target), None)
    if obj is None:
        return False
    d = math.dist(obj.position, tuple(task.target_position))
    return d <= task.success_radius


@dataclass(frozen=True)
class TaskResult:
    success: bool
    duration: float
    abort_reason: Optional[str]
    ticks: int


class PolicyFault(Exception):
    """A policy raised during action generation."""


def run_task(
    state: SimState,
    task: TaskSpec,
    policy,
    scene: Scene,
    monitor=None,
    limits: SimLimits = SimLimits(),
    on_record: Callable | None = None,
) -> tuple[SimState, TaskResult]:
    """Execute one decomposed task under a policy until success, monitor
    abort, or the task time limit.

    The policy's ``act(observation)`` may return a single action or a
    sequence of up to 16 actions consumed one per tick; its inference
    time never advances the simulation clock. ``on_record`` receives
    (tick_in_task, state, action, events) for trajectory logging.
    """
    if hasattr(policy, "begin_task"):
        policy.begin_task(task, state, scene)

    if check_success(state, task):
        return state, TaskResult(True, 0.0, None, 0)

    ticks = 0
    prev = state
    queue: list[ActionTuple] = []
    while True:
        if ticks * DT >= task.time_limit:
            return state, TaskResult(False, task.time_limit, "timeout", ticks)
        if not queue:
            obs = make_observation(state, prev, task_text=f"{task.kind} {task.target}")
            try:
                out = policy.act(obs)
            except Exception as exc:  # noqa: BLE001 - surfaced as a task fault
                return state, TaskResult(False, ticks * DT, f"policy_fault: {exc}", ticks)
            if isinstance(out, ActionTuple):
                queue = [out]
            else:
                queue = list(out)[:16]
                if not queue:
                    queue = [hold_action(state)]
        action = queue.pop(0)
        prev = state
        state, events = step(state, action, scene, limits)
        ticks += 1
        if on_record is not None:
            on_record(ticks, state, action, events)
        if monitor is not None:
            verdict = monitor(state, task, events, ticks * DT)
            if verdict is not None:
                return state, TaskResult(False, ticks * DT, verdict, ticks)
        if check_success(state, task):
            return state, TaskResult(True, ticks * DT, None, ticks)


class Environment:
    """Gym-style wrapper: reset(config) -> observation;
    step(action) -> (observation, done, events)."""

    def __init__(self, scene: Scene, limits: SimLimits = SimLimits()):
        self.scene = scene
        self.limits = limits
        self.state: SimState | None = None
        self._prev: SimState | None = None
        self.task: TaskSpec | None = None

    def reset(self, config: EpisodeConfig, task: TaskSpec | None = None) -> Observation:
        self.state = reset(config, self.scene)
        self._prev = None
        self.task = task
        return make_observation(self.state, None, task.kind if task else "")

    def set_task(self, task: TaskSpec) -> None:
        self.task = task

    def step(self, action: ActionTuple) -> tuple[Observation, bool, tuple[str, ...]]:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        self._prev = self.state
        self.state, events = step(self.state, action, self.scene, self.limits)
        done = bool(self.task and check_success(self.state, self.task))
        obs = make_observation(self.state, self._prev, self.task.kind if self.task else "")
        return obs, done, events
