"""Reference policies and planners: scripted oracles, a null policy, and
file-backed replay variants for offline evaluation."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .geometry import quat_conjugate, quat_from_yaw, quat_multiply, quat_normalize
from .manip import (
    EePose,
    fsm_step,
    initial_fsm_state,
    pick_phases,
    place_phases,
)
from .nav import ControllerParams, ControllerState, controller_step, theta_star
from .plan import Plan
from .sim import DT, EE_HOME_OFFSET, ActionTuple, Observation, SimState, TaskSpec
from .world import Pose2D, Scene


def _offset_action(base: Pose2D, ee: EePose, v: float, w: float, g: float) -> ActionTuple:
    """ActionTuple whose ee command equals the given world pose."""
    c, s = math.cos(base.theta), math.sin(base.theta)
    dx, dy = ee.position[0] - base.x, ee.position[1] - base.y
    local_q = quat_normalize(
        quat_multiply(quat_conjugate(quat_from_yaw(base.theta)), ee.orientation)
    )
    return ActionTuple(
        v, w,
        c * dx + s * dy, -s * dx + c * dy, float(ee.position[2]),
        float(local_q[0]), float(local_q[1]), float(local_q[2]), float(local_q[3]),
        g,
    )


class NullPolicy:
    """Always commands zero velocities and holds the current ee pose."""

    def begin_task(self, task: TaskSpec, state: SimState, scene: Scene) -> None:
        pass

    def act(self, obs: Observation) -> ActionTuple:
        return _offset_action(obs.base, obs.ee, 0.0, 0.0, obs.gripper)


class OraclePolicy:
    """Scripted expert: Theta* plus the waypoint controller for move
    tasks, the 10-phase blended state machine for pick and place."""

    def __init__(self, params: ControllerParams = ControllerParams()):
        self.params = params
        self._mode: Optional[str] = None
        self._path = None
        self._ctrl: Optional[ControllerState] = None
        self._fsm = None
        self._phases = None
        self._frames = None
        self._t = 0.0
        self._hold_g = 1.0

    def begin_task(self, task: TaskSpec, state: SimState, scene: Scene) -> None:
        self._mode = task.kind
        self._hold_g = state.gripper
        if task.kind == "move":
            grid = scene.inflated_grid()
            self._path = theta_star(
                grid,
                (state.base.x, state.base.y),
                tuple(task.target_position[:2]),
                final_heading=task.final_heading,
            )
            self._ctrl = ControllerState()
            return
        obj = next(
            (o for o in state.objects if o.id == task.target or o.kind == task.target),
            None,
        )
        if obj is None:
            raise ValueError(f"task object {task.target!r} not in scene")
        home_world = EePose(
            np.array([
                state.base.x
                + math.cos(state.base.theta) * EE_HOME_OFFSET[0]
                - math.sin(state.base.theta) * EE_HOME_OFFSET[1],
                state.base.y
                + math.sin(state.base.theta) * EE_HOME_OFFSET[0]
                + math.cos(state.base.theta) * EE_HOME_OFFSET[1],
                EE_HOME_OFFSET[2],
            ]),
            quat_from_yaw(state.base.theta),
        )
        if task.kind == "pick":
            self._phases = pick_phases(obj.grasp_offset)
            self._frames = {
                "object": EePose(np.asarray(obj.position, dtype=float), np.array([1.0, 0, 0, 0])),
                "home": home_world,
            }
        else:
            # Place: the goal frame sits at the object's target position.
            self._phases = place_phases(obj.grasp_offset)
            self._frames = {
                "goal": EePose(np.asarray(task.target_position, dtype=float), np.array([1.0, 0, 0, 0])),
                "home": home_world,
            }
        self._fsm = initial_fsm_state(state.ee, 0.0, start_gripper=state.gripper)
        self._t = 0.0

    def act(self, obs: Observation) -> ActionTuple:
        if self._mode == "move":
            cmd, self._ctrl, _ = controller_step(
                self._ctrl, obs.base, self._path, self.params, DT
            )
            return _offset_action(obs.base, obs.ee, cmd.v, cmd.w, self._hold_g)
        self._t += DT
        ref, g, self._fsm = fsm_step(self._fsm, self._phases, self._frames, self._t)
        return _offset_action(obs.base, ref, 0.0, 0.0, g)


class ReplayPolicy:
    """Replays logged actions tick-for-tick; holds once the log runs out."""

    def __init__(self, actions_by_task: dict[int, list[ActionTuple]]):
        self.actions_by_task = actions_by_task
        self._queue: list[ActionTuple] = []
        self._task_index = -1

    def begin_task(self, task: TaskSpec, state: SimState, scene: Scene) -> None:
        self._task_index += 1
        self._queue = list(self.actions_by_task.get(self._task_index, []))

    def act(self, obs: Observation) -> ActionTuple:
        if self._queue:
            return self._queue.pop(0)
        return _offset_action(obs.base, obs.ee, 0.0, 0.0, obs.gripper)


class OraclePlanner:
    """Returns the ground-truth plan (isolates execution from planning)."""

    def predict(self, instruction: str, scene_description: str, gt_plan: Plan) -> Plan:
        return gt_plan


class FilePlanner:
    """Serves predictions from a JSON Lines file of {id, plan} records."""

    def __init__(self, path):
        from .plan import read_plans_jsonl

        self.predictions = read_plans_jsonl(path)
        self._episode_id: Optional[str] = None

    def set_episode(self, episode_id: str) -> None:
        self._episode_id = episode_id

    def predict(self, instruction: str, scene_description: str, gt_plan: Plan) -> Plan:
        return self.predictions.get(self._episode_id, Plan(()))
