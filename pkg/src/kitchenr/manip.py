"""Manipulation math: cosine-blended Cartesian interpolation, the
10-phase pick-and-place state machine, numeric task-map Jacobians, and
the canonical motion-policy resolve."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .geometry import quat_multiply, quat_nlerp, quat_normalize, quat_rotate

PHASE_NAMES = (
    "approach_lateral",
    "approach_pre_grasp",
    "descend",
    "close_gripper",
    "lift",
    "transport",
    "descend_place",
    "open_gripper",
    "retract",
    "depart",
)

# Height the object is raised to at the end of the pick half-cycle; shared
# with the task builder so the pick success target matches the lift target.
PICK_LIFT_HEIGHT = 0.20


@dataclass(frozen=True)
class EePose:
    position: np.ndarray  # (3,)
    orientation: np.ndarray  # (4,) unit quaternion (w, x, y, z)

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit quaternion")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @staticmethod
    def from_xyz(x: float, y: float, z: float, quat=(1.0, 0.0, 0.0, 0.0)) -> "EePose":
        return EePose(np.array([x, y, z]), np.asarray(quat, dtype=float))

    def compose(self, local: "EePose") -> "EePose":
        """This pose as a frame, applied to a local offset pose."""
        return EePose(
            self.position + quat_rotate(self.orientation, local.position),
            quat_normalize(quat_multiply(self.orientation, local.orientation)),
        )


@dataclass(frozen=True)
class FsmPhase:
    index: int
    name: str
    duration: float
    frame: str  # named scene object or zone the target is expressed in
    target: EePose  # in the local frame
    gripper_target: float

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("phase duration must be positive")
        if not (0.0 <= self.gripper_target <= 1.0):
            raise ValueError("gripper target must be in [0, 1]")


@dataclass(frozen=True)
class FsmState:
    phase_index: int  # 1-based; len(phases)+1 means done
    phase_start_time: float
    start_pose: EePose
    start_gripper: float = 1.0

    def done(self, phases: Sequence[FsmPhase]) -> bool:
        return self.phase_index > len(phases)


class TargetFrameError(KeyError):
    """A phase references a frame absent from the world poses."""


def cosine_blend(tau: float) -> float:
    """Raised-cosine interpolation weight (1 - cos(pi*tau)) / 2.

    Zero slope at both endpoints, so blended trajectories start and end
    with zero velocity.
    """
    if not (0.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return (1.0 - math.cos(math.pi * tau)) / 2.0


def interpolate_pose(p0: EePose, p1: EePose, tau: float) -> EePose:
    """Cosine-blended Cartesian pose interpolation.

    Position blends componentwise with the raised-cosine weight; the
    orientation uses sign-corrected normalized quaternion interpolation at
    the same weight.
    """
    a = cosine_blend(tau)
    pos = p0.position + a * (p1.position - p0.position)
    quat = quat_nlerp(p0.orientation, p1.orientation, a)
    return EePose(pos, quat)


def resolve_target(phase: FsmPhase, world_poses: dict[str, EePose]) -> EePose:
    if phase.frame not in world_poses:
        raise TargetFrameError(f"unknown target frame {phase.frame!r} in phase {phase.name}")
    return world_poses[phase.frame].compose(phase.target)


def fsm_step(
    state: FsmState,
    phases: Sequence[FsmPhase],
    world_poses: dict[str, EePose],
    t: float,
) -> tuple[EePose, float, FsmState]:
    """Advance the pick-and-place state machine to time t.

    Returns the blended end-effector reference, the gripper command, and
    the successor state. The gripper ramps linearly in normalized phase
    time toward each phase's target; after the last phase the final pose
    is held.
    """
    if state.done(phases):
        return state.start_pose, state.start_gripper, state

    phase = phases[state.phase_index - 1]
    if t < state.phase_start_time:
        raise ValueError("time moved backwards across fsm_step calls")
    tau = min(1.0, (t - state.phase_start_time) / phase.duration)
    target = resolve_target(phase, world_poses)
    ref = interpolate_pose(state.start_pose, target, tau)
    g = state.start_gripper + tau * (phase.gripper_target - state.start_gripper)

    if tau >= 1.0:
        state = FsmState(
            phase_index=state.phase_index + 1,
            phase_start_time=state.phase_start_time + phase.duration,
            start_pose=ref,
            start_gripper=phase.gripper_target,
        )
    return ref, g, state


def initial_fsm_state(start_pose: EePose, t: float, start_gripper: float = 1.0) -> FsmState:
    return FsmState(phase_index=1, phase_start_time=t, start_pose=start_pose,
                    start_gripper=start_gripper)


def pick_phases(grasp_offset, durations: dict[str, float] | None = None) -> list[FsmPhase]:
    """Phases 1-5 (approach through lift) targeting the ``object`` frame."""
    d = {
        "approach_lateral": 3.0,
        "approach_pre_grasp": 1.5,
        "descend": 1.5,
        "close_gripper": 1.0,
        "lift": 1.5,
    }
    d.update(durations or {})
    gx, gy, gz = grasp_offset
    above = EePose.from_xyz(gx, gy, gz + 0.25)
    pre = EePose.from_xyz(gx, gy, gz + 0.10)
    grasp = EePose.from_xyz(gx, gy, gz)
    lift = EePose.from_xyz(gx, gy, gz + PICK_LIFT_HEIGHT)
    return [
        FsmPhase(1, "approach_lateral", d["approach_lateral"], "object", above, 1.0),
        FsmPhase(2, "approach_pre_grasp", d["approach_pre_grasp"], "object", pre, 1.0),
        FsmPhase(3, "descend", d["descend"], "object", grasp, 1.0),
        FsmPhase(4, "close_gripper", d["close_gripper"], "object", grasp, 0.0),
        FsmPhase(5, "lift", d["lift"], "object", lift, 0.0),
    ]


def place_phases(grasp_offset, durations: dict[str, float] | None = None) -> list[FsmPhase]:
    """Phases 6-10 (transport through depart) targeting the ``goal`` frame."""
    d = {
        "transport": 3.0,
        "descend_place": 1.5,
        "open_gripper": 1.0,
        "retract": 1.5,
        "depart": 2.0,
    }
    d.update(durations or {})
    gx, gy, gz = grasp_offset
    above = EePose.from_xyz(gx, gy, gz + 0.25)
    at = EePose.from_xyz(gx, gy, gz)
    return [
        FsmPhase(6, "transport", d["transport"], "goal", above, 0.0),
        FsmPhase(7, "descend_place", d["descend_place"], "goal", at, 0.0),
        FsmPhase(8, "open_gripper", d["open_gripper"], "goal", at, 1.0),
        FsmPhase(9, "retract", d["retract"], "goal", above, 1.0),
        FsmPhase(10, "depart", d["depart"], "home", EePose.from_xyz(0, 0, 0), 1.0),
    ]


def full_cycle_phases(grasp_offset) -> list[FsmPhase]:
    return pick_phases(grasp_offset) + place_phases(grasp_offset)


# ---------------------------------------------------------------------------
# Motion-policy math


def numeric_jacobian(task_map: Callable[[np.ndarray], np.ndarray], q: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a task map at q.

    Per-column step h = 1e-6 * max(1, |q_i|).
    """
    q = np.asarray(q, dtype=float)
    f0 = np.asarray(task_map(q), dtype=float)
    if not np.all(np.isfinite(f0)):
        raise ValueError("task map returned non-finite values")
    m, n = f0.shape[0], q.shape[0]
    J = np.empty((m, n))
    for i in range(n):
        h = 1e-6 * max(1.0, abs(q[i]))
        qp = q.copy()
        qm = q.copy()
        qp[i] += h
        qm[i] -= h
        fp = np.asarray(task_map(qp), dtype=float)
        fm = np.asarray(task_map(qm), dtype=float)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError("task map returned non-finite values")
        J[:, i] = (fp - fm) / (2.0 * h)
    return J


@dataclass(frozen=True)
class RmpLeaf:
    """One task-space policy: task map, Riemannian metric, desired force."""

    task_map: Callable[[np.ndarray], np.ndarray]
    metric: np.ndarray
    force: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.metric, dtype=float)
        F = np.asarray(self.force, dtype=float).reshape(-1)
        if M.shape != (F.shape[0], F.shape[0]):
            raise ValueError("metric/force dimension mismatch")
        if np.max(np.abs(M - M.T)) > 1e-12:
            raise ValueError("metric must be symmetric")
        eigs = np.linalg.eigvalsh(M)
        if eigs.min() < -1e-10:
            raise ValueError("metric must be positive semidefinite")
        object.__setattr__(self, "metric", M)
        object.__setattr__(self, "force", F)

    def evaluate(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return numeric_jacobian(self.task_map, q), self.metric, self.force


def rmp_resolve(leaves: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]]) -> tuple[np.ndarray, bool]:
    """Combine pulled-back task policies into one joint acceleration.

    qdd = pinv(sum J^T M J) . sum J^T F, with the Moore-Penrose
    pseudo-inverse (singular values below 1e-10 * sigma_max dropped).
    Returns (qdd, degenerate); degenerate is True when the metric sum is
    identically zero, in which case qdd is zero.
    """
    if not leaves:
        raise ValueError("need at least one leaf")
    n = np.asarray(leaves[0][0]).shape[1]
    A = np.zeros((n, n))
    b = np.zeros(n)
    for J, M, F in leaves:
        J = np.atleast_2d(np.asarray(J, dtype=float))
        M = np.atleast_2d(np.asarray(M, dtype=float))
        F = np.asarray(F, dtype=float).reshape(-1)
        if J.shape[1] != n:
            raise ValueError(f"leaf Jacobian has {J.shape[1]} columns, expected {n}")
        if M.shape != (J.shape[0], J.shape[0]) or F.shape[0] != J.shape[0]:
            raise ValueError("leaf dimension mismatch")
        A += J.T @ M @ J
        b += J.T @ F
    if not A.any():
        return np.zeros(n), True
    qdd = np.linalg.pinv(A, rcond=1e-10) @ b
    return qdd, False


def grasp_check(gripper_point, obj_position, threshold: float) -> bool:
    """True iff the gripper key point is within threshold of the object
    center (closed comparison)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d = math.dist(tuple(gripper_point), tuple(obj_position))
    return d <= threshold


@dataclass(frozen=True)
class ChainModel:
    """Planar serial chain used by the desk tests (n joints, revolute)."""

    link_lengths: tuple[float, ...]
    joint_limits: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.link_lengths) < 1:
            raise ValueError("need at least one link")
        if len(self.joint_limits) != len(self.link_lengths):
            raise ValueError("one joint limit interval per link")

    @property
    def dof(self) -> int:
        return len(self.link_lengths)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        lo = np.array([l for l, _ in self.joint_limits])
        hi = np.array([h for _, h in self.joint_limits])
        return np.clip(q, lo, hi)

    def forward(self, q: np.ndarray) -> np.ndarray:
        """End point of the chain in the plane."""
        q = np.asarray(q, dtype=float)
        x = y = 0.0
        acc = 0.0
        for L, qi in zip(self.link_lengths, q):
            acc += qi
            x += L * math.cos(acc)
            y += L * math.sin(acc)
        return np.array([x, y])
