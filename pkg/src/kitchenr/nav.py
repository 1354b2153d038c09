"""Any-angle path planning and the rule-based base controller.

The planner searches corner vertices of an (already inflated) occupancy
grid; paths are taut polylines whose segments keep line of sight.
The controller follows the polyline with banded proportional heading
gains, a ramped linear velocity, near-goal deceleration, and a fixed-rate
final rotation.
"""

from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .geometry import wrap_angle
from .world import GridMap, Pose2D

__all__ = [
    "PathPolyline",
    "ControllerParams",
    "ControllerState",
    "ControllerDiagnostics",
    "VelocityCommand",
    "NoPath",
    "BlockedEndpoint",
    "wrap_angle",
    "line_of_sight",
    "theta_star",
    "controller_step",
]

MAX_WAYPOINTS = 100


class NoPath(Exception):
    """Goal unreachable from start on the given grid."""


class BlockedEndpoint(Exception):
    """Start or goal lies in occupied space."""


@dataclass(frozen=True)
class PathPolyline:
    waypoints: tuple[tuple[float, float], ...]
    final_heading: float

    def __post_init__(self):
        if not (1 <= len(self.waypoints) <= MAX_WAYPOINTS):
            raise ValueError(f"waypoint count {len(self.waypoints)} outside [1, {MAX_WAYPOINTS}]")
        for a, b in zip(self.waypoints, self.waypoints[1:]):
            if a == b:
                raise ValueError("consecutive waypoints must be distinct")

    @property
    def cost(self) -> float:
        return sum(
            math.dist(a, b) for a, b in zip(self.waypoints, self.waypoints[1:])
        )

    def to_csv(self) -> str:
        lines = [f"# final_heading={self.final_heading!r}", "x,y"]
        lines += [f"{x!r},{y!r}" for x, y in self.waypoints]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ControllerParams:
    max_v: float = 0.18
    acc_v: float = 0.04
    max_w: float = 0.7
    waypoint_radius: float = 0.35
    stop_dist: float = 0.09
    decel_dist: float = 1.5
    decel_v_trigger: float = 0.3
    final_w: float = 0.15
    final_angle_tol: float = 0.1
    angle_bands: tuple[float, ...] = (0.1, 0.38, 0.7, 1.0, 1.25)
    band_gains: tuple[float, ...] = (0.9, 0.85, 0.8, 0.75)
    control_rate: float = 10.0

    def __post_init__(self):
        for name in ("max_v", "acc_v", "max_w", "waypoint_radius", "stop_dist",
                     "decel_dist", "decel_v_trigger", "final_w", "final_angle_tol",
                     "control_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if list(self.angle_bands) != sorted(set(self.angle_bands)):
            raise ValueError("angle_bands must be strictly increasing")
        if len(self.band_gains) != len(self.angle_bands) - 1:
            raise ValueError("need one gain per band interval")
        if self.decel_v_trigger > self.max_v:
            warnings.warn(
                f"decel_v_trigger ({self.decel_v_trigger}) exceeds max_v "
                f"({self.max_v}); the deceleration branch can never fire",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ControllerState:
    k_v: int = 0
    v_cmd: float = 0.0
    local_max_v: float | None = None  # None = params.max_v
    mode: str = "tracking"  # tracking -> final_rotation -> arrived

    def __post_init__(self):
        if self.mode not in ("tracking", "final_rotation", "arrived"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ControllerDiagnostics:
    d_e: float
    theta_e: float
    d_s: float
    band_gain: float


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    w: float


# ---------------------------------------------------------------------------
# Line of sight


def line_of_sight(grid: GridMap, a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True iff the segment a->b passes through no occupied cell.

    Steps from grid-line crossing to grid-line crossing and checks every
    cell interior the segment enters. Grazing along an obstacle face or
    through a cell corner is allowed, but not squeezing between two
    diagonally opposite occupied cells.
    """
    res = grid.resolution
    ox, oy = grid.origin.x, grid.origin.y
    w, h = grid.width, grid.height
    eps = 1e-12
    # Work in cell units. Endpoints may lie on the closed outer boundary.
    x0, y0 = (a[0] - ox) / res, (a[1] - oy) / res
    x1, y1 = (b[0] - ox) / res, (b[1] - oy) / res
    for p, (px, py) in ((a, (x0, y0)), (b, (x1, y1))):
        if not (-eps <= px <= w + eps and -eps <= py <= h + eps):
            raise ValueError(f"endpoint {p} outside grid bounds")
    dx, dy = x1 - x0, y1 - y0
    length = math.hypot(dx, dy)
    cells = grid.cells

    def occupied(cx: int, cy: int) -> bool:
        return bool(cells[cy, cx])

    def occ(cx: int, cy: int) -> bool:
        return 0 <= cx < w and 0 <= cy < h and bool(cells[cy, cx])

    def axis_indices(p: float, n: int) -> list[int]:
        # Cells a coordinate touches along one axis: two when exactly on
        # an interior grid line, one otherwise; boundary lines touch only
        # the inner cell.
        r = round(p)
        if abs(p - r) < eps:
            return [c for c in (int(r) - 1, int(r)) if 0 <= c < n]
        f = int(math.floor(p))
        return [f] if 0 <= f < n else []

    def interval_blocked(t: float) -> bool:
        # Blocked only when every cell the point touches is occupied, so
        # grazing along a single obstacle face is allowed.
        px, py = x0 + t * dx, y0 + t * dy
        touched = [
            (cx, cy) for cx in axis_indices(px, w) for cy in axis_indices(py, h)
        ]
        return bool(touched) and all(occupied(cx, cy) for cx, cy in touched)

    def lattice_squeeze(t: float) -> bool:
        # A segment may pass exactly through a cell corner, but not
        # between two diagonally opposite occupied cells.
        px, py = x0 + t * dx, y0 + t * dy
        rx, ry = round(px), round(py)
        if abs(px - rx) >= eps or abs(py - ry) >= eps:
            return False
        rx, ry = int(rx), int(ry)
        return (occ(rx - 1, ry - 1) and occ(rx, ry)) or (
            occ(rx, ry - 1) and occ(rx - 1, ry)
        )

    if length < eps:
        return not interval_blocked(0.0)

    # Collect crossing parameters with vertical and horizontal grid lines.
    ts = [0.0, 1.0]
    if abs(dx) > eps:
        lo, hi = sorted((x0, x1))
        for gx in range(math.ceil(lo - eps), math.floor(hi + eps) + 1):
            t = (gx - x0) / dx
            if -eps < t < 1 + eps:
                ts.append(min(1.0, max(0.0, t)))
    if abs(dy) > eps:
        lo, hi = sorted((y0, y1))
        for gy in range(math.ceil(lo - eps), math.floor(hi + eps) + 1):
            t = (gy - y0) / dy
            if -eps < t < 1 + eps:
                ts.append(min(1.0, max(0.0, t)))
    ts = sorted(set(ts))
    # Check the cell interior between consecutive crossings via midpoints,
    # then reject corner squeezes at the crossings themselves.
    for t0, t1 in zip(ts, ts[1:]):
        if interval_blocked(0.5 * (t0 + t1)):
            return False
    for t in ts:
        if lattice_squeeze(t):
            return False
    return True


# ---------------------------------------------------------------------------
# Theta*


def _vertex_pos(grid: GridMap, ix: int, iy: int) -> tuple[float, float]:
    return (grid.origin.x + ix * grid.resolution, grid.origin.y + iy * grid.resolution)


def _corner_vertices(grid: GridMap) -> list[tuple[int, int]]:
    """Convex obstacle corners: lattice vertices touching exactly one
    occupied cell. Taut paths around axis-aligned obstacles bend only
    at these points."""
    padded = np.zeros((grid.height + 2, grid.width + 2), dtype=np.int8)
    padded[1:-1, 1:-1] = grid.cells
    counts = (
        padded[:-1, :-1] + padded[:-1, 1:] + padded[1:, :-1] + padded[1:, 1:]
    )
    ys, xs = np.nonzero(counts == 1)
    return [(int(ix), int(iy)) for iy, ix in zip(ys.tolist(), xs.tolist())]


def shortcut_path(grid: GridMap, points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Greedy visibility shortcutting from the start: keep each waypoint
    only if the next one is not directly visible."""
    if len(points) <= 2:
        return points
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not line_of_sight(grid, points[i], points[j]):
            j -= 1
        out.append(points[j])
        i = j
    return out


def theta_star(
    grid: GridMap, start: tuple[float, float], goal: tuple[float, float],
    final_heading: float = 0.0,
) -> PathPolyline:
    """Exact any-angle shortest path on an inflated occupancy grid.

    A* over the start, goal, and convex obstacle corner vertices with
    lazily evaluated line-of-sight edges. Since taut paths around
    axis-aligned obstacles turn only at convex corners, the result is
    the true shortest polyline. Ties break on lower g-cost, then node
    index, which makes searches deterministic.
    """
    start = (float(start[0]), float(start[1]))
    goal = (float(goal[0]), float(goal[1]))
    for p, label in ((start, "start"), (goal, "goal")):
        if not grid.in_bounds_point(p[0], p[1]):
            raise BlockedEndpoint(f"{label} {p} outside the map")
        if grid.occupied_at(p[0], p[1]):
            raise BlockedEndpoint(f"{label} {p} in occupied space")

    if start == goal:
        return PathPolyline((start,), final_heading)
    if line_of_sight(grid, start, goal):
        return PathPolyline((start, goal), final_heading)

    nodes = [start, goal]
    nodes += [_vertex_pos(grid, ix, iy) for ix, iy in _corner_vertices(grid)]
    GOAL_I = 1

    g = {0: 0.0}
    parent = {0: 0}
    closed: set[int] = set()
    heap = [(math.dist(start, goal), 0.0, 0)]

    while heap:
        _, gcur, i = heapq.heappop(heap)
        if i in closed:
            continue
        closed.add(i)
        if i == GOAL_I:
            chain = [GOAL_I]
            while chain[-1] != 0:
                chain.append(parent[chain[-1]])
            points = [nodes[n] for n in reversed(chain)]
            points = shortcut_path(grid, points)
            # Drop duplicates from corners coinciding with endpoints.
            dedup = [points[0]]
            for p in points[1:]:
                if math.dist(p, dedup[-1]) > 1e-12:
                    dedup.append(p)
            if len(dedup) > MAX_WAYPOINTS:
                idx = np.linspace(0, len(dedup) - 1, MAX_WAYPOINTS).round().astype(int)
                dedup = [dedup[i] for i in sorted(set(idx.tolist()))]
            return PathPolyline(tuple(dedup), final_heading)
        pu = nodes[i]
        for j, pv in enumerate(nodes):
            if j == i or j in closed:
                continue
            cand_g = gcur + math.dist(pu, pv)
            # Cheap bound first; line of sight is the expensive part.
            if cand_g >= g.get(j, math.inf) - 1e-15:
                continue
            if not line_of_sight(grid, pu, pv):
                continue
            g[j] = cand_g
            parent[j] = i
            heapq.heappush(heap, (cand_g + math.dist(pv, goal), cand_g, j))

    raise NoPath(f"no path from {start} to {goal}")


# ---------------------------------------------------------------------------
# Waypoint-following controller


def controller_step(
    state: ControllerState,
    odom: Pose2D,
    path: PathPolyline,
    params: ControllerParams,
    dt: float,
) -> tuple[VelocityCommand, ControllerState, ControllerDiagnostics]:
    """One 10 Hz control tick of the rule-based waypoint follower.

    Advances the active waypoint inside the waypoint radius, applies the
    banded heading gains (with the linear-velocity cap scaled by the same
    band gain), rotates in place for large heading errors, decelerates
    near the goal, and finishes with a fixed-rate final rotation toward
    the path's final heading.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not path.waypoints:
        raise ValueError("empty path")
    if not (0 <= state.k_v < len(path.waypoints)):
        raise ValueError("controller state inconsistent with path")

    wps = path.waypoints
    local_max_v = params.max_v if state.local_max_v is None else state.local_max_v
    final_wp = wps[-1]
    d_s = math.dist((odom.x, odom.y), final_wp)

    if state.mode == "arrived":
        theta_e = wrap_angle(path.final_heading - odom.theta)
        return (
            VelocityCommand(0.0, 0.0),
            state,
            ControllerDiagnostics(0.0, theta_e, d_s, 0.0),
        )

    if state.mode == "final_rotation" or d_s <= params.stop_dist:
        theta_e = wrap_angle(path.final_heading - odom.theta)
        if abs(theta_e) < params.final_angle_tol:
            new = replace(state, mode="arrived", v_cmd=0.0, k_v=len(wps) - 1)
            return (
                VelocityCommand(0.0, 0.0),
                new,
                ControllerDiagnostics(0.0, theta_e, d_s, 0.0),
            )
        w = math.copysign(params.final_w, theta_e)
        new = replace(state, mode="final_rotation", v_cmd=0.0, k_v=len(wps) - 1)
        return (
            VelocityCommand(0.0, w),
            new,
            ControllerDiagnostics(0.0, theta_e, d_s, 0.0),
        )

    # Tracking: k_v indexes the active segment and the target is the
    # segment's far end, so the start point is never steered toward.
    k_v = state.k_v
    while (
        k_v < len(wps) - 1
        and math.dist((odom.x, odom.y), wps[k_v + 1]) < params.waypoint_radius
    ):
        k_v += 1
    target = wps[min(k_v + 1, len(wps) - 1)]
    d_e = math.dist((odom.x, odom.y), target)
    bearing = math.atan2(target[1] - odom.y, target[0] - odom.x)
    theta_e = wrap_angle(bearing - odom.theta)

    # Near-goal deceleration (unreachable with the default parameters,
    # since decel_v_trigger > max_v; surfaced by ControllerParams).
    v_cmd = state.v_cmd
    if d_s < params.decel_dist and v_cmd > params.decel_v_trigger:
        local_max_v = max(0.0, local_max_v - params.acc_v * dt)

    abs_e = abs(theta_e)
    bands = params.angle_bands
    if abs_e < bands[0]:
        band_gain = 1.0
        v_cmd = min(v_cmd + params.acc_v * dt, local_max_v, params.max_v)
        w = theta_e
    elif abs_e >= bands[-1]:
        band_gain = 0.0
        v_cmd = 0.0
        w = max(-params.max_w, min(params.max_w, theta_e))
    else:
        band_gain = params.band_gains[-1]
        for i in range(len(params.band_gains)):
            if bands[i] <= abs_e < bands[i + 1]:
                band_gain = params.band_gains[i]
                break
        v_cmd = min(v_cmd + params.acc_v * dt, band_gain * local_max_v, params.max_v)
        w = band_gain * theta_e

    w = max(-params.max_w, min(params.max_w, w))
    v = max(0.0, min(v_cmd, params.max_v))
    new = replace(state, k_v=k_v, v_cmd=v, local_max_v=local_max_v, mode="tracking")
    return (
        VelocityCommand(v, w),
        new,
        ControllerDiagnostics(d_e, theta_e, d_s, band_gain),
    )
