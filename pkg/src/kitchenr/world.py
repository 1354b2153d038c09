"""Scene and episode data model.

Occupancy maps, zones, manipulable objects, distribution parameters, and
the seeded episode-configuration sampler. All types are immutable after
construction and all operations are pure, so values can be shared freely
across threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import wrap_angle

OBJECT_CATALOG = ("apple", "bowl", "cup", "fork", "plate")

ANCHOR_POINT_COUNT = 5


@dataclass(frozen=True)
class Pose2D:
    """Planar pose (x, y, theta) with theta wrapped to [-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class GridMap:
    """2D occupancy grid. ``cells`` is a (height, width) bool array,
    True = occupied. Cell (ix, iy) spans
    [origin.x + ix*res, origin.x + (ix+1)*res) x [origin.y + iy*res, ...).
    """

    resolution: float
    width: int
    height: int
    origin: Pose2D
    cells: np.ndarray

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.height, self.width):
            raise ValueError(
                f"cells shape {cells.shape} != (height={self.height}, width={self.width})"
            )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin.x) / self.resolution))
        iy = int(math.floor((y - self.origin.y) / self.resolution))
        return ix, iy

    def in_bounds_point(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        return 0 <= ix < self.width and 0 <= iy < self.height

    def occupied_at(self, x: float, y: float) -> bool:
        ix, iy = self.cell_of(x, y)
        if not (0 <= ix < self.width and 0 <= iy < self.height):
            return True
        return bool(self.cells[iy, ix])

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )


def inflate_grid(grid: GridMap, radius: float) -> GridMap:
    """Dilate occupied cells by a Euclidean center-to-center radius.

    A cell is occupied in the output iff some occupied input cell lies
    within distance ``radius`` of it. The input grid is unchanged.
    """
    if radius < 0:
        raise ValueError("inflation radius must be non-negative")
    if radius == 0 or not grid.cells.any():
        return replace(grid, cells=grid.cells.copy())
    r_cells = radius / grid.resolution
    # Tolerance keeps the bounding box consistent with the distance test
    # below when r_cells sits a rounding error under an integer.
    reach = int(math.floor(r_cells + 1e-12))
    # Disc-shaped structuring element, center-to-center metric.
    offs = [
        (dx, dy)
        for dy in range(-reach, reach + 1)
        for dx in range(-reach, reach + 1)
        if math.hypot(dx, dy) <= r_cells + 1e-12
    ]
    src = grid.cells
    out = np.zeros_like(src)
    h, w = src.shape
    for dx, dy in offs:
        ys0, ys1 = max(0, -dy), min(h, h - dy)
        xs0, xs1 = max(0, -dx), min(w, w - dx)
        out[ys0:ys1, xs0:xs1] |= src[ys0 + dy : ys1 + dy, xs0 + dx : xs1 + dx]
    return replace(grid, cells=out)


@dataclass(frozen=True)
class Zone:
    """Named placement area with a robot approach pose.

    ``center`` marks the nominal object location, ``radius`` the vicinity
    within which objects may be placed, ``approach_pose`` where the base
    should stand to reach the zone.
    """

    name: str
    center: Pose2D
    radius: float
    approach_pose: Pose2D
    min_reach_radius: float = 0.0
    support_height: float = 0.75

    def __post_init__(self):
        if self.radius < 0 or self.min_reach_radius < 0:
            raise ValueError("zone radii must be non-negative")


@dataclass(frozen=True)
class ObjectState:
    """A manipulable object: pose plus the grasp point offset."""

    id: str
    kind: str
    position: tuple[float, float, float]
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    grasp_offset: tuple[float, float, float] = (0.0, 0.0, 0.03)
    attached: bool = False

    def __post_init__(self):
        if self.kind not in OBJECT_CATALOG:
            raise ValueError(f"unknown object kind {self.kind!r}")
        n = math.sqrt(sum(c * c for c in self.orientation))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("object orientation must be a unit quaternion")


@dataclass(frozen=True)
class Segment2D:
    ax: float
    ay: float
    bx: float
    by: float

    @property
    def length(self) -> float:
        return math.hypot(self.bx - self.ax, self.by - self.ay)

    def point_at(self, t: float) -> tuple[float, float]:
        return (self.ax + t * (self.bx - self.ax), self.ay + t * (self.by - self.ay))


@dataclass(frozen=True)
class DistributionParams:
    """Parameters shaping episode-configuration generation."""

    start_segments: tuple[Segment2D, ...]
    object_kinds: tuple[str, ...]
    anchor_points: dict[str, tuple[float, float]]
    vicinity_radius: float
    seed: int

    def __post_init__(self):
        if not self.start_segments:
            raise ValueError("start_segments must be non-empty")
        if self.vicinity_radius < 0:
            raise ValueError("vicinity_radius must be non-negative")
        for k in self.object_kinds:
            if k not in OBJECT_CATALOG:
                raise ValueError(f"unknown object kind {k!r}")
        if not self.object_kinds:
            raise ValueError("object_kinds must be non-empty")
        if len(self.anchor_points) != ANCHOR_POINT_COUNT:
            warnings.warn(
                f"expected {ANCHOR_POINT_COUNT} anchor points, got "
                f"{len(self.anchor_points)}; proceeding with the override",
                stacklevel=2,
            )
        if len(self.anchor_points) < 2:
            raise ValueError("need at least two anchor points")


@dataclass(frozen=True)
class Scene:
    """Static world: the map, zones keyed by name, and the robot footprint
    clearance used when inflating the grid for planning."""

    name: str
    grid: GridMap
    zones: dict[str, Zone]
    robot_radius: float
    description: str = ""

    def inflated_grid(self) -> GridMap:
        return inflate_grid(self.grid, self.robot_radius)

    def zone_for_anchor(self, anchor_name: str) -> Zone:
        return self.zones[anchor_name]


# The Plan type lives in the plan module; imported lazily to avoid a cycle
# at module load (plan does not depend on world).
@dataclass(frozen=True)
class EpisodeConfig:
    """Sampled initial state of one episode."""

    scene_name: str
    robot_start: Pose2D
    object: ObjectState
    start_zone: str
    goal_zone: str
    object_goal_position: tuple[float, float, float]
    instruction: str
    gt_plan: "Plan"  # noqa: F821 - kitchenr.plan.Plan
    seed: int

    def __post_init__(self):
        if self.start_zone == self.goal_zone:
            raise ValueError("start and goal zones must differ")


def _rng_stream(seed: int, stream: int) -> np.random.Generator:
    # Fixed stream-splitting from one root seed keeps every module's
    # randomness replayable from the episode seed alone.
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _sample_on_segments(segments, rng) -> tuple[float, float]:
    lengths = np.array([s.length for s in segments])
    total = lengths.sum()
    if total == 0.0:
        # All segments degenerate: any endpoint is the whole support.
        s = segments[int(rng.integers(len(segments)))]
        return (s.ax, s.ay)
    probs = lengths / total
    idx = int(rng.choice(len(segments), p=probs))
    return segments[idx].point_at(float(rng.uniform(0.0, 1.0)))


def _sample_in_disc(center, radius, rng) -> tuple[float, float]:
    r = radius * math.sqrt(float(rng.uniform(0.0, 1.0)))
    phi = float(rng.uniform(-math.pi, math.pi))
    return (center[0] + r * math.cos(phi), center[1] + r * math.sin(phi))


def _parse_command(command: str, params: DistributionParams):
    """Extract (object kind, start zone or None, goal zone) from an
    instruction. Zones are matched by anchor name in order of appearance;
    with one zone mentioned it is the goal, with two the first is the
    start."""
    text = command.lower()
    kind = None
    for k in OBJECT_CATALOG:
        if k in text:
            kind = k
            break
    if kind is None:
        raise ValueError(f"command mentions no catalog object: {command!r}")
    if kind not in params.object_kinds:
        raise ValueError(f"object kind {kind!r} not in this distribution")
    mentions = []
    for name in params.anchor_points:
        pos = text.find(name.lower())
        if pos >= 0:
            mentions.append((pos, name))
    mentions.sort()
    if not mentions:
        raise ValueError(f"command mentions no known zone: {command!r}")
    if len(mentions) == 1:
        return kind, None, mentions[0][1]
    return kind, mentions[0][1], mentions[1][1]


def sample_episode_config(
    params: DistributionParams,
    command: str | None = None,
    seed: int | None = None,
    scene_name: str = "kitchen",
    support_heights: dict[str, float] | None = None,
) -> EpisodeConfig:
    """Sample one episode configuration, deterministically in the seed.

    The robot start is uniform over the union of the start segments
    (segment chosen length-proportionally, then uniform along it). The
    object's initial and target positions are uniform in discs of
    ``vicinity_radius`` around two distinct anchor points. When
    ``command`` is given, the object kind and the zones are fixed by it.
    """
    from .plan import Plan, PlanStep  # local import, no cycle

    root = params.seed if seed is None else seed
    anchors = list(params.anchor_points)
    heights = support_heights or {}

    rng = _rng_stream(root, 0)
    if command is not None:
        kind, start_zone, goal_zone = _parse_command(command, params)
        if start_zone is None:
            choices = [a for a in anchors if a != goal_zone]
            start_zone = choices[int(rng.integers(len(choices)))]
    else:
        kind = params.object_kinds[int(rng.integers(len(params.object_kinds)))]
        i, j = rng.choice(len(anchors), size=2, replace=False)
        start_zone, goal_zone = anchors[int(i)], anchors[int(j)]

    start_xy = _sample_on_segments(params.start_segments, _rng_stream(root, 1))
    theta = float(_rng_stream(root, 2).uniform(-math.pi, math.pi))
    robot_start = Pose2D(start_xy[0], start_xy[1], theta)

    obj_rng = _rng_stream(root, 3)
    sx, sy = _sample_in_disc(params.anchor_points[start_zone], params.vicinity_radius, obj_rng)
    gx, gy = _sample_in_disc(params.anchor_points[goal_zone], params.vicinity_radius, obj_rng)
    sz = heights.get(start_zone, 0.75)
    gz = heights.get(goal_zone, 0.75)

    obj = ObjectState(id=f"{kind}_0", kind=kind, position=(sx, sy, sz))
    steps = [
        PlanStep(f"move to the {start_zone} zone"),
        PlanStep(f"pick the {kind}"),
        PlanStep(f"move to the {goal_zone} zone"),
        PlanStep(f"place the {kind}"),
    ]
    if command is not None:
        instruction = command
    else:
        instruction = f"Move the {kind} to the {goal_zone} zone."
    return EpisodeConfig(
        scene_name=scene_name,
        robot_start=robot_start,
        object=obj,
        start_zone=start_zone,
        goal_zone=goal_zone,
        object_goal_position=(gx, gy, gz),
        instruction=instruction,
        gt_plan=Plan(tuple(steps)),
        seed=root,
    )


def pregenerate_batch(
    params: DistributionParams,
    n: int,
    balance_objects: bool = False,
    scene_name: str = "kitchen",
    support_heights: dict[str, float] | None = None,
) -> list[EpisodeConfig]:
    """Pre-generate a batch of episode configurations.

    With ``balance_objects`` the object-kind counts across the batch
    differ by at most one, regardless of n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    configs = []
    kinds = params.object_kinds
    for i in range(n):
        ep_seed = int(np.random.SeedSequence(params.seed, spawn_key=(100 + i,)).generate_state(1)[0])
        cfg = sample_episode_config(
            params, seed=ep_seed, scene_name=scene_name, support_heights=support_heights
        )
        if balance_objects:
            forced = kinds[i % len(kinds)]
            if cfg.object.kind != forced:
                cfg = replace(
                    cfg,
                    object=replace(cfg.object, id=f"{forced}_0", kind=forced),
                    instruction=cfg.instruction.replace(cfg.object.kind, forced),
                    gt_plan=_replace_kind_in_plan(cfg.gt_plan, cfg.object.kind, forced),
                )
        configs.append(cfg)
    return configs


def _replace_kind_in_plan(plan, old: str, new: str):
    from .plan import Plan, PlanStep

    return Plan(tuple(PlanStep(s.text.replace(old, new)) for s in plan.steps))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_config(config: EpisodeConfig, scene: Scene) -> ValidationReport:
    """Check that a configuration is runnable against a scene.

    Returns every violation found; an empty report means the episode can
    be executed.
    """
    from .plan import VERBS

    violations = []
    inflated = scene.inflated_grid()

    for zone_name in (config.start_zone, config.goal_zone):
        if zone_name not in scene.zones:
            violations.append(f"unknown zone {zone_name!r}")
        else:
            z = scene.zones[zone_name]
            if not scene.grid.in_bounds_point(z.center.x, z.center.y):
                violations.append(f"zone {zone_name!r} outside map")

    if not scene.grid.in_bounds_point(config.robot_start.x, config.robot_start.y):
        violations.append("start pose outside map")
    elif inflated.occupied_at(config.robot_start.x, config.robot_start.y):
        violations.append("start pose blocked")

    known_args = {f"the {name} zone" for name in scene.zones}
    known_args |= {f"the {config.object.kind}"}
    for i, step in enumerate(config.gt_plan.steps):
        verb = next((v for v in VERBS if step.text.startswith(v + " ")), None)
        if verb is None:
            violations.append(f"step {i}: unknown verb in {step.text!r}")
            continue
        arg = step.text[len(verb) + 1 :]
        if arg not in known_args:
            violations.append(f"step {i}: unknown argument {arg!r}")
    return ValidationReport(tuple(violations))


# ---------------------------------------------------------------------------
# Scene construction and file loading


def _make_grid(
    width_m: float, height_m: float, resolution: float, origin: Pose2D = Pose2D(0.0, 0.0, 0.0)
) -> tuple[int, int, np.ndarray]:
    w = int(round(width_m / resolution))
    h = int(round(height_m / resolution))
    return w, h, np.zeros((h, w), dtype=bool)


def default_scene(resolution: float = 0.05) -> Scene:
    """The built-in 8 m x 6 m kitchen: border walls, a central island,
    and five color-named zones."""
    w, h, cells = _make_grid(8.0, 6.0, resolution)
    cells[0, :] = cells[-1, :] = True
    cells[:, 0] = cells[:, -1] = True
    # Kitchen island.
    ix0 = int(3.2 / resolution)
    ix1 = int(4.8 / resolution)
    iy0 = int(2.4 / resolution)
    iy1 = int(3.6 / resolution)
    cells[iy0:iy1, ix0:ix1] = True
    grid = GridMap(resolution, w, h, Pose2D(0.0, 0.0, 0.0), cells)

    def zone(name, cx, cy, ax, ay):
        heading = math.atan2(cy - ay, cx - ax)
        return Zone(
            name=name,
            center=Pose2D(cx, cy, 0.0),
            radius=0.10,
            approach_pose=Pose2D(ax, ay, heading),
            min_reach_radius=0.9,
        )

    zones = {
        "blue": zone("blue", 1.0, 1.0, 1.55, 1.55),
        "green": zone("green", 7.0, 1.0, 6.45, 1.55),
        "red": zone("red", 1.0, 5.0, 1.55, 4.45),
        "yellow": zone("yellow", 7.0, 5.0, 6.45, 4.45),
        "white": zone("white", 4.0, 0.8, 4.0, 1.45),
    }
    desc = (
        "A kitchen of 8 by 6 meters with a central island. Colored zones mark "
        "object areas: " + ", ".join(zones) + ". Objects available: " + ", ".join(OBJECT_CATALOG) + "."
    )
    return Scene(name="kitchen", grid=grid, zones=zones, robot_radius=0.30, description=desc)


def default_distribution(seed: int = 0, scene: Scene | None = None) -> DistributionParams:
    scene = scene or default_scene()
    return DistributionParams(
        start_segments=(
            Segment2D(2.2, 1.2, 2.2, 4.8),
            Segment2D(5.8, 1.2, 5.8, 4.8),
        ),
        object_kinds=OBJECT_CATALOG,
        anchor_points={n: (z.center.x, z.center.y) for n, z in scene.zones.items()},
        vicinity_radius=0.04,
        seed=seed,
    )


def support_heights(scene: Scene) -> dict[str, float]:
    return {name: z.support_height for name, z in scene.zones.items()}


def read_pgm(path) -> tuple[int, int, np.ndarray]:
    """Read a binary (P5) 8-bit PGM into an occupancy array.

    Pixel value < 128 means occupied; row 0 of the file is the top of the
    image and becomes the highest y row of the grid.
    """
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ValueError("truncated PGM header")
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i] not in b"\r\n":
                i += 1
        elif data[i] in b" \t\r\n":
            i += 1
        else:
            j = i
            while j < len(data) and data[j] not in b" \t\r\n#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise ValueError(f"not a P5 PGM: magic {tokens[0]!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    i += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=i)
    img = pixels.reshape(height, width)
    occupied = img < 128
    return width, height, occupied[::-1].copy()  # flip so row 0 is y = 0


def load_scene(path) -> Scene:
    """Load a scene from a TOML file, with the occupancy map either inline
    or in a sidecar PGM."""
    import tomli

    with open(path, "rb") as f:
        doc = tomli.load(f)
    m = doc["map"]
    resolution = float(m["resolution"])
    origin = Pose2D(*m.get("origin", [0.0, 0.0, 0.0]))
    if "pgm" in m:
        import os

        pgm_path = os.path.join(os.path.dirname(os.fspath(path)), m["pgm"])
        w, h, cells = read_pgm(pgm_path)
    else:
        rows = m["rows"]  # list of strings, '#' = occupied, row 0 = top
        h = len(rows)
        w = len(rows[0])
        cells = np.array([[c == "#" for c in row] for row in reversed(rows)], dtype=bool)
    grid = GridMap(resolution, w, h, origin, cells)
    zones = {}
    for z in doc.get("zones", []):
        zones[z["name"]] = Zone(
            name=z["name"],
            center=Pose2D(*z["center"]),
            radius=float(z.get("radius", 0.10)),
            approach_pose=Pose2D(*z["approach_pose"]),
            min_reach_radius=float(z.get("min_reach_radius", 0.0)),
            support_height=float(z.get("support_height", 0.75)),
        )
    return Scene(
        name=doc.get("name", "scene"),
        grid=grid,
        zones=zones,
        robot_radius=float(doc.get("robot_radius", 0.30)),
        description=doc.get("description", ""),
    )


def load_distribution(path, scene: Scene) -> DistributionParams:
    import tomli

    with open(path, "rb") as f:
        doc = tomli.load(f)
    d = doc.get("distribution", doc)
    segments = tuple(Segment2D(*s) for s in d["start_segments"])
    anchors = {k: tuple(v) for k, v in d.get(
        "anchor_points", {n: [z.center.x, z.center.y] for n, z in scene.zones.items()}
    ).items()}
    return DistributionParams(
        start_segments=segments,
        object_kinds=tuple(d.get("object_kinds", OBJECT_CATALOG)),
        anchor_points=anchors,
        vicinity_radius=float(d.get("vicinity_radius", 0.04)),
        seed=int(d.get("seed", 0)),
    )
