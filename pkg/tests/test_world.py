import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kitchenr.plan import Plan, PlanStep
from kitchenr.world import (
    DistributionParams,
    GridMap,
    Pose2D,
    Segment2D,
    default_distribution,
    default_scene,
    inflate_grid,
    pregenerate_batch,
    read_pgm,
    sample_episode_config,
    support_heights,
    validate_config,
)


def brute_force_inflate(grid: GridMap, radius: float) -> np.ndarray:
    """Per-cell exhaustive distance-transform thresholding."""
    occ = np.argwhere(grid.cells)
    out = np.zeros_like(grid.cells)
    r_cells = radius / grid.resolution
    for iy in range(grid.height):
        for ix in range(grid.width):
            for oy, ox in occ:
                if math.hypot(ix - ox, iy - oy) <= r_cells + 1e-12:
                    out[iy, ix] = True
                    break
    return out


def make_grid(cells, resolution=0.1):
    cells = np.asarray(cells, dtype=bool)
    h, w = cells.shape
    return GridMap(resolution, w, h, Pose2D(0.0, 0.0, 0.0), cells)


class TestInflateGrid:
    def test_zero_radius_is_identity(self):
        rng = np.random.default_rng(0)
        grid = make_grid(rng.random((9, 9)) < 0.3)
        out = inflate_grid(grid, 0.0)
        assert np.array_equal(out.cells, grid.cells)

    def test_empty_grid_stays_empty(self):
        grid = make_grid(np.zeros((7, 7)))
        assert not inflate_grid(grid, 1.0).cells.any()

    def test_center_cell_matches_brute_force(self):
        cells = np.zeros((9, 9), dtype=bool)
        cells[4, 4] = True
        grid = make_grid(cells)
        out = inflate_grid(grid, 1.5 * grid.resolution)
        assert np.array_equal(out.cells, brute_force_inflate(grid, 1.5 * grid.resolution))

    def test_negative_radius_rejected(self):
        grid = make_grid(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            inflate_grid(grid, -0.1)

    def test_input_unchanged(self):
        cells = np.zeros((5, 5), dtype=bool)
        cells[2, 2] = True
        grid = make_grid(cells)
        inflate_grid(grid, 0.3)
        assert grid.cells.sum() == 1

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), radius_cells=st.floats(0.0, 4.0))
    def test_matches_brute_force_on_random_grids(self, seed, radius_cells):
        rng = np.random.default_rng(seed)
        grid = make_grid(rng.random((16, 16)) < 0.15)
        radius = radius_cells * grid.resolution
        out = inflate_grid(grid, radius)
        assert np.array_equal(out.cells, brute_force_inflate(grid, radius))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), r1=st.floats(0.0, 3.0), r2=st.floats(0.0, 3.0))
    def test_monotone_in_radius(self, seed, r1, r2):
        if r1 > r2:
            r1, r2 = r2, r1
        rng = np.random.default_rng(seed)
        grid = make_grid(rng.random((12, 12)) < 0.2)
        small = inflate_grid(grid, r1 * grid.resolution).cells
        big = inflate_grid(grid, r2 * grid.resolution).cells
        assert np.array_equal(small & big, small)


class TestSampleEpisodeConfig:
    def test_deterministic_in_seed(self, params, heights):
        a = sample_episode_config(params, seed=99, support_heights=heights)
        b = sample_episode_config(params, seed=99, support_heights=heights)
        assert a == b

    def test_zero_length_segment_pins_start(self, params):
        p = replace(params, start_segments=(Segment2D(3.0, 2.0, 3.0, 2.0),))
        cfg = sample_episode_config(p, seed=5)
        assert (cfg.robot_start.x, cfg.robot_start.y) == (3.0, 2.0)

    def test_length_proportional_segment_split(self, params):
        p = replace(
            params,
            start_segments=(Segment2D(0, 0, 1, 0), Segment2D(10, 0, 10, 3)),
        )
        n = 10_000
        short = 0
        for i in range(n):
            cfg = sample_episode_config(p, seed=i)
            if cfg.robot_start.x <= 1.0:
                short += 1
        assert abs(short / n - 0.25) < 0.03

    def test_command_fixes_object_and_goal(self, params, heights):
        cfg = sample_episode_config(
            params, command="Move the bowl to the green zone.", seed=7,
            support_heights=heights,
        )
        assert cfg.object.kind == "bowl"
        assert cfg.goal_zone == "green"
        assert cfg.instruction == "Move the bowl to the green zone."

    def test_command_with_two_zones(self, params, heights):
        cfg = sample_episode_config(
            params, command="Take the cup from the red zone to the blue zone.",
            seed=7, support_heights=heights,
        )
        assert (cfg.start_zone, cfg.goal_zone) == ("red", "blue")

    def test_unknown_object_in_command_rejected(self, params):
        with pytest.raises(ValueError):
            sample_episode_config(params, command="Move the banana to the green zone.")

    def test_unknown_zone_in_command_rejected(self, params):
        with pytest.raises(ValueError):
            sample_episode_config(params, command="Move the bowl somewhere nice.")

    def test_object_positions_within_vicinity(self, params, heights):
        for seed in range(50):
            cfg = sample_episode_config(params, seed=seed, support_heights=heights)
            sx, sy = params.anchor_points[cfg.start_zone]
            gx, gy = params.anchor_points[cfg.goal_zone]
            assert math.dist(cfg.object.position[:2], (sx, sy)) <= params.vicinity_radius + 1e-12
            assert math.dist(cfg.object_goal_position[:2], (gx, gy)) <= params.vicinity_radius + 1e-12

    def test_every_config_validates_against_scene(self, scene, params, heights):
        for seed in range(30):
            cfg = sample_episode_config(params, seed=seed, support_heights=heights)
            assert validate_config(cfg, scene).ok


class TestPregenerateBatch:
    def test_five_kinds_each_once(self, params, heights):
        configs = pregenerate_batch(params, 5, balance_objects=True, support_heights=heights)
        kinds = sorted(c.object.kind for c in configs)
        assert kinds == sorted(params.object_kinds)

    def test_seven_configs_counts_differ_by_one(self, params, heights):
        configs = pregenerate_batch(params, 7, balance_objects=True, support_heights=heights)
        counts = {}
        for c in configs:
            counts[c.object.kind] = counts.get(c.object.kind, 0) + 1
        assert max(counts.values()) - min(counts.values()) == 1

    def test_deterministic(self, params, heights):
        a = pregenerate_batch(params, 3, support_heights=heights)
        b = pregenerate_batch(params, 3, support_heights=heights)
        assert a == b

    def test_balanced_configs_still_validate(self, scene, params, heights):
        for cfg in pregenerate_batch(params, 11, balance_objects=True, support_heights=heights):
            assert validate_config(cfg, scene).ok

    def test_n_zero_rejected(self, params):
        with pytest.raises(ValueError):
            pregenerate_batch(params, 0)


class TestValidateConfig:
    def test_well_formed_config_passes(self, scene, params, heights):
        cfg = sample_episode_config(params, seed=1, support_heights=heights)
        assert validate_config(cfg, scene).ok

    def test_unknown_zone_in_plan_reported(self, scene, params, heights):
        cfg = sample_episode_config(params, seed=1, support_heights=heights)
        bad_steps = list(cfg.gt_plan.steps)
        bad_steps[0] = PlanStep("move to the purple zone")
        cfg = replace(cfg, gt_plan=Plan(tuple(bad_steps)))
        report = validate_config(cfg, scene)
        assert any("step 0" in v for v in report.violations)

    def test_start_inside_inflated_obstacle_reported(self, scene, params, heights):
        cfg = sample_episode_config(params, seed=1, support_heights=heights)
        # Just beside the island wall: free in the raw grid, blocked once
        # inflated by the robot radius.
        cfg = replace(cfg, robot_start=Pose2D(3.0, 3.0, 0.0))
        assert not scene.grid.occupied_at(3.0, 3.0)
        report = validate_config(cfg, scene)
        assert "start pose blocked" in report.violations


class TestPgm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        occ = rng.random((6, 8)) < 0.4
        img = np.where(occ[::-1], 0, 255).astype(np.uint8)
        path = tmp_path / "map.pgm"
        with open(path, "wb") as f:
            f.write(b"P5\n# test map\n8 6\n255\n")
            f.write(img.tobytes())
        w, h, cells = read_pgm(path)
        assert (w, h) == (8, 6)
        assert np.array_equal(cells, occ)

    def test_rejects_ascii_pgm(self, tmp_path):
        path = tmp_path / "map.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(ValueError):
            read_pgm(path)
