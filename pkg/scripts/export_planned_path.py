#!/usr/bin/env python3
"""Plan a single base path on the built-in scene and export it as CSV.

Handy for eyeballing planner output in a plotting tool: the CSV holds
one waypoint per row plus the commanded final heading in the header.
"""

import argparse
import sys

from kitchenr.nav import BlockedEndpoint, NoPath, theta_star
from kitchenr.world import default_scene, load_scene


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--start", nargs=2, type=float, required=True, metavar=("X", "Y"))
    ap.add_argument("--goal", nargs=2, type=float, required=True, metavar=("X", "Y"))
    ap.add_argument("--heading", type=float, default=0.0, help="final heading (rad)")
    ap.add_argument("--scene", default=None, help="scene TOML (default: built-in kitchen)")
    ap.add_argument("--out", default="path.csv")
    args = ap.parse_args()

    scene = load_scene(args.scene) if args.scene else default_scene()
    grid = scene.inflated_grid()
    try:
        path = theta_star(grid, tuple(args.start), tuple(args.goal), args.heading)
    except (NoPath, BlockedEndpoint) as exc:
        print(exc, file=sys.stderr)
        return 1
    with open(args.out, "w") as f:
        f.write(path.to_csv())
    print(f"{len(path.waypoints)} waypoints, cost {path.cost:.3f} m -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
