#!/usr/bin/env python3
"""Generate a template-based instruction corpus for the built-in scene.

Writes one JSON record per line with the instruction text, the
ground-truth plan, and the scene description, ready for eval-plans
scoring or language-model prompting.
"""

import argparse

from kitchenr.plan import builtin_templates, generate_instructions, write_records_jsonl
from kitchenr.world import default_scene, load_scene


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100, help="corpus size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scene", default=None, help="scene TOML (default: built-in kitchen)")
    ap.add_argument("--out", default="instructions.jsonl")
    args = ap.parse_args()

    scene = load_scene(args.scene) if args.scene else default_scene()
    records = generate_instructions(scene, builtin_templates(), args.n, args.seed)
    write_records_jsonl(args.out, records)
    lengths = [len(r.gt_plan.steps) for r in records]
    print(f"wrote {len(records)} instructions to {args.out}")
    print(f"plan lengths: min {min(lengths)}, max {max(lengths)}, "
          f"mean {sum(lengths) / len(lengths):.2f}")


if __name__ == "__main__":
    main()
