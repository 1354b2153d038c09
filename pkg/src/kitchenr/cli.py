"""Command-line front door: config generation, benchmark execution,
offline scoring, and report emission.

Exit codes: 0 success, 1 episode fault (any task aborted by a policy or
planner fault), 2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import os
import sys

import numpy as np

from . import eval as evalmod
from . import logio, plan, policies, world

EXIT_OK = 0
EXIT_EPISODE_FAULT = 1
EXIT_CONFIG_ERROR = 2

CONFIG_ENV_VAR = "KITCHENR_CONFIG"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kitchenr",
        description="Desk-scale mobile-manipulation benchmark engine.",
    )
    parser.add_argument(
        "--config",
        default=None,
        help=f"benchmark config file (TOML); default from ${CONFIG_ENV_VAR}",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_gen = sub.add_parser("gen", help="pre-generate a batch of episode configs")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--scene", default=None, help="scene TOML (default: built-in kitchen)")
    p_gen.add_argument("--balance", action="store_true", help="balance object kinds")
    p_gen.add_argument("--out", required=True, help="output directory for config files")

    p_run = sub.add_parser("run", help="run the benchmark on generated configs")
    p_run.add_argument("--configs", required=True, help="directory of config JSON files")
    p_run.add_argument("--policy", default="oracle", help="oracle | null | file:PATH")
    p_run.add_argument("--planner", default="oracle", help="oracle | file:PATH")
    p_run.add_argument("--teleport", action="store_true", default=True)
    p_run.add_argument("--no-teleport", dest="teleport", action="store_false")
    p_run.add_argument("--max-plan-actions", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1,
                       help="episode workers (results are order-invariant)")
    p_run.add_argument("--scene", default=None)
    p_run.add_argument("--out", required=True, help="run output directory")

    p_ep = sub.add_parser("eval-plans", help="score a predictions file against ground truth")
    p_ep.add_argument("--pred", required=True)
    p_ep.add_argument("--gt", required=True)

    p_et = sub.add_parser("eval-traj", help="MSE between paired trajectory logs")
    p_et.add_argument("--pred-dir", required=True)
    p_et.add_argument("--expert-dir", required=True)

    p_rep = sub.add_parser("report", help="re-emit report files for a finished run")
    p_rep.add_argument("--run-dir", required=True)
    return parser


def _load_scene(path):
    if path:
        return world.load_scene(path)
    return world.default_scene()


def _config_to_json(cfg: world.EpisodeConfig) -> dict:
    return {
        "scene": cfg.scene_name,
        "robot_start": [cfg.robot_start.x, cfg.robot_start.y, cfg.robot_start.theta],
        "object": {
            "id": cfg.object.id,
            "kind": cfg.object.kind,
            "position": list(cfg.object.position),
            "orientation": list(cfg.object.orientation),
            "grasp_offset": list(cfg.object.grasp_offset),
        },
        "start_zone": cfg.start_zone,
        "goal_zone": cfg.goal_zone,
        "object_goal_position": list(cfg.object_goal_position),
        "instruction": cfg.instruction,
        "gt_plan": [s.text for s in cfg.gt_plan.steps],
        "seed": cfg.seed,
    }


def _config_from_json(doc: dict) -> world.EpisodeConfig:
    o = doc["object"]
    return world.EpisodeConfig(
        scene_name=doc["scene"],
        robot_start=world.Pose2D(*doc["robot_start"]),
        object=world.ObjectState(
            id=o["id"],
            kind=o["kind"],
            position=tuple(o["position"]),
            orientation=tuple(o["orientation"]),
            grasp_offset=tuple(o["grasp_offset"]),
        ),
        start_zone=doc["start_zone"],
        goal_zone=doc["goal_zone"],
        object_goal_position=tuple(doc["object_goal_position"]),
        instruction=doc["instruction"],
        gt_plan=plan.parse_plan(", ".join(doc["gt_plan"])),
        seed=int(doc["seed"]),
    )


def _cmd_gen(args) -> int:
    scene = _load_scene(args.scene)
    if args.config:
        try:
            params = world.load_distribution(args.config, scene)
        except (OSError, ValueError, KeyError) as exc:
            print(f"unreadable config {args.config}: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        params = dataclasses.replace(params, seed=args.seed)
    else:
        params = world.default_distribution(seed=args.seed, scene=scene)
    heights = world.support_heights(scene)
    configs = world.pregenerate_batch(
        params, args.n, balance_objects=args.balance,
        scene_name=scene.name, support_heights=heights,
    )
    os.makedirs(args.out, exist_ok=True)
    for i, cfg in enumerate(configs):
        path = os.path.join(args.out, f"ep_{i:04d}.json")
        with open(path, "w") as f:
            json.dump(_config_to_json(cfg), f, indent=2)
            f.write("\n")
    print(f"wrote {len(configs)} configs to {args.out}")
    return EXIT_OK


def _make_policy_factory(spec: str):
    if spec == "oracle":
        return policies.OraclePolicy
    if spec == "null":
        return policies.NullPolicy
    if spec.startswith("file:"):
        path = spec[5:]

        def factory():
            records = logio.read_trajectory(path)
            by_task: dict[int, list] = {}
            for r in records:
                by_task.setdefault(r.task_index, []).append(r.action)
            return policies.ReplayPolicy(by_task)

        return factory
    raise ValueError(f"unknown policy {spec!r}")


def _make_planner(spec: str):
    if spec == "oracle":
        return policies.OraclePlanner()
    if spec.startswith("file:"):
        return policies.FilePlanner(spec[5:])
    raise ValueError(f"unknown planner {spec!r}")


def _cmd_run(args) -> int:
    scene = _load_scene(args.scene)
    config_paths = sorted(glob.glob(os.path.join(args.configs, "*.json")))
    if not config_paths:
        print(f"no config files in {args.configs}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    configs = {}
    for path in config_paths:
        try:
            with open(path) as f:
                doc = json.load(f)
            configs[os.path.splitext(os.path.basename(path))[0]] = _config_from_json(doc)
        except (OSError, ValueError, KeyError) as exc:
            print(f"unreadable config {path}: {exc}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
    try:
        planner = _make_planner(args.planner)
        policy_factory = _make_policy_factory(args.policy)
    except (ValueError, OSError, logio.CorruptLog) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    opts = evalmod.BenchmarkOptions(
        teleport_on_failure=args.teleport,
        max_plan_actions=args.max_plan_actions,
        log_dir=os.path.join(args.out, "trajectories"),
    )
    report = evalmod.run_benchmark(configs, scene, planner, policy_factory, opts)
    logio.emit_report(report, args.out)
    print(f"EM {report.em:.6f}  SR {report.sr:.6f}  M {report.m:.6f}")
    faulted = any(
        t.abort_reason and t.abort_reason.startswith("policy_fault")
        for ep in report.episodes
        for t in ep.tasks
    )
    return EXIT_EPISODE_FAULT if faulted else EXIT_OK


def _cmd_eval_plans(args) -> int:
    try:
        preds = plan.read_plans_jsonl(args.pred)
        gts = plan.read_plans_jsonl(args.gt)
    except (OSError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    pairs = []
    for key in sorted(gts):
        pairs.append((preds.get(key, plan.Plan(())), gts[key]))
    if not pairs:
        print("no ground-truth plans found", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    em = plan.exact_match_corpus(pairs)
    print(f"EM {em:.6f}")
    return EXIT_OK


def _cmd_eval_traj(args) -> int:
    pred_paths = sorted(glob.glob(os.path.join(args.pred_dir, "*.jsonl")))
    if not pred_paths:
        print(f"no trajectory files in {args.pred_dir}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    values = []
    warn_total = 0
    for path in pred_paths:
        expert_path = os.path.join(args.expert_dir, os.path.basename(path))
        if not os.path.exists(expert_path):
            print(f"missing expert trajectory for {os.path.basename(path)}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        try:
            pred = np.array([r.action.as_vector() for r in logio.read_trajectory(path)])
            expert = np.array([r.action.as_vector() for r in logio.read_trajectory(expert_path)])
        except logio.CorruptLog as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG_ERROR
        mse, mismatch = evalmod.mse_trajectory(pred, expert)
        values.append(mse)
        warn_total += mismatch
        print(f"{os.path.basename(path)}: MSE {mse:.9f}")
    print(f"mean MSE {sum(values) / len(values):.9f}")
    if warn_total:
        print(f"warning: {warn_total} unmatched timesteps beyond common prefixes",
              file=sys.stderr)
    return EXIT_OK


def _cmd_report(args) -> int:
    path = os.path.join(args.run_dir, "report.json")
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG_ERROR
    episodes = tuple(
        evalmod.EpisodeResult(
            instruction_id=ep["id"],
            tasks=tuple(
                evalmod.TaskRecord(t["kind"], t["em_j"], t["sr_j"], t["duration"],
                                   t["abort_reason"])
                for t in ep["tasks"]
            ),
            plan_accuracy=ep["plan_accuracy"],
            mse_values=tuple(ep["mse"]),
        )
        for ep in doc["episodes"]
    )
    report = evalmod.aggregate(episodes)
    logio.emit_report(report, args.run_dir)
    print(f"re-emitted report files in {args.run_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help; pass through.
        return int(exc.code or 0)
    if args.config is None:
        args.config = os.environ.get(CONFIG_ENV_VAR)
    handlers = {
        "gen": _cmd_gen,
        "run": _cmd_run,
        "eval-plans": _cmd_eval_plans,
        "eval-traj": _cmd_eval_traj,
        "report": _cmd_report,
    }
    try:
        return handlers[args.verb](args)
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
