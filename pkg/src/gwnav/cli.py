"""Command-line entry points: train, eval, demo-serve, metrics, replay,
gen-demos."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import AgentConfig
from .curriculum import bundled_plan_names, load_plan, run_experiment
from .env import EpisodeRecord, NavigationEnv
from .guidewire import Command
from .metrics import compute_metrics
from .phantom import load_bundled, load_phantom
from .rainbow import RainbowAgent
from .replay_run import replay_episode


def _tree(args):
    return load_phantom(args.phantom) if args.phantom else load_bundled()


def _parse_sources(pairs) -> dict[str, Path]:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise SystemExit(f"--source expects MODEL=PATH, got {p!r}")
        k, v = p.split("=", 1)
        out[k] = Path(v)
    return out


def cmd_train(args) -> int:
    plan = load_plan(args.plan)
    summary = run_experiment(
        plan, seed=args.seed, out_dir=args.out, tree=_tree(args),
        source_paths=_parse_sources(args.source), demo_stem=args.demos,
        checkpoint_every=args.checkpoint_every)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    plan = load_plan(args.plan)
    cfg = AgentConfig()
    agent = RainbowAgent.load_checkpoint(args.checkpoint, cfg, transfer=False)
    env = NavigationEnv(_tree(args), active_zones=plan.zones)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    records = []
    for _ in range(args.episodes):
        goal = plan.targets[rng.integers(len(plan.targets))]
        obs = env.reset(goal, int(rng.integers(2 ** 31)))
        while not env.done:
            obs = env.step(Command(agent.act(obs, mode="eval"))).observation
        records.append(env.record())
    report = compute_metrics(records)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "episodes.jsonl", "w") as f:
            for r in records:
                f.write(r.to_json() + "\n")
        (out / "metrics.json").write_text(report.to_json())
    n_success = sum(1 for r in records if r.outcome == "success")
    print(json.dumps({"episodes": len(records),
                      "success_rate": n_success / len(records),
                      "steps_last_100": report.steps["last_100"]},
                     indent=2, sort_keys=True))
    return 0


def cmd_metrics(args) -> int:
    path = Path(args.run) / "episodes.jsonl" if Path(args.run).is_dir() \
        else Path(args.run)
    records = [EpisodeRecord.from_json(line) for line in path.read_text().splitlines()
               if line.strip()]
    report = compute_metrics(records, window=args.window, latency_s=args.latency)
    if Path(args.run).is_dir():
        (Path(args.run) / "metrics.json").write_text(report.to_json())
    print(json.dumps({"episodes": report.episodes,
                      "reached_95": report.reached_95,
                      "reached_99": report.reached_99,
                      "steps": report.steps, "time_s": report.time_s},
                     indent=2, sort_keys=True))
    return 0


def cmd_replay(args) -> int:
    run = Path(args.run)
    path = run / "episodes.jsonl" if run.is_dir() else run
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if ":" in args.episode:
        lo, hi = args.episode.split(":", 1)
        indices = range(int(lo), min(int(hi), len(lines)))
    else:
        indices = [int(args.episode)]
    plan_path = run / "plan.json" if run.is_dir() else None
    zones = ("proximal", "medial", "distal")
    if plan_path and plan_path.exists():
        zones = tuple(json.loads(plan_path.read_text())["zones"])
    env = NavigationEnv(_tree(args), active_zones=zones)
    bundle = []
    for i in indices:
        record = EpisodeRecord.from_json(lines[i])
        seed = args.seed if args.seed is not None else record.seed
        traj = replay_episode(record, seed, env)
        bundle.append({"episode": i, "goal": record.goal,
                       "outcome": record.outcome, "seed": seed,
                       "trajectory": [[round(float(x), 3), round(float(y), 3)]
                                      for x, y in traj]})
    out = bundle[0] if len(bundle) == 1 and ":" not in args.episode \
        else {"episodes": bundle}
    if args.out:
        Path(args.out).write_text(json.dumps(out, sort_keys=True))
    else:
        print(json.dumps(out, sort_keys=True))
    return 0


def cmd_demo_serve(args) -> int:
    from .demo_server import serve_demo_session
    plan = load_plan(args.plan)
    serve_demo_session(args.port, _tree(args), plan.zones, args.out,
                       per_target=args.per_target, seed=args.seed,
                       host=args.host)
    return 0


def cmd_gen_demos(args) -> int:
    from .dqfd import generate_scripted_demos, write_demoset
    tree = _tree(args)
    zones = ("proximal", "medial")
    targets = args.targets or ["prox-main", "prox-side", "med-main", "med-side"]
    env = NavigationEnv(tree, active_zones=zones)
    demos = generate_scripted_demos(env, targets, per_target=args.per_target,
                                    seed=args.seed)
    write_demoset(args.out, demos)
    steps = sum(r.step_count for r in demos.episodes)
    print(json.dumps({"episodes": len(demos.episodes), "total_steps": steps,
                      "per_target": demos.count_per_target()}, sort_keys=True))
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    ap = argparse.ArgumentParser(prog="gwnav",
                                 description="2D guidewire-navigation RL stack")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="run one experiment plan")
    p.add_argument("--plan", required=True,
                   help=f"plan file or bundled name ({', '.join(bundled_plan_names())})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--phantom", default=None)
    p.add_argument("--source", action="append", metavar="MODEL=CKPT",
                   help="checkpoint for a transfer/policy source model")
    p.add_argument("--demos", default=None, metavar="STEM",
                   help="demo file stem (required for plans with demos)")
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--phantom", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("metrics", help="recompute metrics for a run")
    p.add_argument("--run", required=True, help="run dir or episodes.jsonl")
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--latency", type=float, default=0.11)
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("replay", help="re-simulate recorded episodes")
    p.add_argument("--run", required=True, help="run dir or episodes.jsonl")
    p.add_argument("--episode", default="0",
                   help="index or LO:HI range (trajectory bundle)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--phantom", default=None)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("demo-serve", help="serve the demonstration UI backend")
    p.add_argument("--plan", required=True)
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--out", required=True, metavar="STEM",
                   help="demo file stem to append to")
    p.add_argument("--per-target", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phantom", default=None)
    p.set_defaults(fn=cmd_demo_serve)

    p = sub.add_parser("gen-demos", help="scripted demonstrations (no human)")
    p.add_argument("--out", required=True, metavar="STEM")
    p.add_argument("--targets", nargs="*", default=None)
    p.add_argument("--per-target", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--phantom", default=None)
    p.set_defaults(fn=cmd_gen_demos)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
