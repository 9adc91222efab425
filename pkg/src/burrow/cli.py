"""Command line entry point: ``burrow gen | train | eval | replay | bench``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .control import Mode
from .learn.checkpoint import CheckpointFormatError, load_checkpoint
from .learn.ppo import TrainingDiverged
from .learn.train import CHECKPOINT_NAME, METRICS_NAME, STATE_NAME, Trainer
from .runconfig import ConfigError, RunConfig, dump_config, merge_overrides, parse_config
from .sim import SimulationDiverged
from .world import Difficulty, EnvFileError, generate_env, save_env, start_goal_clearance, validate_env

log = logging.getLogger("burrow")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser default
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON run config")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed")
    g.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                   help="worker threads (BURROW_WORKERS overrides)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    g.add_argument("--mode", default=argparse.SUPPRESS,
                   help="end_to_end, hierarchical or param_skills")
    g.add_argument("--scale", type=float, default=argparse.SUPPRESS, help="scale factor on the environment mix")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    flags = _global_flags()
    ap = argparse.ArgumentParser(prog="burrow", parents=[flags],
                                 description="Quadruped confined-space simulator, planner and PPO trainer.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[flags], help="generate environment files")
    g.add_argument("--difficulty", required=True, choices=[d.value for d in Difficulty])
    g.add_argument("--count", type=int, default=1)

    t = sub.add_parser("train", parents=[flags], help="train a policy")
    t.add_argument("--resume", action="store_true", help="continue from the state in --out")
    t.add_argument("--updates", type=int, help="stop after this many PPO updates")
    t.add_argument("--total-steps", type=int, help="override train.total_steps")
    t.add_argument("--task", choices=["pyramids", "corridor"])

    e = sub.add_parser("eval", parents=[flags], help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--envs", type=int, help="environments per difficulty")
    e.add_argument("--trials", type=int, help="trials per environment")
    e.add_argument("--difficulty", action="append", choices=[d.value for d in Difficulty])
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of using the mean")
    e.add_argument("--log-envs", type=int, default=0,
                   help="write trajectory logs for the first N environments of each difficulty")

    r = sub.add_parser("replay", parents=[flags], help="re-simulate a trajectory log and export poses")
    r.add_argument("log")

    b = sub.add_parser("bench", parents=[flags], help="measure batched stepping throughput")
    b.add_argument("--envs", type=int, default=1024)
    b.add_argument("--steps", type=int, default=50)
    b.add_argument("--difficulty", default="hard", choices=[d.value for d in Difficulty])
    return ap


def resolve_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc}"]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
        if not isinstance(data, dict):
            raise ConfigError(["<root>: config must be a JSON object"])
    mode = getattr(args, "mode", None)
    if mode is not None:
        try:
            mode = Mode.parse(mode).value
        except ValueError as exc:
            raise ConfigError([f"mode: {exc}"]) from None
    over = {"mode": mode, "seed": getattr(args, "seed", None), "workers": getattr(args, "workers", None),
            "out_dir": getattr(args, "out", None), "scale": getattr(args, "scale", None),
            "task": getattr(args, "task", None)}
    if getattr(args, "total_steps", None) is not None:
        over["train"] = {"total_steps": args.total_steps}
    return parse_config(merge_overrides(data, over))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- commands
def cmd_gen(args, cfg: RunConfig) -> int:
    from .plotting import plot_environment

    if args.count < 1:
        raise ConfigError(["--count must be >= 1"])
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(args.count):
        seed = cfg.seed + k
        spec = generate_env(seed, args.difficulty)
        errs = validate_env(spec)
        if errs:
            log.error("generated environment %d fails validation: %s", seed, "; ".join(errs))
            return EXIT_FAILED
        name = f"env_{args.difficulty}_{seed}.json"
        save_env(spec, out / name)
        rows.append([name, seed, args.difficulty, len(spec.pyramids()), repr(start_goal_clearance(spec))])
    _write_rows(out / f"envs_{args.difficulty}.csv", ("file", "seed", "difficulty", "pyramids", "clearance"), rows)
    plot_environment(generate_env(cfg.seed, args.difficulty), out / f"env_{args.difficulty}_{cfg.seed}.png")
    print(f"wrote {args.count} {args.difficulty} environments to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .plotting import plot_training

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = cfg.env_counts()
    specs = cfg.training_specs()
    log.info("training %s on %d environments (%s)", cfg.mode, len(specs),
             ", ".join(f"{k} {v}" for k, v in counts.items()))
    dump_config(cfg, out / "config.json")
    trainer = Trainer(cfg.mode_enum, specs, out, seed=cfg.seed, workers=cfg.workers, sim=cfg.sim,
                      reward=cfg.reward, robot=cfg.robot, grid=cfg.grid, ppo=cfg.ppo, settings=cfg.train)
    try:
        if args.resume:
            if not (out / STATE_NAME).exists():
                raise ConfigError([f"--resume given but {out / STATE_NAME} does not exist"])
            trainer.load()
            log.info("resumed at update %d (%d control steps)", trainer.update, trainer.env_steps)

        def report(row):
            log.info("update %d  steps %d  reward %.4f  success %s  x_g %.2f", row["update"], row["env_steps"],
                     row["mean_reward"], f"{row['success_rate']:.3f}", row["x_g"])

        res = trainer.run(args.updates, report)
    finally:
        trainer.close()
    plot_training(out / METRICS_NAME, out / "training.png")
    print(f"{res.updates} updates, {res.env_steps} control steps; checkpoint {out / CHECKPOINT_NAME}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    from .evaluate import evaluate
    from .plotting import plot_eval

    mode_given = getattr(args, "mode", None) is not None
    try:
        ck = load_checkpoint(args.checkpoint, cfg.mode if mode_given else None)
    except CheckpointFormatError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    cfg = replace(cfg, mode=ck.mode.value, eval=replace(cfg.eval, stochastic=cfg.eval.stochastic or args.stochastic))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(ck, cfg, out, args.difficulty, args.envs, args.trials, cfg.workers, args.log_envs)
    report.write_csv(out)
    table = report.table()
    (out / "eval_table.txt").write_text(table + "\n")
    plot_eval(report, out / "eval.png")
    print(table)
    return EXIT_OK


def cmd_replay(args, cfg: RunConfig) -> int:
    from .plotting import plot_trajectories
    from .sim.trajlog import TrajectoryLogError, export_poses, read_log, replay_episode
    from .world import env_from_dict

    try:
        episodes = read_log(args.log)
    except (OSError, TrajectoryLogError, EnvFileError) as exc:
        log.error("cannot read trajectory log: %s", exc)
        return EXIT_CONFIG
    divs = [d for d in (replay_episode(ep) for ep in episodes) if d is not None]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = export_poses(episodes, out / "poses.csv")
    spec = env_from_dict(episodes[0].header["env"]) if episodes else None
    same_env = spec is not None and all(ep.header["env"] == episodes[0].header["env"] for ep in episodes)
    plot_trajectories(episodes, out / "trajectory.png", spec if same_env else None)
    print(f"replayed {len(episodes)} episodes, {rows} steps; poses written to {out / 'poses.csv'}")
    if divs:
        for d in divs:
            print("DIVERGED " + d.describe())
        return EXIT_FAILED
    print("no divergence")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    from .bench import run_benchmark
    from .plotting import plot_bench

    res = run_benchmark(cfg, args.envs, args.steps, difficulty=args.difficulty, workers=cfg.workers)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frac = res.phase_fractions()
    _write_rows(out / "bench.csv", ("envs", "steps", "workers", "steps_per_s", *(f"{k}_ms" for k in res.phases),
                                    "state_sha256"),
                [[res.envs, res.steps, res.workers, f"{res.steps_per_second:.1f}",
                  *(f"{1e3 * v:.3f}" for v in res.phases.values()), res.state_digest]])
    plot_bench(res.phases, out / "bench.png")
    print(f"{res.envs} envs x {res.steps} steps on {res.workers} worker(s): {res.steps_per_second:,.0f} control steps/s")
    for k, v in res.phases.items():
        print(f"  {k:<9} {1e3 * v:8.2f} ms/step  {100 * frac[k]:5.1f}%")
    print(f"  state sha256 {res.state_digest}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "replay": cmd_replay, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "train":
        logging.getLogger("burrow").setLevel(logging.INFO)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDiverged, TrainingDiverged) as exc:
        print(f"runtime divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
