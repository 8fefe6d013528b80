"""Experiment runner: train and evaluate dispatch policies, compare baselines.

Subcommands:
  train     run training episodes, writing checkpoints, a learning-curve CSV,
            and a summary JSON; resumable from a checkpoint
  eval      run frozen-policy episodes over held-out seeds and write a
            metrics report per invocation
  compare   tabulate metric deltas between report files
  gen-data  emit a synthetic trip-record CSV

Config files are YAML; every run is fully determined by config plus seed.
The output directory resolves flag > HOPFLEET_OUT > config value.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from . import metrics as mx
from .demand import write_trip_records
from .dispatch_rl import CheckpointShapeError
from .engine import (
    BASELINES,
    MODE_EVAL,
    MODE_TRAIN,
    DispatchPolicy,
    SimConfig,
    Simulation,
    generate_workload,
)

ENV_OUT_DIR = "HOPFLEET_OUT"


@dataclass
class TrainSettings:
    episodes: int = 3
    ticks: int | None = None  # None: SimConfig.episode_ticks
    checkpoint_every: int = 1  # episodes between checkpoint files


@dataclass
class EvalSettings:
    seeds: list = field(default_factory=lambda: [101, 102, 103, 104, 105])
    ticks: int | None = None


@dataclass
class ExperimentConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    mode: str = "both"  # train | eval | both
    out_dir: str = "runs/experiment"

    def __post_init__(self):
        if isinstance(self.sim, dict):
            self.sim = SimConfig(**self.sim)
        if isinstance(self.train, dict):
            self.train = TrainSettings(**self.train)
        if isinstance(self.eval, dict):
            self.eval = EvalSettings(**self.eval)
        if self.mode not in ("train", "eval", "both"):
            raise ValueError("mode must be train, eval, or both")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return ExperimentConfig.from_dict(data)


def save_config(path, cfg: ExperimentConfig):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def _resolve_out(cfg: ExperimentConfig, flag_value) -> str:
    out = flag_value or os.environ.get(ENV_OUT_DIR) or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    sim = cfg.sim
    if getattr(args, "seed", None) is not None:
        sim = replace(sim, seed=args.seed)
    if getattr(args, "baseline", None) is not None:
        sim = replace(sim, baseline=args.baseline)
    if getattr(args, "ticks", None) is not None:
        sim = replace(sim, episode_ticks=args.ticks)
    cfg.sim = sim
    return cfg


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        return _fail(f"config file not found: {args.config}")
    except (yaml.YAMLError, TypeError, ValueError) as exc:
        return _fail(f"bad config {args.config}: {exc}")
    cfg = _apply_overrides(cfg, args)
    out = _resolve_out(cfg, args.out)

    policy = DispatchPolicy(cfg.sim)
    start_episode = 0
    if args.checkpoint:
        try:
            header = policy.load(args.checkpoint)
        except FileNotFoundError:
            return _fail(f"checkpoint not found: {args.checkpoint}")
        except CheckpointShapeError as exc:
            return _fail(str(exc))
        start_episode = int(header.get("extra", {}).get("episode", 0))
        print(f"resumed from {args.checkpoint} at step {policy.schedule_step}")

    curve_path = os.path.join(out, "training_curve.csv")
    curve_mode = "a" if args.checkpoint and os.path.exists(curve_path) else "w"
    episode_rows = []
    with open(curve_path, curve_mode, newline="") as curve_fh:
        writer = csv.writer(curve_fh)
        if curve_mode == "w":
            writer.writerow(["step", "q_max", "loss", "epsilon", "act_probability"])
        last_log = None
        for episode in range(start_episode, start_episode + cfg.train.episodes):
            sim = Simulation(replace(cfg.sim, seed=cfg.sim.seed + episode), policy=policy)
            sim.initialize()
            log = sim.run(ticks=cfg.train.ticks, mode=MODE_TRAIN)
            last_log = log
            for row in sim.curve:
                writer.writerow([row["step"], row["q_max"], row["loss"],
                                 row["epsilon"], row["act_probability"]])
            report = mx.build_report(log, cfg.sim.effective_distance_includes_dispatch)
            episode_rows.append({"episode": episode, "seed": log.seed,
                                 "steps": policy.schedule_step,
                                 "accept_rate": report.accept_rate_overall,
                                 "delivered": report.delivered})
            if (episode + 1 - start_episode) % cfg.train.checkpoint_every == 0:
                policy.save(os.path.join(out, f"checkpoint_ep{episode:03d}.npz"),
                            extra={"episode": episode + 1})
            print(f"episode {episode}: steps={policy.schedule_step} "
                  f"accept={report.accept_rate_overall}")

    final_ckpt = os.path.join(out, "checkpoint_final.npz")
    policy.save(final_ckpt, extra={"episode": start_episode + cfg.train.episodes})
    if last_log is not None:
        last_log.to_jsonl(os.path.join(out, "last_episode.jsonl"))
    summary = {
        "episodes": episode_rows,
        "total_steps": policy.schedule_step,
        "checkpoint": final_ckpt,
        "baseline": cfg.sim.baseline,
        "seed": cfg.sim.seed,
    }
    with open(os.path.join(out, "train_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"wrote {final_ckpt}")
    return 0


# ---------------------------------------------------------------------------
# eval


def evaluate(cfg: ExperimentConfig, checkpoint: str | None) -> dict:
    """Frozen-policy evaluation over the held-out seeds; returns the report dict."""
    policy = DispatchPolicy(cfg.sim)
    if checkpoint:
        policy.load(checkpoint)
    per_seed = []
    for seed in cfg.eval.seeds:
        sim = Simulation(replace(cfg.sim, seed=int(seed)), policy=policy)
        sim.initialize()
        log = sim.run(ticks=cfg.eval.ticks, mode=MODE_EVAL)
        report = mx.build_report(log, cfg.sim.effective_distance_includes_dispatch)
        per_seed.append(json.loads(report.to_json()))
    keys = ["accept_rate_overall", "accept_rate_passenger", "accept_rate_goods",
            "fuel_cost_per_delivery", "active_vehicle_ratio", "mean_wait_ticks",
            "mean_wait_minutes", "effective_distance_ratio", "hop_transfers", "delivered"]
    aggregate = {}
    for key in keys:
        values = [r[key] for r in per_seed if r[key] is not None]
        aggregate[key] = float(np.mean(values)) if values else None
    return {
        "baseline": cfg.sim.baseline,
        "checkpoint": checkpoint,
        "eval_seeds": [int(s) for s in cfg.eval.seeds],
        "ticks": cfg.eval.ticks or cfg.sim.episode_ticks,
        "n_vehicles": cfg.sim.n_vehicles,
        "aggregate": aggregate,
        "per_seed": per_seed,
    }


def cmd_eval(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        return _fail(f"config file not found: {args.config}")
    except (yaml.YAMLError, TypeError, ValueError) as exc:
        return _fail(f"bad config {args.config}: {exc}")
    cfg = _apply_overrides(cfg, args)
    out = _resolve_out(cfg, args.out)
    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            return _fail(f"checkpoint not found: {args.checkpoint}")
        try:
            DispatchPolicy(cfg.sim).load(args.checkpoint)
        except CheckpointShapeError as exc:
            return _fail(f"checkpoint rejected: {exc}")
    report = evaluate(cfg, args.checkpoint)
    path = os.path.join(out, f"report_{cfg.sim.baseline}.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    day_csv = os.path.join(out, f"report_{cfg.sim.baseline}_days.csv")
    with open(day_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "day", "generated", "accept_rate", "mean_wait_ticks",
                         "active_vehicle_ratio"])
        for seed_report in report["per_seed"]:
            for row in seed_report["per_day"]:
                writer.writerow([seed_report["seed"], row["day"], row["generated"],
                                 row["accept_rate"], row["mean_wait_ticks"],
                                 row["active_vehicle_ratio"]])
    print(f"baseline {cfg.sim.baseline} over seeds {report['eval_seeds']}:")
    for key, value in report["aggregate"].items():
        print(f"  {key:<26} {value if value is not None else 'n/a'}")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# compare

# metric -> True when larger is better
COMPARE_DIRECTIONS = {
    "accept_rate_overall": True,
    "accept_rate_passenger": True,
    "accept_rate_goods": True,
    "fuel_cost_per_delivery": False,
    "active_vehicle_ratio": False,
    "mean_wait_minutes": False,
    "effective_distance_ratio": True,
}


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        try:
            with open(path) as fh:
                reports.append(json.load(fh))
        except FileNotFoundError:
            return _fail(f"report not found: {path}")
        except json.JSONDecodeError as exc:
            return _fail(f"unreadable report {path}: {exc}")
    base = reports[0]
    comparison = {"reference": base["baseline"], "metrics": {}}
    name_width = max(len(m) for m in COMPARE_DIRECTIONS)
    header = f"{'metric':<{name_width}}  " + "  ".join(f"{r['baseline']:>14}" for r in reports)
    lines = [header]
    for metric, bigger_is_better in COMPARE_DIRECTIONS.items():
        values = [r["aggregate"].get(metric) for r in reports]
        deltas = [None if (v is None or values[0] is None) else v - values[0] for v in values]
        usable = [(v, r["baseline"]) for v, r in zip(values, reports) if v is not None]
        best = (max(usable)[1] if bigger_is_better else min(usable)[1]) if usable else None
        comparison["metrics"][metric] = {
            "values": {r["baseline"]: v for r, v in zip(reports, values)},
            "delta_vs_reference": {r["baseline"]: d for r, d in zip(reports, deltas)},
            "direction": "higher_better" if bigger_is_better else "lower_better",
            "best": best,
        }
        cells = "  ".join("           n/a" if v is None else f"{v:>14.4f}" for v in values)
        lines.append(f"{metric:<{name_width}}  {cells}  -> best: {best}")
    table = "\n".join(lines)
    print(table)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "compare.json"), "w") as fh:
            json.dump(comparison, fh, indent=2, sort_keys=True)
        print(f"wrote {os.path.join(args.out, 'compare.json')}")
    return 0


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        return _fail(f"config file not found: {args.config}")
    cfg = _apply_overrides(cfg, args)
    ticks = args.ticks or cfg.sim.episode_ticks
    requests = generate_workload(cfg.sim, ticks)
    write_trip_records(args.out, requests)
    print(f"wrote {len(requests)} requests over {ticks} ticks to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopfleet",
                                     description="fleet dispatch simulator and trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a dispatch policy")
    train.add_argument("--config", required=True)
    train.add_argument("--seed", type=int)
    train.add_argument("--out")
    train.add_argument("--checkpoint", help="resume from this checkpoint")
    train.add_argument("--ticks", type=int)
    train.add_argument("--baseline", choices=BASELINES)
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a frozen policy")
    ev.add_argument("--config", required=True)
    ev.add_argument("--checkpoint")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out")
    ev.add_argument("--ticks", type=int)
    ev.add_argument("--baseline", choices=BASELINES)
    ev.set_defaults(func=cmd_eval)

    cp = sub.add_parser("compare", help="compare metric reports")
    cp.add_argument("reports", nargs="+")
    cp.add_argument("--out")
    cp.set_defaults(func=cmd_compare)

    gen = sub.add_parser("gen-data", help="write a synthetic trip-record CSV")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--ticks", type=int)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
