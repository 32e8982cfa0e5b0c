"""Command-line entry point: ``savn generate|train|eval|diagnose``.

Experiments are described by one JSON config; flat flags override fields.
Relative output directories resolve under ``$SAVN_OUTPUT_ROOT`` when set.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import checkpoint
from .env import EnvConfig, Scene, check_disjoint, generate_scene, make_task_set
from .evaluation import compare, evaluate, report, rows_to_csv, rows_to_json, task_fingerprint
from .model import NetworkConfig, param_shapes
from .trainer import (
    EpisodeRunner,
    NearestNeighborAgent,
    NetworkAgent,
    RandomAgent,
    TaskSampler,
    TrainerConfig,
    build_nn_index,
    grad_similarity_diagnostic,
    network_for,
    train,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUTPUT_ROOT_ENV = "SAVN_OUTPUT_ROOT"
SPLITS = ("train", "val", "test")

log = logging.getLogger("savn")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config


@dataclasses.dataclass
class ExperimentConfig:
    env: EnvConfig
    network: dict  # embed_dim, hidden_dim
    trainer: TrainerConfig
    evaluation: dict
    splits: dict  # name -> [start, stop) scene-seed range
    targets: list | None
    output_dir: Path
    seed: int

    def seeds(self, split: str) -> list:
        start, stop = self.splits[split]
        return list(range(start, stop))

    def net_config(self, tcfg: TrainerConfig | None = None) -> NetworkConfig:
        return network_for(self.env, tcfg or self.trainer, **self.network)


DEFAULTS = {
    "env": {},
    "network": {"embed_dim": 64, "hidden_dim": 64},
    "trainer": {},
    "evaluation": {"episodes": 1000, "seed": 0, "buckets": 10, "threshold": 5},
    "splits": {"train": [0, 20], "val": [100, 105], "test": [200, 205]},
    "targets": None,
    "output_dir": "savn_runs",
    "seed": 0,
}

# flag name -> (section, field)
FLAG_ALIASES = {
    "loss": ("trainer", "interaction_loss_kind"),
    "episodes": ("trainer", "total_episodes"),
    "gt_object": ("trainer", "gt_object_termination"),
    "embed_dim": ("network", "embed_dim"),
    "hidden_dim": ("network", "hidden_dim"),
}


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    raw = json.loads(json.dumps(DEFAULTS))
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for key, value in user.items():
            if isinstance(raw.get(key), dict) and isinstance(value, dict):
                raw[key].update(value)
            else:
                raw[key] = value
    for (section, field), value in overrides.items():
        if section is None:
            raw[field] = value
        else:
            raw[section][field] = value
    try:
        env = EnvConfig.from_dict(raw["env"])
        trainer = TrainerConfig.from_dict(raw["trainer"])
        splits = {k: [int(v[0]), int(v[1])] for k, v in raw["splits"].items()}
        missing = set(SPLITS) - set(splits)
        if missing:
            raise ValueError(f"missing splits: {sorted(missing)}")
        check_disjoint(**{k: range(*v) for k, v in splits.items()})
        unknown_net = set(raw["network"]) - {"embed_dim", "hidden_dim"}
        if unknown_net:
            raise ValueError(f"unknown network fields: {sorted(unknown_net)}")
        cfg = ExperimentConfig(
            env=env,
            network={k: int(v) for k, v in raw["network"].items()},
            trainer=trainer,
            evaluation=raw["evaluation"],
            splits=splits,
            targets=raw["targets"],
            output_dir=resolve_output(raw["output_dir"]),
            seed=int(raw["seed"]),
        )
        cfg.net_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def resolve_output(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def config_dict(cfg: ExperimentConfig) -> dict:
    return {
        "env": dataclasses.asdict(cfg.env),
        "network": cfg.network,
        "trainer": cfg.trainer.to_dict(),
        "evaluation": cfg.evaluation,
        "splits": cfg.splits,
        "targets": cfg.targets,
        "seed": cfg.seed,
    }


def write_sidecar(directory: Path, command: str, started: float, extra: dict | None = None):
    """Timestamps and host details, kept apart from deterministic artifacts."""
    meta = {
        "command": command,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "seconds": round(time.time() - started, 3),
        "host": platform.node(),
        "python": platform.python_version(),
        "argv": sys.argv,
    }
    meta.update(extra or {})
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{command}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --------------------------------------------------------------- fixtures


def scene_path(out: Path, split: str, seed: int) -> Path:
    return out / "scenes" / split / f"scene_{seed}.json"


def load_scenes(cfg: ExperimentConfig, split: str) -> list:
    scenes = []
    for seed in cfg.seeds(split):
        p = scene_path(cfg.output_dir, split, seed)
        if not p.exists():
            raise ConfigError(f"missing scene fixture {p}; run 'savn generate' first")
        scenes.append(Scene.from_json(p.read_text()))
    return scenes


def task_set(cfg: ExperimentConfig, split: str, episodes: int, seed: int) -> list:
    scenes = load_scenes(cfg, split)
    if not scenes:
        raise ConfigError(f"split {split!r} has no scenes")
    per_scene = math.ceil(episodes / len(scenes))
    by_seed = {s.seed: s for s in scenes}
    return make_task_set(list(by_seed), cfg.targets, per_scene, seed, cfg.env, by_seed)[:episodes]


# ---------------------------------------------------------------- commands


def cmd_generate(cfg: ExperimentConfig, args) -> int:
    started = time.time()
    out = cfg.output_dir
    entries = []
    for split in SPLITS:
        for seed in cfg.seeds(split):
            scene = generate_scene(seed, cfg.env)
            data = (scene.to_json() + "\n").encode()
            path = scene_path(out, split, seed)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            entries.append({"split": split, "seed": seed, "file": str(path.relative_to(out)), "sha256": sha256_bytes(data)})
    manifest = {"count": len(entries), "env": dataclasses.asdict(cfg.env), "scenes": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    write_sidecar(out / "meta", "generate", started)
    print(f"wrote {len(entries)} scenes to {out}")
    return EXIT_OK


def parse_inner_updates(spec: str | None) -> list | None:
    if spec is None:
        return None
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in spec.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad --inner-updates value {spec!r}") from exc
    if not values:
        raise ConfigError("--inner-updates is empty")
    return values


def run_training(cfg: ExperimentConfig, tcfg: TrainerConfig, run_dir: Path, name: str) -> dict:
    started = time.time()
    run_dir.mkdir(parents=True, exist_ok=True)
    net = cfg.net_config(tcfg)
    scenes = load_scenes(cfg, "train")
    sampler = TaskSampler(scenes, cfg.targets, cfg.env)
    val_tasks = None
    if tcfg.val_every:
        val_tasks = task_set(cfg, "val", tcfg.val_episodes, cfg.seed + 1)
    header = {
        "env": dataclasses.asdict(cfg.env),
        "network": net.to_dict(),
        "trainer": tcfg.to_dict(),
        "agent": tcfg.tag,
        "name": name,
    }

    def save(path: Path, theta, phi, extra=None):
        groups = {"theta": theta} if phi is None else {"theta": theta, "phi": phi}
        checkpoint.save(path, groups, {**header, **(extra or {})})

    def on_validation(episode, score, theta, phi, is_best):
        save(run_dir / f"val_{episode:07d}.ckpt", theta, phi, {"episode": episode, "val_success": score})

    with open(run_dir / "train_log.jsonl", "w") as fh:
        fh.write(json.dumps({"header": header}) + "\n")
        result = train(sampler, cfg.env, net, tcfg, val_tasks=val_tasks, log_file=fh, on_validation=on_validation)
    save(run_dir / "best.ckpt", result.theta, result.phi, {"episode": result.best_episode, "val_success": result.best_val_success})
    save(run_dir / "final.ckpt", result.final_theta, result.final_phi, {"episode": tcfg.total_episodes})
    write_sidecar(run_dir, "train", started)
    episodes = [r for r in result.log if "episode" in r]
    summary = {
        "name": name,
        "agent": tcfg.tag,
        "episodes": len(episodes),
        "train_success_last100": float(np.mean([r["success"] for r in episodes[-100:]])) if episodes else None,
        "best_val_success": result.best_val_success,
    }
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def cmd_train(cfg: ExperimentConfig, args) -> int:
    sweep = parse_inner_updates(args.inner_updates)
    base = cfg.output_dir / "runs" / (args.name or cfg.trainer.tag)
    if sweep is None:
        print(json.dumps(run_training(cfg, cfg.trainer, base, args.name or cfg.trainer.tag)))
        return EXIT_OK
    for n in sweep:
        try:
            tcfg = cfg.trainer.replace(max_inner_updates=n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        print(json.dumps(run_training(cfg, tcfg, base / f"inner_updates_{n}", f"{base.name}/inner_updates_{n}")))
    return EXIT_OK


def agent_from_checkpoint(cfg: ExperimentConfig, path: str, gt_object: bool, inner_updates: int | None):
    try:
        groups, header = checkpoint.load(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"checkpoint not found: {path}") from exc
    except checkpoint.CheckpointError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        env = EnvConfig.from_dict(header["env"])
        net = NetworkConfig.from_dict(header["network"])
        tcfg = TrainerConfig.from_dict(header["trainer"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: incompatible checkpoint header ({exc})") from exc
    if env != cfg.env:
        raise ConfigError(f"{path}: checkpoint environment differs from the experiment config")
    theta = groups.get("theta")
    if theta is None or theta.shapes != param_shapes(net):
        raise ConfigError(f"{path}: parameter vector does not match its network config")
    overrides = {}
    if gt_object:
        overrides["gt_object_termination"] = True
    if inner_updates is not None:
        overrides["max_inner_updates"] = inner_updates
    if overrides:
        tcfg = tcfg.replace(**overrides)
    return theta, groups.get("phi"), net, tcfg


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    started = time.time()
    ecfg = cfg.evaluation
    episodes = int(args.eval_episodes or ecfg.get("episodes", 1000))
    seed = int(args.eval_seed if args.eval_seed is not None else ecfg.get("seed", 0))
    buckets = int(ecfg.get("buckets", 10))
    split = args.split
    tasks = task_set(cfg, split, episodes, seed)
    fp = task_fingerprint(tasks)
    gt = cfg.trainer.gt_object_termination
    max_steps = cfg.trainer.max_episode_steps
    runs: dict = {}
    curves: dict = {}
    reports: dict = {}

    def record(name, results):
        runs.setdefault(name, []).append((fp, results))
        rep = report(results, buckets, int(ecfg.get("threshold", 5)))
        reports.setdefault(name, []).append(rep.to_dict())
        curves.setdefault(name, []).append(rep.failed_ratio_curve)

    for spec in args.checkpoint or []:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).parent.name
        theta, phi, net, tcfg = agent_from_checkpoint(cfg, path, gt, args.inner_updates)
        if tcfg.adapts:
            record(name, evaluate(NetworkAgent(theta, phi, net, cfg.env, tcfg, adapt=True), tasks, cfg.env, seed))
            record(f"{name}-noadapt", evaluate(NetworkAgent(theta, phi, net, cfg.env, tcfg, adapt=False), tasks, cfg.env, seed))
        else:
            record(name, evaluate(NetworkAgent(theta, phi, net, cfg.env, tcfg, adapt=False), tasks, cfg.env, seed))
    for kind in args.agent or []:
        if kind == "random":
            agent = RandomAgent(cfg.env, max_steps, gt)
        elif kind == "nearest_neighbor":
            agent = NearestNeighborAgent(build_nn_index(load_scenes(cfg, "train"), cfg.targets, cfg.env), cfg.env, max_steps, gt)
        else:
            raise ConfigError(f"unknown agent {kind!r}")
        record(kind, evaluate(agent, tasks, cfg.env, seed))
    if not runs:
        raise ConfigError("nothing to evaluate: pass --checkpoint and/or --agent")

    rows = compare(runs, split)
    out = Path(args.out) if args.out else cfg.output_dir / "eval" / split
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(rows_to_csv(rows))
    (out / "comparison.json").write_text(rows_to_json(rows) + "\n")
    (out / "failed_action_curves.json").write_text(json.dumps(curves, indent=2) + "\n")
    (out / "reports.json").write_text(json.dumps(reports, indent=2) + "\n")
    write_sidecar(out, "eval", started, {"task_fingerprint": fp})
    sys.stdout.write(rows_to_csv(rows))
    return EXIT_OK


def cmd_diagnose(cfg: ExperimentConfig, args) -> int:
    started = time.time()
    theta, phi, net, tcfg = agent_from_checkpoint(cfg, args.checkpoint, False, None)
    if not tcfg.adapts:
        raise ConfigError("diagnose needs a checkpoint trained with an interaction loss")
    n = int(args.n_episodes)
    inners, cosines = [], []
    if n > 0:
        runner = EpisodeRunner(net, cfg.env, tcfg)
        tasks = task_set(cfg, args.split, n, cfg.seed)
        for i, task in enumerate(tasks):
            out = runner.run(theta, phi, task, np.random.default_rng([cfg.seed, i]), mode="train")
            d = grad_similarity_diagnostic(runner, out)
            if d["inner"] is not None:
                inners.append(d["inner"])
            if d["cosine"] is not None:
                cosines.append(d["cosine"])
    rep = {
        "n_episodes": n,
        "n_measured": len(inners),
        "mean_inner": float(np.mean(inners)) if inners else None,
        "mean_cosine": float(np.mean(cosines)) if cosines else None,
        "inner": inners,
        "cosine": cosines,
    }
    out = Path(args.out) if args.out else cfg.output_dir / "diagnose"
    out.mkdir(parents=True, exist_ok=True)
    (out / "gradient_similarity.json").write_text(json.dumps(rep, indent=2) + "\n")
    write_sidecar(out, "diagnose", started)
    print(json.dumps({k: rep[k] for k in ("n_episodes", "n_measured", "mean_inner", "mean_cosine")}))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_override_flags(p: argparse.ArgumentParser, skip=()):
    g = p.add_argument_group("overrides")
    aliased = {field for _, field in FLAG_ALIASES.values()} | set(skip)
    for f in dataclasses.fields(TrainerConfig):
        if f.name in aliased:
            continue
        kind = {int: int, float: float, bool: _bool, str: str}.get(type(f.default), str)
        g.add_argument("--" + f.name.replace("_", "-"), dest=f"ov__trainer__{f.name}", type=kind, default=None, metavar="V")
    for f in dataclasses.fields(EnvConfig):
        kind = {int: int, float: float}.get(type(f.default), float)
        g.add_argument("--env-" + f.name.replace("_", "-"), dest=f"ov__env__{f.name}", type=kind, default=None, metavar="V")
    g.add_argument("--loss", dest="ov__trainer__interaction_loss_kind", choices=["learned", "diversity", "prediction", "none"])
    g.add_argument("--episodes", dest="ov__trainer__total_episodes", type=int, metavar="N")
    g.add_argument("--gt-object", dest="ov__trainer__gt_object_termination", action="store_const", const=True)
    g.add_argument("--embed-dim", dest="ov__network__embed_dim", type=int, metavar="N")
    g.add_argument("--hidden-dim", dest="ov__network__hidden_dim", type=int, metavar="N")
    g.add_argument("--output-dir", dest="ov____output_dir", metavar="DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="savn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, skip=()):
        p.add_argument("--config", help="experiment JSON file")
        _add_override_flags(p, skip)

    p = sub.add_parser("generate", help="write scene fixtures and a manifest")
    common(p)

    p = sub.add_parser("train", help="meta-train an agent (or a baseline)")
    common(p)
    p.add_argument("--name", help="run directory name (default: agent tag)")
    p.add_argument("--inner-updates", help="cap on inner updates: N, a list 'a,b', or a sweep 'lo..hi'")

    p = sub.add_parser("eval", help="evaluate checkpoints and baseline agents on a held-out split")
    common(p, skip=("agent",))
    p.add_argument("--checkpoint", action="append", help="[name=]path; repeat a name to aggregate training seeds")
    p.add_argument("--agent", action="append", choices=["random", "nearest_neighbor"])
    p.add_argument("--split", default="test", choices=SPLITS)
    p.add_argument("--eval-episodes", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--inner-updates", type=int, help="override the inner-update cap at evaluation")
    p.add_argument("--out")

    p = sub.add_parser("diagnose", help="gradient similarity of interaction and navigation losses")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-episodes", type=int, default=20)
    p.add_argument("--split", default="train", choices=SPLITS)
    p.add_argument("--out")
    return parser


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    for key, value in vars(args).items():
        if key.startswith("ov__") and value is not None:
            _, section, field = key.split("__", 2)
            overrides[(section or None, field)] = value
    try:
        if args.command == "train" and args.inner_updates is not None:
            values = parse_inner_updates(args.inner_updates)
            if len(values) == 1:
                overrides[("trainer", "max_inner_updates")] = values[0]
                args.inner_updates = None
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported and mapped to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
