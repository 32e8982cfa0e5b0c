"""Scaled-down directional experiment: SAVN (learned loss) vs A3C, plus the
inner-update ablation.

    python3 benchmarks/directional.py [--seeds 5] [--episodes N] [--quick]

Trains every (model, seed) on the train scenes, keeps the best checkpoint on
the validation scenes, and evaluates on unseen test scenes. Each finished run
is cached as JSON under results/directional_runs/ so an interrupted sweep
resumes where it stopped. The summary goes to results/directional.json and
results/directional.csv.

The ablation trains SAVN with 0..4 allowed inner updates (train and test).
With 0 updates the run is identical to A3C under the same seed, so the A3C
runs are reused for that point.
"""
import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

import numpy as np

from savn.env import EnvConfig, generate_scene, make_task_set
from savn.evaluation import EpisodeResult, compare, evaluate, failed_action_curve, report, rows_to_csv, task_fingerprint
from savn.trainer import NetworkAgent, TaskSampler, TrainerConfig, network_for, train

HERE = Path(__file__).resolve().parent
RESULTS = HERE / "results"

ENV = EnvConfig(width=8, height=8, num_classes=1, wall_density=0.15, window=5)
HIDDEN = 32
TRAIN_SCENES = list(range(0, 20))
VAL_SCENES = list(range(100, 105))
TEST_SCENES = list(range(200, 205))
EVAL_PER_SCENE = 200
BASE = dict(
    alpha=0.01,
    beta1=3e-3,
    beta2=3e-3,
    k=6,
    max_episode_steps=40,
    total_episodes=10000,
    val_every=1000,
    val_episodes=100,
)


def trainer_config(model: str, seed: int, episodes: int, inner: int = 4) -> TrainerConfig:
    if model == "a3c":
        return TrainerConfig(agent="a3c", interaction_loss_kind="none", seed=seed, **{**BASE, "total_episodes": episodes})
    return TrainerConfig(agent="savn", interaction_loss_kind="learned", max_inner_updates=inner, seed=seed,
                         **{**BASE, "total_episodes": episodes})


def run_one(name, tcfg, scenes, val_tasks, test_tasks, cache: Path) -> dict:
    path = cache / f"{name}_seed{tcfg.seed}.json"
    if path.exists():
        data = json.loads(path.read_text())
        if data["trainer"] == tcfg.to_dict():
            return data
    net = network_for(ENV, tcfg, HIDDEN, HIDDEN)
    t0 = time.time()
    res = train(TaskSampler(scenes, None, ENV), ENV, net, tcfg, val_tasks=val_tasks)
    train_s = time.time() - t0
    out = {"name": name, "trainer": tcfg.to_dict(), "train_seconds": round(train_s, 1), "best_episode": res.best_episode,
           "best_val_success": res.best_val_success,
           "val_curve": [r["val_success"] for r in res.log if "validation" in r]}
    evals = {"adapt": NetworkAgent(res.theta, res.phi, net, ENV, tcfg, adapt=True)}
    if tcfg.adapts:
        evals["noadapt"] = NetworkAgent(res.theta, res.phi, net, ENV, tcfg, adapt=False)
    for key, agent in evals.items():
        results = evaluate(agent, test_tasks, ENV, seed=0)
        out[key] = {"report": report(results).to_dict(), "results": [r.to_dict() for r in results]}
    out["eval_seconds"] = round(time.time() - t0 - train_s, 1)
    path.write_text(json.dumps(out) + "\n")
    print(f"{name} seed {tcfg.seed}: val {res.best_val_success} test success {out['adapt']['report']['success_rate']:.3f} "
          f"({train_s:.0f}s train, {out['eval_seconds']:.0f}s eval)", flush=True)
    return out


def as_results(run, key="adapt"):
    return [EpisodeResult(**{**r, "failed": tuple(r["failed"])}) for r in run[key]["results"]]


def summarize(runs, fp):
    rows = compare({name: [(fp, res) for res in seeds] for name, seeds in runs.items()}, "test")
    out = {}
    for row in rows:
        seeds = runs[row["model"]]
        curves = [failed_action_curve(res) for res in seeds]
        mean_curve = [None if any(c[b] is None for c in curves) else float(np.mean([c[b] for c in curves])) for b in range(len(curves[0]))]
        out[row["model"]] = {
            "success_mean": row["success"],
            "success_std": row["std_success"],
            "spl_mean": row["spl"],
            "spl_std": row["std_spl"],
            "success_L5": row["success_L5"],
            "spl_L5": row["spl_L5"],
            "n_seeds": row["seed_count"],
            "n_episodes": row["n_episodes"],
            "per_seed_success": [float(np.mean([r.success for r in res])) for res in seeds],
            "failed_action_curve": mean_curve,
        }
    return rows, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=BASE["total_episodes"])
    ap.add_argument("--ablation", default="0..4", help="inner-update settings, 'lo..hi' or 'a,b'")
    ap.add_argument("--quick", action="store_true", help="tiny smoke run into a scratch directory")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING)
    out_dir = RESULTS / ("directional_quick" if args.quick else "")
    cache = out_dir / "directional_runs"
    cache.mkdir(parents=True, exist_ok=True)
    seeds = list(range(2 if args.quick else args.seeds))
    episodes = 50 if args.quick else args.episodes
    per_scene = 4 if args.quick else EVAL_PER_SCENE
    if ".." in args.ablation:
        lo, hi = args.ablation.split("..")
        ablation = list(range(int(lo), int(hi) + 1))
    else:
        ablation = [int(v) for v in args.ablation.split(",")]

    scenes = [generate_scene(s, ENV) for s in TRAIN_SCENES]
    val_tasks = make_task_set(VAL_SCENES, None, BASE["val_episodes"] // len(VAL_SCENES), 1, ENV)
    test_tasks = make_task_set(TEST_SCENES, None, per_scene, 2, ENV)
    fp = task_fingerprint(test_tasks)
    t0 = time.time()

    main_runs = {"savn": [], "a3c": [], "savn_noadapt": []}
    ablation_runs = {n: [] for n in ablation}
    for seed in seeds:
        a3c = run_one("a3c", trainer_config("a3c", seed, episodes), scenes, val_tasks, test_tasks, cache)
        savn = run_one("savn_inner4", trainer_config("savn", seed, episodes, 4), scenes, val_tasks, test_tasks, cache)
        main_runs["a3c"].append(as_results(a3c))
        main_runs["savn"].append(as_results(savn))
        main_runs["savn_noadapt"].append(as_results(savn, "noadapt"))
        for n in ablation:
            if n == 0:
                run = a3c
            elif n == 4:
                run = savn
            else:
                run = run_one(f"savn_inner{n}", trainer_config("savn", seed, episodes, n), scenes, val_tasks, test_tasks, cache)
            ablation_runs[n].append(as_results(run))

    rows, models = summarize(main_runs, fp)
    _, abl = summarize({str(n): r for n, r in ablation_runs.items()}, fp)
    summary = {
        "config": {
            "env": dataclasses.asdict(ENV),
            "hidden_dim": HIDDEN,
            "embed_dim": HIDDEN,
            "trainer": {**BASE, "total_episodes": episodes},
            "train_scenes": TRAIN_SCENES,
            "val_scenes": VAL_SCENES,
            "test_scenes": TEST_SCENES,
            "eval_per_scene": per_scene,
            "seeds": seeds,
            "task_fingerprint": fp,
            "ablation_note": "0 inner updates reuses the A3C runs (identical under the same seed)",
        },
        "models": models,
        "ablation": abl,
        "wall_seconds": round(time.time() - t0, 1),
    }
    (out_dir / "directional.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out_dir / "directional.csv").write_text(rows_to_csv(rows))
    for name, m in models.items():
        print(f"{name:13s} success {m['success_mean']:.3f}±{m['success_std']:.3f}  spl {m['spl_mean']:.3f}±{m['spl_std']:.3f}")
    print("ablation:", {n: round(m["success_mean"], 3) for n, m in abl.items()})


if __name__ == "__main__":
    main()
