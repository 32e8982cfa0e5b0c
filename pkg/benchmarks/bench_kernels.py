"""Compiled vs pure-Python kernels, per kernel and end to end.

    python3 benchmarks/bench_kernels.py [--repeat N] [--out results/kernels.json]

The end-to-end number trains 100 meta-learning episodes in a subprocess per
backend (the backend is fixed at import, so SAVN_KERNELS selects it).
"""
import argparse
import json
import os
import subprocess
import sys
import timeit
from pathlib import Path

import numpy as np

from savn.env import EnvConfig, generate_scene, window_offsets
from savn.env.paths import goal_mask
from savn.kernels import _pykernels as py

try:
    from savn.kernels import _ckernels as cy
except ImportError:
    cy = None

E2E = """
import time
from savn.env import EnvConfig, generate_scene
from savn.kernels import BACKEND
from savn.trainer import TaskSampler, TrainerConfig, network_for, train
env = EnvConfig(width=9, height=9, num_classes=2, wall_density=0.2)
scenes = [generate_scene(s, env) for s in range(4)]
t = TrainerConfig(total_episodes=100, max_episode_steps=30, alpha=0.01, seed=0)
net = network_for(env, t, 32, 32)
t0 = time.perf_counter()
train(TaskSampler(scenes, None, env), env, net, t)
print(BACKEND, time.perf_counter() - t0)
"""


def kernel_cases():
    rng = np.random.default_rng(0)
    H, I = 64, 64
    W = rng.normal(size=(4 * H, I + H))
    b, x, h, c = rng.normal(size=4 * H), rng.normal(size=I), rng.normal(size=H), rng.normal(size=H)
    cfg = EnvConfig(width=15, height=15)
    scene = generate_scene(0, cfg)
    offs = window_offsets(cfg.window)
    walk = np.ascontiguousarray(scene.walkable, dtype=np.uint8)
    goal = goal_mask(scene, scene.classes_present()[0], cfg)
    r, cc = scene.walkable_cells()[0]

    def cases(mod):
        gates, c_new, _ = mod.lstm_forward(W, b, x, h, c)
        return {
            "lstm_forward": lambda: mod.lstm_forward(W, b, x, h, c),
            "lstm_backward": lambda: mod.lstm_backward(W, x, h, c, gates, c_new, h, c),
            "observe_codes": lambda: mod.observe_codes(scene._walls_u8, scene.object_grid, r, cc, 3, offs),
            "bfs_distances": lambda: mod.bfs_distances(walk, goal),
        }

    return cases


def time_call(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def end_to_end(backend):
    env = dict(os.environ, SAVN_KERNELS=backend)
    out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
    name, seconds = out.stdout.split()
    return name, float(seconds)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    cases = kernel_cases()
    rows = {}
    py_cases = cases(py)
    cy_cases = cases(cy) if cy is not None else {}
    for name, fn in py_cases.items():
        t_py = time_call(fn, args.repeat)
        t_cy = time_call(cy_cases[name], args.repeat) if cy_cases else None
        rows[name] = {"python_us": t_py * 1e6, "cython_us": None if t_cy is None else t_cy * 1e6}
        speed = "n/a" if t_cy is None else f"{t_py / t_cy:6.1f}x"
        print(f"{name:15s} python {t_py * 1e6:9.1f} us   cython {'-' if t_cy is None else f'{t_cy * 1e6:9.1f}'} us   {speed}")
    e2e = {}
    for backend in ("python", "cython") if cy is not None else ("python",):
        name, sec = end_to_end(backend)
        e2e[name] = sec
        print(f"end-to-end 100 meta-training episodes [{name}]: {sec:.2f} s")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(json.dumps({"kernels": rows, "end_to_end_s": e2e}, indent=2) + "\n")


if __name__ == "__main__":
    main()
