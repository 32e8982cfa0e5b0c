"""Navigation tasks: (scene, target class, initial pose)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .generation import generate_scene
from .gridworld import NUM_HEADINGS, EnvConfig, Pose, Scene, success_check
from .paths import shortest_path_length


@dataclass(frozen=True)
class Task:
    scene: Scene
    target: int
    pose: Pose

    @property
    def key(self) -> tuple:
        return (self.scene.seed, self.target, tuple(self.pose))

    def optimal_length(self, cfg: EnvConfig) -> int:
        return shortest_path_length(self.scene, self.pose, self.target, cfg)


def check_disjoint(**splits: Iterable[int]) -> None:
    """Raise if any two named seed collections share a scene seed."""
    seen = {}
    for name, seeds in splits.items():
        for s in seeds:
            if s in seen and seen[s] != name:
                raise ValueError(f"scene seed {s} appears in both '{seen[s]}' and '{name}'")
            seen[s] = name


def sample_task(scene: Scene, targets: Sequence[int] | None, rng: np.random.Generator, cfg: EnvConfig) -> Task:
    present = scene.classes_present()
    choices = [t for t in present if targets is None or t in targets]
    if not choices:
        raise ValueError(f"scene {scene.seed} holds none of the targets {targets}")
    target = int(choices[int(rng.integers(len(choices)))])
    cells = scene.walkable_cells()
    while True:
        r, c = cells[int(rng.integers(len(cells)))]
        pose = Pose(r, c, int(rng.integers(NUM_HEADINGS)))
        if not success_check(scene, pose, target, cfg):
            return Task(scene, target, pose)


def make_task_set(
    scene_seeds: Iterable[int],
    targets: Sequence[int] | None,
    episodes_per_scene: int,
    rng_seed: int,
    cfg: EnvConfig,
    scenes: dict | None = None,
) -> list:
    """Reproducible task list; initial poses never already satisfy success.

    ``scenes`` optionally maps seed -> pre-built scene (e.g. loaded fixtures).
    """
    rng = np.random.default_rng(rng_seed)
    tasks = []
    for seed in scene_seeds:
        scene = scenes[seed] if scenes is not None and seed in scenes else generate_scene(seed, cfg)
        for _ in range(episodes_per_scene):
            tasks.append(sample_task(scene, targets, rng, cfg))
    return tasks
