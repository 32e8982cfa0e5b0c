"""Procedural scene generation."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .gridworld import EnvConfig, Scene

MAX_RETRIES = 64
_EIGHT = np.ones((3, 3), dtype=int)


class SceneGenerationError(RuntimeError):
    pass


def _connected(mask: np.ndarray) -> bool:
    _, n = ndimage.label(mask, structure=_EIGHT)
    return n == 1


def _largest_component(free: np.ndarray) -> np.ndarray:
    labels, n = ndimage.label(free, structure=_EIGHT)
    if n == 0:
        return free
    counts = np.bincount(labels.ravel())[1:]
    return labels == (int(np.argmax(counts)) + 1)


def generate_scene(seed: int, cfg: EnvConfig) -> Scene:
    """Walls on the border plus random interior walls, objects on free cells.

    Free space (cells that are neither wall nor object) is 8-connected, since
    moves along diagonal headings step diagonally. Identical seed and config
    give an identical scene.
    """
    cfg.validate()
    rng = np.random.default_rng(int(seed))
    H, W = cfg.height, cfg.width
    need = cfg.num_classes * cfg.min_instances
    for _ in range(MAX_RETRIES):
        walls = np.ones((H, W), dtype=bool)
        walls[1:-1, 1:-1] = rng.random((H - 2, W - 2)) < cfg.wall_density
        free = _largest_component(~walls)
        walls = ~free
        if free.sum() < need + 2:
            continue
        objects = _place_objects(rng, walls, cfg)
        if objects is None:
            continue
        walls.flags.writeable = False
        return Scene(W, H, walls, tuple(objects), int(seed), cfg.num_classes)
    raise SceneGenerationError(
        f"could not place {need} objects in connected free space (seed={seed}, density={cfg.wall_density})"
    )


def _place_objects(rng, walls, cfg):
    walkable = ~walls
    objects = []
    for cls in range(cfg.num_classes):
        for _ in range(cfg.min_instances):
            cells = np.argwhere(walkable)
            placed = False
            for idx in rng.permutation(len(cells)):
                r, c = cells[idx]
                walkable[r, c] = False
                neighbours = walkable[r - 1 : r + 2, c - 1 : c + 2]
                if neighbours.any() and _connected(walkable):
                    objects.append((cls, int(r), int(c)))
                    placed = True
                    break
                walkable[r, c] = True
            if not placed:
                return None
    return objects
