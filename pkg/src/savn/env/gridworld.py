"""Grid scenes, egocentric observations and navigation dynamics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np

from .. import kernels

HEADING_STEPS = kernels.HEADING_STEPS
NUM_HEADINGS = 8


class Action(IntEnum):
    MOVE_AHEAD = 0
    ROTATE_LEFT = 1
    ROTATE_RIGHT = 2
    DONE = 3


NUM_ACTIONS = len(Action)


@dataclass(frozen=True)
class EnvConfig:
    width: int = 11
    height: int = 11
    wall_density: float = 0.25
    num_classes: int = 4
    min_instances: int = 1
    window: int = 5
    success_distance: int = 1
    fov_degrees: float = 90.0
    eps_g: float = 0.0
    step_reward: float = -0.01
    success_reward: float = 5.0

    def validate(self):
        if self.width < 5 or self.height < 5:
            raise ValueError("scene width and height must be at least 5")
        if not 0.0 <= self.wall_density <= 0.4:
            raise ValueError("wall_density must lie in [0, 0.4]")
        if self.num_classes < 1 or self.min_instances < 1:
            raise ValueError("need at least one object class and instance")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd number")
        return self

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.window, self.num_classes)

    @classmethod
    def from_dict(cls, d) -> "EnvConfig":
        return cls(**d).validate()


def observation_dim(window: int, num_classes: int) -> int:
    """Window cells x (3 terrain codes + classes), one depth value, target one-hot."""
    return window * window * (3 + num_classes) + 1 + num_classes


class Pose(NamedTuple):
    row: int
    col: int
    heading: int


@dataclass(frozen=True)
class Scene:
    width: int
    height: int
    walls: np.ndarray = field(repr=False)
    objects: tuple  # ((class, row, col), ...)
    seed: int
    num_classes: int

    @cached_property
    def object_grid(self) -> np.ndarray:
        grid = np.full((self.height, self.width), -1, dtype=np.int32)
        for cls, r, c in self.objects:
            grid[r, c] = cls
        return grid

    @cached_property
    def walkable(self) -> np.ndarray:
        return np.ascontiguousarray(~self.walls & (self.object_grid < 0))

    @cached_property
    def _walls_u8(self) -> np.ndarray:
        return np.ascontiguousarray(self.walls, dtype=np.uint8)

    @cached_property
    def distance_cache(self) -> dict:
        return {}

    def classes_present(self) -> list:
        return sorted({cls for cls, _, _ in self.objects})

    def instances(self, cls: int) -> list:
        return [(r, c) for o, r, c in self.objects if o == cls]

    def walkable_cells(self) -> list:
        return [tuple(map(int, rc)) for rc in zip(*np.nonzero(self.walkable))]

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        grid = ["".join("#" if w else "." for w in row) for row in self.walls]
        return {
            "width": self.width,
            "height": self.height,
            "seed": int(self.seed),
            "num_classes": self.num_classes,
            "grid": grid,
            "objects": [[int(o), int(r), int(c)] for o, r, c in self.objects],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "Scene":
        walls = np.array([[ch == "#" for ch in row] for row in d["grid"]], dtype=bool)
        if walls.shape != (d["height"], d["width"]):
            raise ValueError("grid rows do not match the declared size")
        walls.flags.writeable = False
        objects = tuple((int(o), int(r), int(c)) for o, r, c in d["objects"])
        return cls(d["width"], d["height"], walls, objects, int(d["seed"]), int(d["num_classes"]))

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = object.__hash__


@dataclass(frozen=True)
class StepOutcome:
    new_pose: Pose
    action_failed: bool
    episode_done: bool
    success: bool
    reward: float


@lru_cache(maxsize=None)
def window_offsets(window: int) -> np.ndarray:
    """World (drow, dcol) offsets of each egocentric window cell per heading.

    The agent sits at the bottom-centre cell looking up; rows further up are
    further ahead. Diagonal headings use the rotated grid rounded to cells.
    """
    table = np.empty((NUM_HEADINGS, window, window, 2), dtype=np.int64)
    half = window // 2
    for h in range(NUM_HEADINGS):
        a = math.radians(45 * h)
        fwd = (-math.cos(a), math.sin(a))
        right = (math.sin(a), math.cos(a))
        for i in range(window):
            f = window - 1 - i
            for j in range(window):
                lat = j - half
                table[h, i, j, 0] = round(f * fwd[0] + lat * right[0])
                table[h, i, j, 1] = round(f * fwd[1] + lat * right[1])
    table.flags.writeable = False
    return table


def observe(scene: Scene, pose: Pose, target: int, cfg: EnvConfig) -> np.ndarray:
    """Egocentric window one-hots, normalised forward depth, target one-hot."""
    C = scene.num_classes
    base, obj, depth = kernels.observe_codes(
        scene._walls_u8, scene.object_grid, int(pose.row), int(pose.col), int(pose.heading),
        window_offsets(cfg.window),
    )
    w = cfg.window
    cells = np.zeros((w * w, 3 + C))
    idx = np.arange(w * w)
    cells[idx, base.reshape(-1)] = 1.0
    ob = obj.reshape(-1)
    has = ob >= 0
    cells[idx[has], 3 + ob[has]] = 1.0
    out = np.empty(observation_dim(w, C))
    out[: w * w * (3 + C)] = cells.reshape(-1)
    out[w * w * (3 + C)] = depth / max(scene.width, scene.height)
    tgt = np.zeros(C)
    tgt[target] = 1.0
    out[w * w * (3 + C) + 1 :] = tgt
    return out


def success_check(scene: Scene, pose: Pose, target: int, cfg: EnvConfig) -> bool:
    """Target instance within ``success_distance`` (Chebyshev) and inside the FOV cone."""
    hr, hc = HEADING_STEPS[pose.heading]
    hnorm = math.hypot(hr, hc)
    cos_half = math.cos(math.radians(cfg.fov_degrees / 2.0))
    for r, c in scene.instances(target):
        dr, dc = r - pose.row, c - pose.col
        cheb = max(abs(dr), abs(dc))
        if cheb == 0 or cheb > cfg.success_distance:
            continue
        cosang = (dr * hr + dc * hc) / (math.hypot(dr, dc) * hnorm)
        if cosang >= cos_half - 1e-9:
            return True
    return False


def rotate(heading: int, action: Action) -> int:
    if action == Action.ROTATE_LEFT:
        return (heading - 1) % NUM_HEADINGS
    return (heading + 1) % NUM_HEADINGS


def step(
    scene: Scene,
    pose: Pose,
    action: int,
    target: int,
    cfg: EnvConfig,
    gt_termination: bool = False,
) -> StepOutcome:
    """Apply one action.

    Every step costs ``step_reward``. ``Done`` ends the episode, paying
    ``success_reward`` when :func:`success_check` holds. With
    ``gt_termination`` the environment ends the episode as soon as a success
    pose is reached.
    """
    action = Action(action)
    reward = cfg.step_reward
    failed = False
    if action == Action.DONE:
        ok = success_check(scene, pose, target, cfg)
        return StepOutcome(pose, False, True, ok, reward + (cfg.success_reward if ok else 0.0))
    if action == Action.MOVE_AHEAD:
        dr, dc = HEADING_STEPS[pose.heading]
        r, c = pose.row + int(dr), pose.col + int(dc)
        if 0 <= r < scene.height and 0 <= c < scene.width and scene.walkable[r, c]:
            new = Pose(r, c, pose.heading)
        else:
            new = pose
            failed = True
    else:
        new = Pose(pose.row, pose.col, rotate(pose.heading, action))
    if gt_termination and success_check(scene, new, target, cfg):
        return StepOutcome(new, failed, True, True, reward + cfg.success_reward)
    return StepOutcome(new, failed, False, False, reward)


def similarity_g(obs_i: np.ndarray, obs_j: np.ndarray, eps: float = 0.0) -> int:
    """1 when the two observations differ by at most ``eps`` everywhere."""
    if obs_i.shape != obs_j.shape:
        raise ValueError(f"observation length mismatch {obs_i.shape} vs {obs_j.shape}")
    return int(np.max(np.abs(obs_i - obs_j)) <= eps)
