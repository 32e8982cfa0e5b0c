"""Shortest paths over the (cell, heading) state graph."""
from __future__ import annotations

import numpy as np

from .. import kernels
from .gridworld import NUM_HEADINGS, Action, EnvConfig, Pose, Scene, rotate, success_check


class UnreachableTargetError(RuntimeError):
    pass


def goal_mask(scene: Scene, target: int, cfg: EnvConfig) -> np.ndarray:
    mask = np.zeros((scene.height, scene.width, NUM_HEADINGS), dtype=np.uint8)
    for r, c in scene.walkable_cells():
        for h in range(NUM_HEADINGS):
            if success_check(scene, Pose(r, c, h), target, cfg):
                mask[r, c, h] = 1
    return mask


def distance_map(scene: Scene, target: int, cfg: EnvConfig) -> np.ndarray:
    """Actions (moves + rotations) from every state to a success state; -1 if none.

    Cached on the scene per (target, success geometry).
    """
    key = (target, cfg.success_distance, cfg.fov_degrees)
    cache = scene.distance_cache
    if key not in cache:
        walk = np.ascontiguousarray(scene.walkable, dtype=np.uint8)
        dist = kernels.bfs_distances(walk, goal_mask(scene, target, cfg))
        dist.flags.writeable = False
        cache[key] = dist
    return cache[key]


def shortest_path_length(scene: Scene, pose: Pose, target: int, cfg: EnvConfig) -> int:
    d = int(distance_map(scene, target, cfg)[pose.row, pose.col, pose.heading])
    if d < 0:
        raise UnreachableTargetError(
            f"target {target} unreachable from {pose} in scene {scene.seed}"
        )
    return d


def successor(scene: Scene, pose: Pose, action: Action) -> Pose:
    if action == Action.MOVE_AHEAD:
        dr, dc = kernels.HEADING_STEPS[pose.heading]
        r, c = pose.row + int(dr), pose.col + int(dc)
        if 0 <= r < scene.height and 0 <= c < scene.width and scene.walkable[r, c]:
            return Pose(r, c, pose.heading)
        return pose
    if action == Action.DONE:
        return pose
    return Pose(pose.row, pose.col, rotate(pose.heading, action))


def optimal_action(scene: Scene, pose: Pose, target: int, cfg: EnvConfig) -> Action:
    """First action (in enum order) on a shortest path; ``DONE`` at the goal."""
    dist = distance_map(scene, target, cfg)
    d = dist[pose.row, pose.col, pose.heading]
    if d == 0:
        return Action.DONE
    for a in (Action.MOVE_AHEAD, Action.ROTATE_LEFT, Action.ROTATE_RIGHT):
        nxt = successor(scene, pose, a)
        if nxt != pose and dist[nxt.row, nxt.col, nxt.heading] == d - 1:
            return a
    raise UnreachableTargetError(f"no optimal action from {pose}")
