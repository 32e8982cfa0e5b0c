"""Deterministic gridworld standing in for a 3-D indoor simulator."""
from .generation import SceneGenerationError, generate_scene
from .gridworld import (
    NUM_ACTIONS,
    NUM_HEADINGS,
    Action,
    EnvConfig,
    Pose,
    Scene,
    StepOutcome,
    observation_dim,
    observe,
    similarity_g,
    step,
    success_check,
    window_offsets,
)
from .paths import UnreachableTargetError, distance_map, optimal_action, shortest_path_length
from .tasks import Task, check_disjoint, make_task_set, sample_task

__all__ = [
    "NUM_ACTIONS",
    "NUM_HEADINGS",
    "Action",
    "EnvConfig",
    "Pose",
    "Scene",
    "SceneGenerationError",
    "StepOutcome",
    "Task",
    "UnreachableTargetError",
    "check_disjoint",
    "distance_map",
    "generate_scene",
    "make_task_set",
    "observation_dim",
    "observe",
    "optimal_action",
    "sample_task",
    "shortest_path_length",
    "similarity_g",
    "step",
    "success_check",
    "window_offsets",
]
