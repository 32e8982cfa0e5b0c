"""Episodic adaptation, meta-training and baseline agents."""
from .baselines import (
    NearestNeighborAgent,
    NearestNeighborIndex,
    NetworkAgent,
    RandomAgent,
    build_nn_index,
    run_plain_episode,
)
from .config import AGENTS, LOSS_KINDS, TrainerConfig
from .optim import Adam, SharedParamStore
from .runner import EpisodeAborted, EpisodeOutput, EpisodeRunner, network_for
from .training import (
    TaskSampler,
    TrainResult,
    episode_objective,
    grad_similarity,
    grad_similarity_diagnostic,
    initial_parameters,
    meta_gradients,
    meta_update,
    train,
)

__all__ = [
    "AGENTS",
    "LOSS_KINDS",
    "Adam",
    "EpisodeAborted",
    "EpisodeOutput",
    "EpisodeRunner",
    "NearestNeighborAgent",
    "NearestNeighborIndex",
    "NetworkAgent",
    "RandomAgent",
    "SharedParamStore",
    "TaskSampler",
    "TrainResult",
    "TrainerConfig",
    "build_nn_index",
    "episode_objective",
    "grad_similarity",
    "grad_similarity_diagnostic",
    "initial_parameters",
    "meta_gradients",
    "meta_update",
    "network_for",
    "run_plain_episode",
    "train",
]
