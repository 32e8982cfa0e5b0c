"""Navigation and interaction losses as scalar graph nodes."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamVector, Tensor
from .autodiff import ops
from .env.gridworld import similarity_g
from .model import init_uniform_fan_in

LOSS_FILTERS = 10


@dataclass
class TrajectoryRecord:
    """Per-step rollout data; graph nodes stay attached in train mode.

    ``observations`` holds T + 1 entries: the observation before each step plus
    the one after the last step. ``hiddens`` are pre-step LSTM outputs.
    """

    observations: list = field(default_factory=list)
    hiddens: list = field(default_factory=list)
    pis: list = field(default_factory=list)
    log_pis: list = field(default_factory=list)
    values: list = field(default_factory=list)
    qs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    success: bool = False
    bootstrap: float = 0.0  # value estimate of the state after truncation, else 0

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class NavLossConfig:
    gamma: float = 0.99
    value_weight: float = 0.5
    entropy_weight: float = 0.01

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.value_weight < 0 or self.entropy_weight < 0:
            raise ValueError("loss weights must be non-negative")


def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    out = np.empty(len(rewards))
    R = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        R = rewards[t] + gamma * R
        out[t] = R
    return out


def _sum_terms(terms) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ops.add(total, t)
    return total


def advantages(record: TrajectoryRecord, cfg: NavLossConfig = NavLossConfig()) -> np.ndarray:
    returns = discounted_returns(record.rewards, cfg.gamma, record.bootstrap)
    return np.array([returns[t] - float(record.values[t].data[0]) for t in range(len(record))])


def nav_loss(record: TrajectoryRecord, cfg: NavLossConfig = NavLossConfig(), frozen_advantages=None) -> Tensor:
    """Actor-critic loss summed over the trajectory; advantages are constants.

    ``frozen_advantages`` overrides the advantage constants (finite-difference
    checks hold them fixed while perturbing parameters).
    """
    T = len(record)
    if T == 0:
        raise ValueError("nav_loss: empty trajectory")
    returns = discounted_returns(record.rewards, cfg.gamma, record.bootstrap)
    adv_all = advantages(record, cfg) if frozen_advantages is None else frozen_advantages
    terms = []
    for t in range(T):
        v = ops.index(record.values[t], 0)
        log_pa = ops.index(record.log_pis[t], int(record.actions[t]))
        adv = float(adv_all[t])
        term = ops.scale(log_pa, -adv)
        if cfg.value_weight:
            err = ops.shift(ops.neg(v), float(returns[t]))
            term = ops.add(term, ops.scale(ops.mul(err, err), cfg.value_weight))
        if cfg.entropy_weight:
            entropy = ops.neg(ops.sum(ops.mul(record.pis[t], record.log_pis[t])))
            term = ops.sub(term, ops.scale(entropy, cfg.entropy_weight))
        terms.append(term)
    return _sum_terms(terms)


# ----------------------------------------------------------- learned loss


def loss_param_shapes(hidden_dim: int, num_actions: int) -> dict:
    channels = hidden_dim + num_actions
    return {
        "conv1_w": (LOSS_FILTERS, channels, 1),
        "conv1_b": (LOSS_FILTERS,),
        "conv2_w": (1, LOSS_FILTERS, 1),
        "conv2_b": (1,),
    }


def init_loss_params(hidden_dim: int, num_actions: int, seed: int) -> ParamVector:
    return init_uniform_fan_in(loss_param_shapes(hidden_dim, num_actions), seed)


def learned_interaction_loss(phi: dict, hiddens: Sequence[Tensor], pis: Sequence[Tensor], k: int) -> Tensor:
    """Two width-1 temporal convolutions over [h_t ; pi_t], then an L2 norm."""
    if len(hiddens) < k or len(pis) < k:
        raise ValueError(f"learned loss needs a window of {k} steps, got {min(len(hiddens), len(pis))}")
    rows = [ops.concat((h, p)) for h, p in zip(hiddens[-k:], pis[-k:])]
    x = ops.transpose(ops.stack(rows))  # (channels, k)
    z = ops.conv1d(x, phi["conv1_w"])
    z = ops.relu(ops.add(z, ops.broadcast_to(phi["conv1_b"], z.data.shape, 1)))
    y = ops.conv1d(z, phi["conv2_w"])
    y = ops.add(y, ops.broadcast_to(phi["conv2_b"], y.data.shape, 1))
    return ops.l2norm(y)


# ------------------------------------------------------ hand-crafted losses


def diversity_loss(log_pis: Sequence[Tensor], observations: Sequence[np.ndarray], actions: Sequence[int], eps: float = 0.0) -> Tensor:
    """Sum over i < j of g(s_i, s_j) * log pi_j[a_i]."""
    total = Tensor(np.asarray(0.0))
    k = len(actions)
    for i in range(k):
        for j in range(i + 1, k):
            if similarity_g(observations[i], observations[j], eps):
                total = ops.add(total, ops.index(log_pis[j], int(actions[i])))
    return total


def prediction_loss(qs: Sequence[Tensor], observations: Sequence[np.ndarray], actions: Sequence[int], eps: float = 0.0) -> Tensor:
    """Summed cross-entropy of predicted action success against 1 - g(s_t, s_t+1)."""
    if any(q is None for q in qs):
        raise ValueError("prediction loss needs the success head")
    k = len(actions)
    if len(observations) != k + 1:
        raise ValueError("prediction loss needs k + 1 observations")
    total = Tensor(np.asarray(0.0))
    for t in range(k):
        label = 1.0 - similarity_g(observations[t], observations[t + 1], eps)
        total = ops.add(total, ops.bce(ops.index(qs[t], int(actions[t])), np.asarray(label)))
    return total
