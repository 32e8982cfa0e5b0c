"""Recurrent actor-critic network over gridworld observations."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import ParamVector, Tensor
from .autodiff import ops


@dataclass(frozen=True)
class NetworkConfig:
    obs_dim: int
    target_dim: int
    embed_dim: int = 64
    hidden_dim: int = 64
    num_actions: int = 4
    with_success_head: bool = False
    memory_k: int = 0  # >0: self-attention over the latest memory_k hidden states

    def __post_init__(self):
        if min(self.obs_dim, self.embed_dim, self.hidden_dim, self.num_actions, self.target_dim) < 1:
            raise ValueError("network dimensions must be >= 1")
        if self.target_dim >= self.obs_dim:
            raise ValueError("target_dim must be smaller than obs_dim")

    @property
    def scene_dim(self) -> int:
        return self.obs_dim - self.target_dim

    @property
    def feature_dim(self) -> int:
        return 2 * self.hidden_dim if self.memory_k else self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "NetworkConfig":
        return cls(**d)


def param_shapes(cfg: NetworkConfig) -> dict:
    E, H, A, F = cfg.embed_dim, cfg.hidden_dim, cfg.num_actions, cfg.feature_dim
    shapes = {
        "obs_w": (E, cfg.scene_dim),
        "obs_b": (E,),
        "tgt_w": (E, cfg.target_dim),
        "tgt_b": (E,),
        "fuse_w": (E, 2 * E),
        "fuse_b": (E,),
        "lstm_w": (4 * H, E + H),
        "lstm_b": (4 * H,),
    }
    if cfg.memory_k:
        shapes["att_q"] = (H, H)
        shapes["att_k"] = (H, H)
    shapes.update({"pi_w": (A, F), "pi_b": (A,), "v_w": (1, F), "v_b": (1,)})
    if cfg.with_success_head:
        shapes.update({"q_w": (A, F), "q_b": (A,)})
    return shapes


def init_uniform_fan_in(shapes: dict, seed: int) -> ParamVector:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for matrices, zeros for vectors."""
    rng = np.random.default_rng(seed)
    pv = ParamVector(shapes)
    values = np.zeros(pv.size)
    for name, (offset, shape) in pv.slices.items():
        if len(shape) < 2:
            continue
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / np.sqrt(fan_in)
        n = int(np.prod(shape))
        values[offset : offset + n] = rng.uniform(-bound, bound, size=n)
    return pv.replace(values)


def init_params(cfg: NetworkConfig, seed: int) -> ParamVector:
    return init_uniform_fan_in(param_shapes(cfg), seed)


@dataclass
class HiddenState:
    h: Tensor
    c: Tensor
    memory: tuple = field(default=())

    def detach(self) -> "HiddenState":
        return HiddenState(self.h.detach(), self.c.detach(), tuple(m.detach() for m in self.memory))


def initial_hidden(cfg: NetworkConfig) -> HiddenState:
    return HiddenState(Tensor(np.zeros(cfg.hidden_dim)), Tensor(np.zeros(cfg.hidden_dim)))


@dataclass
class PolicyOutput:
    pi: Tensor
    log_pi: Tensor
    v: Tensor  # shape (1,)
    q: Tensor | None
    hidden: HiddenState


def _linear(params, prefix, x):
    return ops.add(ops.matmul(params[prefix + "_w"], x), params[prefix + "_b"])


def policy_value(params: dict, obs: np.ndarray, hidden: HiddenState, cfg: NetworkConfig) -> PolicyOutput:
    """One forward step. ``params`` is ``ParamVector.unpack`` output."""
    if obs.shape != (cfg.obs_dim,):
        raise ValueError(f"observation length {obs.shape} != obs_dim {cfg.obs_dim}")
    scene_part = Tensor(obs[: cfg.scene_dim])
    target_part = Tensor(obs[cfg.scene_dim :])
    enc = ops.relu(_linear(params, "obs", scene_part))
    tgt = ops.relu(_linear(params, "tgt", target_part))
    fused = ops.relu(_linear(params, "fuse", ops.concat((enc, tgt))))
    H = cfg.hidden_dim
    hc = ops.lstm_cell(params["lstm_w"], params["lstm_b"], fused, hidden.h, hidden.c)
    h_new = ops.take(hc, 0, H)
    c_new = ops.take(hc, H, 2 * H)
    memory = ()
    features = h_new
    if cfg.memory_k:
        memory = (hidden.memory + (h_new,))[-cfg.memory_k :]
        features = ops.concat((h_new, _attend(params, memory, h_new, H)))
    logits = _linear(params, "pi", features)
    q = ops.sigmoid(_linear(params, "q", features)) if cfg.with_success_head else None
    return PolicyOutput(
        pi=ops.softmax(logits),
        log_pi=ops.log_softmax(logits),
        v=_linear(params, "v", features),
        q=q,
        hidden=HiddenState(h_new, c_new, memory),
    )


def _attend(params, memory, h_new, H):
    """Scaled dot-product attention of the current state over stored states."""
    M = ops.stack(memory)  # (m, H)
    query = ops.matmul(params["att_q"], h_new)
    keys = ops.matmul(M, params["att_k"])
    weights = ops.softmax(ops.scale(ops.matmul(keys, query), 1.0 / np.sqrt(H)))
    return ops.matmul(ops.transpose(M), weights)


def effective_policy(pi: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Policy times predicted action success, renormalised; falls back to ``pi``."""
    pi = np.asarray(pi, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if pi.shape != q.shape:
        raise ValueError("pi and q must have equal length")
    p = pi * q
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        return pi
    return p / total


def sample_action(p: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), len(p) - 1)
