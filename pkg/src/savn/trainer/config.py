from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..autodiff.meta import MAX_CHAINED_UPDATES
from ..objectives import NavLossConfig

LOSS_KINDS = ("learned", "diversity", "prediction", "none")
AGENTS = ("savn", "a3c", "a3c_memory", "a3c_prediction")


@dataclass(frozen=True)
class TrainerConfig:
    alpha: float = 1e-4
    beta1: float = 1e-4
    beta2: float = 1e-4
    k: int = 6
    max_inner_updates: int = 4
    max_episode_steps: int = 60
    interaction_loss_kind: str = "learned"
    first_order: bool = False
    workers: int = 1
    total_episodes: int = 1000
    seed: int = 0
    gt_object_termination: bool = False
    cap_at_test: bool = True
    agent: str = "savn"
    gamma: float = 0.99
    value_weight: float = 0.5
    entropy_weight: float = 0.01
    val_every: int = 0  # episodes between validations; 0 disables
    val_episodes: int = 50
    diagnose_every: int = 0  # episodes between gradient-similarity probes; 0 disables

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta1 < 0 or self.beta2 < 0:
            raise ValueError("beta1/beta2 must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.max_inner_updates <= MAX_CHAINED_UPDATES:
            raise ValueError(f"max_inner_updates must lie in [0, {MAX_CHAINED_UPDATES}]")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if self.interaction_loss_kind not in LOSS_KINDS:
            raise ValueError(f"interaction_loss_kind must be one of {LOSS_KINDS}")
        if self.agent not in AGENTS:
            raise ValueError(f"agent must be one of {AGENTS}")
        if self.agent != "savn" and self.interaction_loss_kind != "none":
            raise ValueError("baseline agents take no interaction loss; use interaction_loss_kind='none'")
        if self.workers < 1 or self.total_episodes < 0:
            raise ValueError("workers must be >= 1 and total_episodes >= 0")
        NavLossConfig(self.gamma, self.value_weight, self.entropy_weight)

    @property
    def nav(self) -> NavLossConfig:
        return NavLossConfig(self.gamma, self.value_weight, self.entropy_weight)

    @property
    def adapts(self) -> bool:
        return self.agent == "savn" and self.interaction_loss_kind != "none"

    @property
    def tag(self) -> str:
        """Name recorded in logs; a SAVN run with nothing to adapt is plain A3C."""
        if self.agent == "savn":
            return "a3c" if self.interaction_loss_kind == "none" else f"savn-{self.interaction_loss_kind}"
        return self.agent

    def replace(self, **kw) -> "TrainerConfig":
        d = asdict(self)
        d.update(kw)
        return TrainerConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainerConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown trainer fields: {sorted(unknown)}")
        return cls(**d)
