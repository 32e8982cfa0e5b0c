"""Episode rollout with interaction-gradient adaptation every k steps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import ParamVector, Tensor, grad_mode, no_grad
from ..autodiff.meta import sgd_step
from ..env import EnvConfig, Task, observe, step
from ..evaluation import EpisodeResult
from ..model import NetworkConfig, effective_policy, initial_hidden, policy_value, sample_action
from ..objectives import (
    TrajectoryRecord,
    diversity_loss,
    learned_interaction_loss,
    loss_param_shapes,
    prediction_loss,
)
from .config import TrainerConfig


class EpisodeAborted(FloatingPointError):
    """An inner update produced NaN/Inf; the episode cannot continue."""


def network_for(env_cfg: EnvConfig, tcfg: TrainerConfig, embed_dim: int = 64, hidden_dim: int = 64) -> NetworkConfig:
    head = tcfg.agent == "a3c_prediction" or (tcfg.agent == "savn" and tcfg.interaction_loss_kind == "prediction")
    return NetworkConfig(
        obs_dim=env_cfg.obs_dim,
        target_dim=env_cfg.num_classes,
        embed_dim=embed_dim,
        hidden_dim=hidden_dim,
        with_success_head=head,
        memory_k=tcfg.k if tcfg.agent == "a3c_memory" else 0,
    )


@dataclass
class EpisodeOutput:
    record: TrajectoryRecord
    theta_leaf: Tensor
    phi_leaf: Tensor | None
    theta_i: Tensor
    update_steps: list = field(default_factory=list)
    result: EpisodeResult | None = None

    @property
    def update_count(self) -> int:
        return len(self.update_steps)


class EpisodeRunner:
    """Rolls out one task with pi_{theta_i}, adapting theta_i in place of theta.

    ``mode='train'`` keeps every graph node so the navigation loss can be
    differentiated through all inner updates; ``mode='test'`` cuts the graph
    after each inner update.
    """

    def __init__(self, net_cfg: NetworkConfig, env_cfg: EnvConfig, tcfg: TrainerConfig):
        self.net = net_cfg
        self.env = env_cfg
        self.cfg = tcfg
        self.theta_shapes = None
        self.phi_shapes = loss_param_shapes(net_cfg.hidden_dim, net_cfg.num_actions)

    # ---------------------------------------------------------- interaction

    def interaction_loss(self, record: TrajectoryRecord, phi_params):
        k = self.cfg.k
        kind = self.cfg.interaction_loss_kind
        scene = self.net.scene_dim
        if kind == "learned":
            return learned_interaction_loss(phi_params, record.hiddens[-k:], record.pis[-k:], k)
        obs = [o[:scene] for o in record.observations[-(k + 1) :]]
        if kind == "diversity":
            return diversity_loss(record.log_pis[-k:], obs[:-1], record.actions[-k:], self.env.eps_g)
        if kind == "prediction":
            return prediction_loss(record.qs[-k:], obs, record.actions[-k:], self.env.eps_g)
        raise ValueError(f"no interaction loss for kind {kind!r}")

    def update_cap(self, mode: str) -> int:
        if not self.cfg.adapts:
            return 0
        if mode == "test" and not self.cfg.cap_at_test:
            return self.cfg.max_episode_steps  # effectively unlimited
        return self.cfg.max_inner_updates

    # ------------------------------------------------------------- rollout

    def run(
        self,
        theta: ParamVector,
        phi: ParamVector | None,
        task: Task,
        rng: np.random.Generator,
        mode: str = "train",
        forced_actions=None,
    ) -> EpisodeOutput:
        if mode not in ("train", "test"):
            raise ValueError("mode must be 'train' or 'test'")
        cap = self.update_cap(mode)
        needs_graph = mode == "train" or cap > 0
        with grad_mode(needs_graph):
            return self._rollout(theta, phi, task, rng, mode, cap, forced_actions)

    def _rollout(self, theta, phi, task, rng, mode, cap, forced_actions):
        cfg, env = self.cfg, self.env
        theta_leaf = theta.leaf(requires_grad=True)
        use_phi = cfg.adapts and cfg.interaction_loss_kind == "learned"
        phi_leaf = phi.leaf(requires_grad=True) if use_phi else None
        phi_params = phi.unpack(phi_leaf) if use_phi else None
        theta_i = theta_leaf
        params = theta.unpack(theta_i)
        hidden = initial_hidden(self.net)
        pose = task.pose
        rec = TrajectoryRecord()
        rec.observations.append(observe(task.scene, pose, task.target, env))
        update_steps = []
        success = False
        for t in range(1, cfg.max_episode_steps + 1):
            out = policy_value(params, rec.observations[-1], hidden, self.net)
            rec.hiddens.append(hidden.h)
            rec.pis.append(out.pi)
            rec.log_pis.append(out.log_pi)
            rec.values.append(out.v)
            rec.qs.append(out.q)
            if forced_actions is not None:
                action = int(forced_actions[t - 1])
            else:
                p = out.pi.data if out.q is None else effective_policy(out.pi.data, out.q.data)
                action = sample_action(p, rng)
            res = step(task.scene, pose, action, task.target, env, cfg.gt_object_termination)
            pose = res.new_pose
            hidden = out.hidden
            rec.actions.append(action)
            rec.rewards.append(res.reward)
            rec.failed.append(res.action_failed)
            rec.observations.append(observe(task.scene, pose, task.target, env))
            ended = res.episode_done
            if ended:
                success = res.success
            elif t == cfg.max_episode_steps:
                with no_grad():
                    boot = policy_value(params, rec.observations[-1], hidden, self.net)
                rec.bootstrap = float(boot.v.data[0])
            if t % cfg.k == 0 and len(update_steps) < cap:
                if cfg.alpha != 0:
                    loss = self.interaction_loss(rec, phi_params)
                    theta_i = sgd_step(theta_i, loss, cfg.alpha, cfg.first_order)
                    if not (np.isfinite(loss.data).all() and np.isfinite(theta_i.data).all()):
                        raise EpisodeAborted(
                            f"non-finite interaction update at step {t} "
                            f"(loss={float(loss.data)}, scene={task.scene.seed}, target={task.target})"
                        )
                    if mode == "test":
                        theta_i = Tensor(theta_i.data.copy(), requires_grad=True)
                        hidden = hidden.detach()
                    params = theta.unpack(theta_i)
                update_steps.append(t)
            if ended:
                break
        rec.success = success
        result = EpisodeResult(
            success=success,
            path_length=len(rec.actions),
            optimal_length=task.optimal_length(env),
            failed=tuple(rec.failed),
            scene_id=task.scene.seed,
            target=task.target,
        )
        return EpisodeOutput(rec, theta_leaf, phi_leaf, theta_i, update_steps, result)
