"""Non-adaptive agents: plain actor-critic rollouts, random, nearest neighbour."""
from __future__ import annotations

import numpy as np

from ..autodiff import ParamVector, grad_mode, no_grad
from ..env import NUM_ACTIONS, EnvConfig, Pose, Task, observe, optimal_action, step
from ..env.paths import distance_map
from ..evaluation import EpisodeResult
from ..model import NetworkConfig, effective_policy, initial_hidden, policy_value, sample_action
from ..objectives import TrajectoryRecord
from .config import TrainerConfig
from .runner import EpisodeOutput, EpisodeRunner


def run_plain_episode(
    theta: ParamVector,
    task: Task,
    rng: np.random.Generator,
    net_cfg: NetworkConfig,
    env_cfg: EnvConfig,
    max_steps: int,
    gt_termination: bool = False,
    keep_graph: bool = True,
    forced_actions=None,
) -> EpisodeOutput:
    """Roll out pi_theta with no adaptation at all."""
    with grad_mode(keep_graph):
        leaf = theta.leaf(requires_grad=True)
        params = theta.unpack(leaf)
        hidden = initial_hidden(net_cfg)
        pose = task.pose
        rec = TrajectoryRecord(observations=[observe(task.scene, pose, task.target, env_cfg)])
        for t in range(max_steps):
            out = policy_value(params, rec.observations[-1], hidden, net_cfg)
            rec.hiddens.append(hidden.h)
            rec.pis.append(out.pi)
            rec.log_pis.append(out.log_pi)
            rec.values.append(out.v)
            rec.qs.append(out.q)
            if forced_actions is not None:
                a = int(forced_actions[t])
            elif out.q is None:
                a = sample_action(out.pi.data, rng)
            else:
                a = sample_action(effective_policy(out.pi.data, out.q.data), rng)
            res = step(task.scene, pose, a, task.target, env_cfg, gt_termination)
            pose, hidden = res.new_pose, out.hidden
            rec.actions.append(a)
            rec.rewards.append(res.reward)
            rec.failed.append(res.action_failed)
            rec.observations.append(observe(task.scene, pose, task.target, env_cfg))
            if res.episode_done:
                rec.success = res.success
                break
        else:
            with no_grad():
                rec.bootstrap = float(policy_value(params, rec.observations[-1], hidden, net_cfg).v.data[0])
    result = EpisodeResult(
        success=rec.success,
        path_length=len(rec.actions),
        optimal_length=task.optimal_length(env_cfg),
        failed=tuple(rec.failed),
        scene_id=task.scene.seed,
        target=task.target,
    )
    return EpisodeOutput(rec, leaf, None, leaf, [], result)


# ------------------------------------------------------------ agents


class NetworkAgent:
    """Evaluation wrapper for a trained network, with or without adaptation."""

    def __init__(self, theta, phi, net_cfg, env_cfg, tcfg: TrainerConfig, adapt: bool = True):
        self.theta, self.phi = theta, phi
        self.net, self.env, self.cfg = net_cfg, env_cfg, tcfg
        self.adapt = adapt and tcfg.adapts
        self.runner = EpisodeRunner(net_cfg, env_cfg, tcfg)

    def episode(self, task: Task, rng) -> EpisodeResult:
        if self.adapt:
            return self.runner.run(self.theta, self.phi, task, rng, mode="test").result
        return run_plain_episode(
            self.theta,
            task,
            rng,
            self.net,
            self.env,
            self.cfg.max_episode_steps,
            self.cfg.gt_object_termination,
            keep_graph=False,
        ).result


def _scripted_episode(task, env_cfg, max_steps, gt_termination, choose) -> EpisodeResult:
    pose = task.pose
    failed = []
    success = False
    for _ in range(max_steps):
        res = step(task.scene, pose, choose(pose), task.target, env_cfg, gt_termination)
        failed.append(res.action_failed)
        pose = res.new_pose
        if res.episode_done:
            success = res.success
            break
    return EpisodeResult(success, len(failed), task.optimal_length(env_cfg), tuple(failed), task.scene.seed, task.target)


class RandomAgent:
    """Uniform over all actions, including Done."""

    def __init__(self, env_cfg: EnvConfig, max_steps: int = 60, gt_termination: bool = False):
        self.env, self.max_steps, self.gt = env_cfg, max_steps, gt_termination
        self.uniform = np.full(NUM_ACTIONS, 1.0 / NUM_ACTIONS)

    def act(self, rng) -> int:
        return sample_action(self.uniform, rng)

    def episode(self, task: Task, rng) -> EpisodeResult:
        return _scripted_episode(task, self.env, self.max_steps, self.gt, lambda pose: self.act(rng))


class NearestNeighborIndex:
    """Observations from train scenes paired with the optimal action there."""

    def __init__(self, scene_dim: int):
        self.scene_dim = scene_dim
        self.by_target: dict = {}

    def add(self, obs: np.ndarray, target: int, action: int):
        self.by_target.setdefault(target, ([], []))
        feats, acts = self.by_target[target]
        feats.append(np.array(obs[: self.scene_dim], dtype=np.float64))
        acts.append(int(action))

    def finalize(self) -> "NearestNeighborIndex":
        self.by_target = {
            t: (np.stack(f), np.asarray(a)) for t, (f, a) in self.by_target.items()
        }
        return self

    def __len__(self):
        return sum(len(a) for _, a in self.by_target.values())

    def query(self, obs: np.ndarray, target: int) -> int:
        """Action of the stored state with the fewest differing entries (first on ties)."""
        if target not in self.by_target or len(self.by_target[target][1]) == 0:
            raise ValueError(f"nearest-neighbour index holds no states for target {target}")
        feats, acts = self.by_target[target]
        dist = np.count_nonzero(feats != obs[: self.scene_dim], axis=1)
        return int(acts[int(np.argmin(dist))])


def build_nn_index(scenes, targets, env_cfg: EnvConfig) -> NearestNeighborIndex:
    index = NearestNeighborIndex(env_cfg.obs_dim - env_cfg.num_classes)
    for scene in scenes:
        for target in scene.classes_present():
            if targets is not None and target not in targets:
                continue
            dist = distance_map(scene, target, env_cfg)
            for r, c in scene.walkable_cells():
                for h in range(dist.shape[2]):
                    if dist[r, c, h] < 0:
                        continue
                    pose = Pose(r, c, h)
                    obs = observe(scene, pose, target, env_cfg)
                    index.add(obs, target, optimal_action(scene, pose, target, env_cfg))
    if len(index) == 0:
        raise ValueError("nearest-neighbour index is empty")
    return index.finalize()


class NearestNeighborAgent:
    def __init__(self, index: NearestNeighborIndex, env_cfg: EnvConfig, max_steps: int = 60, gt_termination: bool = False):
        self.index, self.env, self.max_steps, self.gt = index, env_cfg, max_steps, gt_termination

    def episode(self, task: Task, rng) -> EpisodeResult:
        def choose(pose):
            return self.index.query(observe(task.scene, pose, task.target, self.env), task.target)

        return _scripted_episode(task, self.env, self.max_steps, self.gt, choose)
