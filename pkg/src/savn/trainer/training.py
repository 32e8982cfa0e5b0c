"""Meta-updates and the asynchronous training loop."""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..autodiff import ParamVector, Tensor, grad, ops
from ..env import EnvConfig, Task, sample_task
from ..evaluation import evaluate, success_rate
from ..model import NetworkConfig, init_params
from ..objectives import TrajectoryRecord, init_loss_params, nav_loss, prediction_loss
from .baselines import NetworkAgent, run_plain_episode
from .config import TrainerConfig
from .optim import SharedParamStore
from .runner import EpisodeAborted, EpisodeOutput, EpisodeRunner

log = logging.getLogger(__name__)


class TaskSampler:
    """Draws a scene uniformly, then a target and start pose inside it."""

    def __init__(self, scenes: Sequence, targets: Sequence[int] | None, env_cfg: EnvConfig):
        self.targets = targets
        self.env = env_cfg
        self.scenes = [
            s for s in scenes if any(targets is None or t in targets for t in s.classes_present())
        ]
        if not self.scenes:
            raise ValueError("no scene contains any of the requested targets")

    def __call__(self, rng: np.random.Generator) -> Task:
        scene = self.scenes[int(rng.integers(len(self.scenes)))]
        return sample_task(scene, self.targets, rng, self.env)


# ------------------------------------------------------------ objectives


def episode_objective(out: EpisodeOutput, tcfg: TrainerConfig, net_cfg: NetworkConfig) -> Tensor:
    """Navigation loss of the adapted parameters, plus the success-prediction
    loss for the baseline that trains it jointly."""
    loss = nav_loss(out.record, tcfg.nav)
    if tcfg.agent == "a3c_prediction":
        rec = out.record
        obs = [o[: net_cfg.scene_dim] for o in rec.observations]
        loss = ops.add(loss, prediction_loss(rec.qs, obs, rec.actions))
    return loss


def meta_gradients(outputs: Sequence[EpisodeOutput], tcfg: TrainerConfig, net_cfg: NetworkConfig):
    """Summed gradients of the outer objective w.r.t. theta and phi.

    Returns ``(g_theta, g_phi, losses)``; ``g_phi`` is ``None`` when no
    episode carries loss parameters.
    """
    g_theta = None
    g_phi = None
    losses = []
    for out in outputs:
        loss = episode_objective(out, tcfg, net_cfg)
        losses.append(float(loss.data))
        inputs = [out.theta_leaf] + ([out.phi_leaf] if out.phi_leaf is not None else [])
        grads = grad(loss, inputs, allow_unused=True)
        gt = grads[0].data
        g_theta = gt.copy() if g_theta is None else g_theta + gt
        if out.phi_leaf is not None:
            gp = grads[1].data
            g_phi = gp.copy() if g_phi is None else g_phi + gp
    return g_theta, g_phi, losses


def meta_update(store: SharedParamStore, outputs: Sequence[EpisodeOutput], tcfg: TrainerConfig, net_cfg: NetworkConfig) -> dict:
    """Differentiate through every episode's inner updates and apply Adam.

    Batches with non-finite gradients are skipped and reported.
    """
    g_theta, g_phi, losses = meta_gradients(outputs, tcfg, net_cfg)
    info = {
        "nav_loss": float(np.sum(losses)),
        "grad_norm_theta": float(np.linalg.norm(g_theta)),
        "grad_norm_phi": None if g_phi is None else float(np.linalg.norm(g_phi)),
    }
    finite = np.all(np.isfinite(g_theta)) and (g_phi is None or np.all(np.isfinite(g_phi)))
    if not finite:
        log.warning("skipping batch with non-finite gradients")
        info["skipped"] = True
        info["version"] = store.version
        return info
    info["skipped"] = False
    info["version"] = store.apply(g_theta, g_phi)
    return info


# ---------------------------------------------------------- diagnostics


def grad_similarity(theta_leaf: Tensor, loss_a: Tensor, loss_b: Tensor) -> dict:
    ga, gb = (g.data for g in grad(loss_a, [theta_leaf], allow_unused=True) + grad(loss_b, [theta_leaf], allow_unused=True))
    inner = float(np.dot(ga, gb))
    na, nb = np.linalg.norm(ga), np.linalg.norm(gb)
    cosine = None if na == 0 or nb == 0 else float(np.clip(inner / (na * nb), -1.0, 1.0))
    return {"inner": inner, "cosine": cosine}


def _head(record: TrajectoryRecord, k: int) -> TrajectoryRecord:
    return TrajectoryRecord(
        observations=record.observations[: k + 1],
        hiddens=record.hiddens[:k],
        pis=record.pis[:k],
        log_pis=record.log_pis[:k],
        values=record.values[:k],
        qs=record.qs[:k],
        actions=record.actions[:k],
        rewards=record.rewards[:k],
        failed=record.failed[:k],
    )


def grad_similarity_diagnostic(runner: EpisodeRunner, out: EpisodeOutput) -> dict:
    """Inner product and cosine of grad L_int (first k steps) and grad L_nav
    w.r.t. theta, for a train-mode episode. ``None`` values when the episode
    is shorter than k steps or a gradient vanishes."""
    k = runner.cfg.k
    if len(out.record) < k or not runner.cfg.adapts:
        return {"inner": None, "cosine": None}
    phi_params = None
    if out.phi_leaf is not None:
        phi_params = ParamVector(runner.phi_shapes).unpack(out.phi_leaf)
    l_int = runner.interaction_loss(_head(out.record, k), phi_params)
    l_nav = nav_loss(out.record, runner.cfg.nav)
    return grad_similarity(out.theta_leaf, l_int, l_nav)


# ---------------------------------------------------------------- training


@dataclass
class TrainResult:
    theta: ParamVector
    phi: ParamVector | None
    final_theta: ParamVector
    final_phi: ParamVector | None
    log: list = field(default_factory=list)
    best_episode: int | None = None
    best_val_success: float | None = None


def initial_parameters(net_cfg: NetworkConfig, tcfg: TrainerConfig):
    theta = init_params(net_cfg, tcfg.seed)
    phi = None
    if tcfg.adapts and tcfg.interaction_loss_kind == "learned":
        phi = init_loss_params(net_cfg.hidden_dim, net_cfg.num_actions, [tcfg.seed, 1])
    return theta, phi


def make_episode_fn(net_cfg: NetworkConfig, env_cfg: EnvConfig, tcfg: TrainerConfig) -> Callable:
    if tcfg.agent == "savn":
        runner = EpisodeRunner(net_cfg, env_cfg, tcfg)
        return lambda theta, phi, task, rng: runner.run(theta, phi, task, rng, mode="train")
    return lambda theta, phi, task, rng: run_plain_episode(
        theta, task, rng, net_cfg, env_cfg, tcfg.max_episode_steps, tcfg.gt_object_termination
    )


def train(
    task_source: Callable[[np.random.Generator], Task],
    env_cfg: EnvConfig,
    net_cfg: NetworkConfig,
    tcfg: TrainerConfig,
    val_tasks: Sequence[Task] | None = None,
    log_file=None,
    on_validation: Callable | None = None,
    init: tuple | None = None,
) -> TrainResult:
    """Run ``tcfg.total_episodes`` episodes over ``tcfg.workers`` threads.

    Each episode is one mini-batch: the worker snapshots (theta, phi), rolls
    out a task with adaptation, differentiates the navigation loss through
    the adaptation and applies the summed gradient to the shared store.
    With one worker the run is fully deterministic given ``tcfg.seed``.
    """
    theta, phi = init if init is not None else initial_parameters(net_cfg, tcfg)
    store = SharedParamStore(theta, phi, tcfg.beta1, tcfg.beta2)
    episode_fn = make_episode_fn(net_cfg, env_cfg, tcfg)
    runner = EpisodeRunner(net_cfg, env_cfg, tcfg) if tcfg.agent == "savn" else None
    records: list = []
    state = {"next": 0, "best": None, "best_score": -1.0, "best_episode": None}
    lock = threading.Lock()
    errors: list = []

    def validate(ep: int):
        th, ph, _ = store.snapshot()
        agent = NetworkAgent(th, ph, net_cfg, env_cfg, tcfg, adapt=True)
        score = success_rate(evaluate(agent, val_tasks, env_cfg, seed=tcfg.seed))
        with lock:
            is_best = score > state["best_score"]
            if is_best:
                state.update(best=(th, ph), best_score=score, best_episode=ep)
            rec = {"validation": ep + 1, "val_success": score, "best": is_best}
            records.append(rec)
            if log_file is not None:
                log_file.write(json.dumps(rec) + "\n")
        if on_validation is not None:
            on_validation(ep + 1, score, th, ph, is_best)

    def worker(wid: int):
        rng = np.random.default_rng([tcfg.seed, wid])
        while True:
            with lock:
                ep = state["next"]
                if ep >= tcfg.total_episodes:
                    return
                state["next"] += 1
            th, ph, _ = store.snapshot()
            task = task_source(rng)
            try:
                out = episode_fn(th, ph, task, rng)
            except EpisodeAborted as exc:
                log.warning("episode %d aborted: %s", ep, exc)
                rec = {"episode": ep, "worker": wid, "agent": tcfg.tag, "scene": task.scene.seed, "target": task.target,
                       "aborted": str(exc), "skipped": True, "version": store.version}
                with lock:
                    records.append(rec)
                    if log_file is not None:
                        log_file.write(json.dumps(rec) + "\n")
                if val_tasks and tcfg.val_every and (ep + 1) % tcfg.val_every == 0:
                    validate(ep)
                continue
            diag = None
            if runner is not None and tcfg.diagnose_every and (ep + 1) % tcfg.diagnose_every == 0:
                diag = grad_similarity_diagnostic(runner, out)
            info = meta_update(store, [out], tcfg, net_cfg)
            rec = {
                "episode": ep,
                "worker": wid,
                "agent": tcfg.tag,
                "scene": task.scene.seed,
                "target": task.target,
                "pose": list(task.pose),
                "success": bool(out.result.success),
                "steps": out.result.path_length,
                "inner_updates": out.update_count,
                **info,
            }
            if diag is not None:
                rec["grad_inner"] = diag["inner"]
                rec["grad_cosine"] = diag["cosine"]
            with lock:
                records.append(rec)
                if log_file is not None:
                    log_file.write(json.dumps(rec) + "\n")
            if val_tasks and tcfg.val_every and (ep + 1) % tcfg.val_every == 0:
                validate(ep)

    def guarded(wid):
        try:
            worker(wid)
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    if tcfg.workers == 1:
        worker(0)
    else:
        threads = [threading.Thread(target=guarded, args=(w,), daemon=True) for w in range(tcfg.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]

    final_theta, final_phi, _ = store.snapshot()
    best_theta, best_phi = state["best"] if state["best"] is not None else (final_theta, final_phi)
    return TrainResult(
        theta=best_theta,
        phi=best_phi,
        final_theta=final_theta,
        final_phi=final_phi,
        log=records,
        best_episode=state["best_episode"],
        best_val_success=state["best_score"] if state["best"] is not None else None,
    )
