import json
from pathlib import Path

import numpy as np
import pytest

from savn import checkpoint
from savn.autodiff import ParamVector, Tensor, grad, no_grad
from savn.env import Action, EnvConfig, Pose, generate_scene, make_task_set, observe, optimal_action, step
from savn.model import NetworkConfig
from savn.objectives import advantages, nav_loss
from savn.trainer import (
    Adam,
    EpisodeAborted,
    EpisodeRunner,
    NearestNeighborAgent,
    RandomAgent,
    SharedParamStore,
    TaskSampler,
    TrainerConfig,
    build_nn_index,
    grad_similarity,
    grad_similarity_diagnostic,
    initial_parameters,
    meta_gradients,
    network_for,
    run_plain_episode,
    train,
)

from helpers import central_diff, rel_err

FIXTURES = Path(__file__).parent / "fixtures"
TINY_ENV = EnvConfig(width=7, height=7, num_classes=1, wall_density=0.1, window=3)
TASKS = make_task_set([0, 1], None, 4, 0, TINY_ENV)
NO_DONE = [Action.ROTATE_LEFT, Action.MOVE_AHEAD, Action.ROTATE_RIGHT, Action.MOVE_AHEAD] * 20


def tiny(tcfg, embed=2, hidden=2):
    return network_for(TINY_ENV, tcfg, embed_dim=embed, hidden_dim=hidden)


def random_params(net, tcfg, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    theta, phi = initial_parameters(net, tcfg)
    theta = theta.replace(rng.normal(scale=scale, size=theta.size))
    if phi is not None:
        phi = phi.replace(rng.normal(scale=scale, size=phi.size))
    return theta, phi


# ------------------------------------------------------------ schedule


@pytest.mark.parametrize(
    "max_steps,k,cap,expected",
    [
        (30, 6, 4, [6, 12, 18, 24]),
        (24, 6, 4, [6, 12, 18, 24]),
        (60, 6, 4, [6, 12, 18, 24]),
        (17, 6, 4, [6, 12]),
        (30, 6, 2, [6, 12]),
        (5, 6, 4, []),
    ],
)
def test_inner_update_schedule(max_steps, k, cap, expected):
    tcfg = TrainerConfig(k=k, max_episode_steps=max_steps, max_inner_updates=cap, interaction_loss_kind="diversity", alpha=0.01)
    net = tiny(tcfg)
    theta, phi = initial_parameters(net, tcfg)
    out = EpisodeRunner(net, TINY_ENV, tcfg).run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    assert out.update_steps == expected
    assert len(out.record) == max_steps


def test_test_mode_cap_override():
    tcfg = TrainerConfig(k=6, max_episode_steps=40, interaction_loss_kind="learned", alpha=0.01, cap_at_test=False)
    net = tiny(tcfg)
    theta, phi = initial_parameters(net, tcfg)
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    out = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), mode="test", forced_actions=NO_DONE)
    assert out.update_steps == [6, 12, 18, 24, 30, 36]
    out = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), mode="train", forced_actions=NO_DONE)
    assert out.update_steps == [6, 12, 18, 24]


def test_cap_above_four_rejected():
    with pytest.raises(ValueError):
        TrainerConfig(max_inner_updates=5)
    with pytest.raises(ValueError):
        TrainerConfig(alpha=-1)
    with pytest.raises(ValueError):
        TrainerConfig(agent="a3c", interaction_loss_kind="learned")


# ---------------------------------------------------------- reductions


def test_alpha_zero_trajectory_matches_plain_rollout():
    tcfg = TrainerConfig(alpha=0.0, interaction_loss_kind="learned", max_episode_steps=40)
    net = tiny(tcfg, 8, 8)
    theta, phi = random_params(net, tcfg, 3)
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    for i, task in enumerate(TASKS):
        a = runner.run(theta, phi, task, np.random.default_rng(i))
        b = run_plain_episode(theta, task, np.random.default_rng(i), net, TINY_ENV, 40)
        assert a.record.actions == b.record.actions
        assert [p.data.tobytes() for p in a.record.pis] == [p.data.tobytes() for p in b.record.pis]
        assert a.record.bootstrap == b.record.bootstrap
        ga, _, _ = meta_gradients([a], tcfg, net)
        gb, _, _ = meta_gradients([b], tcfg.replace(interaction_loss_kind="none"), net)
        assert ga.tobytes() == gb.tobytes()


def test_inner_updates_leave_shared_parameters_alone():
    tcfg = TrainerConfig(alpha=0.1, interaction_loss_kind="learned", max_episode_steps=30)
    net = tiny(tcfg)
    theta, phi = random_params(net, tcfg, 0)
    before_t, before_p = theta.values.copy(), phi.values.copy()
    out = EpisodeRunner(net, TINY_ENV, tcfg).run(theta, phi, TASKS[1], np.random.default_rng(0), forced_actions=NO_DONE)
    assert out.update_count == 4
    assert not np.array_equal(out.theta_i.data, before_t)
    assert theta.values.tobytes() == before_t.tobytes() and phi.values.tobytes() == before_p.tobytes()


def test_zero_inner_updates_give_zero_phi_gradient():
    tcfg = TrainerConfig(alpha=0.1, interaction_loss_kind="learned", k=50, max_episode_steps=20)
    net = tiny(tcfg)
    theta, phi = random_params(net, tcfg, 1)
    out = EpisodeRunner(net, TINY_ENV, tcfg).run(theta, phi, TASKS[0], np.random.default_rng(0))
    assert out.update_count == 0
    _, g_phi, _ = meta_gradients([out], tcfg, net)
    assert g_phi.shape == (phi.size,) and not g_phi.any()


# ------------------------------------------------- meta-gradient oracle


def frozen_nav(runner, tcfg, task, actions, adv, boot):
    """L_nav(theta_i(theta, phi)) with advantages and bootstrap held fixed."""

    def f(theta, phi):
        with no_grad():
            out = runner.run(theta, phi, task, np.random.default_rng(0), forced_actions=actions)
        out.record.bootstrap = boot
        return float(nav_loss(out.record, tcfg.nav, adv).data)

    return f


@pytest.mark.parametrize("kind,updates", [("learned", 1), ("learned", 2), ("learned", 3), ("learned", 4), ("diversity", 3), ("prediction", 2)])
def test_meta_gradient_matches_finite_differences(kind, updates):
    tcfg = TrainerConfig(alpha=0.3, k=2, max_episode_steps=2 * updates + 2, max_inner_updates=updates, interaction_loss_kind=kind)
    net = tiny(tcfg)
    theta, phi = random_params(net, tcfg, 7 + updates)
    assert theta.size <= 200
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    task = TASKS[2]
    # repeat states so the diversity loss is active
    actions = [Action.ROTATE_LEFT, Action.ROTATE_RIGHT] * (updates + 1) if kind == "diversity" else NO_DONE
    out = runner.run(theta, phi, task, np.random.default_rng(0), forced_actions=actions)
    assert out.update_count == updates
    g_theta, g_phi, _ = meta_gradients([out], tcfg, net)
    f = frozen_nav(runner, tcfg, task, actions, advantages(out.record, tcfg.nav), out.record.bootstrap)
    fd_theta = central_diff(lambda x: f(theta.replace(x), phi), theta.values)
    assert rel_err(g_theta, fd_theta) < 1e-4
    if phi is not None:
        fd_phi = central_diff(lambda x: f(theta, phi.replace(x)), phi.values)
        assert np.linalg.norm(fd_phi) > 0
        assert rel_err(g_phi, fd_phi) < 1e-4


def test_first_order_gap_shrinks_linearly_in_alpha():
    ratios = []
    for seed in range(5):
        gaps = []
        for alpha in (2e-3, 1e-3):
            tcfg = TrainerConfig(alpha=alpha, k=3, max_episode_steps=12, interaction_loss_kind="learned")
            net = tiny(tcfg, 4, 4)
            theta, phi = random_params(net, tcfg, seed)
            outs = []
            for fo in (False, True):
                t2 = tcfg.replace(first_order=fo)
                outs.append(EpisodeRunner(net, TINY_ENV, t2).run(theta, phi, TASKS[seed], np.random.default_rng(0), forced_actions=NO_DONE))
            ge = meta_gradients([outs[0]], tcfg, net)[0]
            gf = meta_gradients([outs[1]], tcfg, net)[0]
            gaps.append(np.linalg.norm(ge - gf))
        ratios.append(gaps[0] / gaps[1])
    assert 1.8 <= np.mean(ratios) <= 2.2


# ------------------------------------------------------------- golden


def test_episode_reproduces_golden_trajectory():
    golden = json.loads((FIXTURES / "golden_trajectory.json").read_text())
    tcfg = TrainerConfig.from_dict(golden["trainer"])
    net = tiny(tcfg, 4, 4)
    theta, phi = initial_parameters(net, tcfg)
    task = make_task_set([golden["scene"]], None, 1, golden["task_seed"], TINY_ENV)[0]
    out = EpisodeRunner(net, TINY_ENV, tcfg).run(theta, phi, task, np.random.default_rng(golden["rng_seed"]))
    assert out.record.actions == golden["actions"]
    assert out.update_steps == golden["update_steps"]
    np.testing.assert_allclose([float(v.data[0]) for v in out.record.values], golden["values"], rtol=1e-12)
    # replay the recorded actions through the environment on its own
    pose = task.pose
    for a, r, failed in zip(golden["actions"], golden["rewards"], golden["failed"]):
        res = step(task.scene, pose, a, task.target, TINY_ENV)
        assert res.reward == pytest.approx(r) and res.action_failed == failed
        pose = res.new_pose
    assert list(pose) == golden["final_pose"]


# ----------------------------------------------------------- training


def small_train_cfg(**kw):
    base = dict(total_episodes=10, alpha=0.05, beta1=1e-3, beta2=1e-3, max_episode_steps=20, k=4, seed=5)
    base.update(kw)
    return TrainerConfig(**base)


def test_training_is_deterministic_single_worker():
    scenes = [t.scene for t in TASKS[::4]]
    tcfg = small_train_cfg()
    net = tiny(tcfg, 4, 4)
    a = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, tcfg)
    b = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, tcfg)
    assert a.final_theta == b.final_theta and a.final_phi == b.final_phi
    assert a.log == b.log
    assert a.final_theta != initial_parameters(net, tcfg)[0]


def test_no_interaction_loss_and_zero_alpha_match_a3c_baseline():
    scenes = [t.scene for t in TASKS[::4]]
    savn = small_train_cfg(alpha=0.0, interaction_loss_kind="none", total_episodes=15)
    a3c = savn.replace(agent="a3c")
    net = tiny(savn, 4, 4)
    assert net == tiny(a3c, 4, 4)
    ra = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, savn)
    rb = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, a3c)
    assert ra.log == rb.log
    assert ra.log[0]["agent"] == "a3c"
    assert checkpoint.dumps({"theta": ra.final_theta}) == checkpoint.dumps({"theta": rb.final_theta})


def test_validation_keeps_best_parameters():
    scenes = [t.scene for t in TASKS[::4]]
    tcfg = small_train_cfg(total_episodes=6, val_every=2, val_episodes=4)
    net = tiny(tcfg, 4, 4)
    seen = []
    res = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, tcfg, val_tasks=TASKS[:4], on_validation=lambda *a: seen.append(a))
    assert len(seen) == 3
    best = max(range(3), key=lambda i: (seen[i][1], -i))
    assert res.theta == seen[best][2]
    assert res.best_val_success == seen[best][1]


def test_multi_worker_training_applies_every_batch():
    scenes = [t.scene for t in TASKS[::4]]
    tcfg = small_train_cfg(workers=3, total_episodes=12)
    net = tiny(tcfg, 4, 4)
    res = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, tcfg)
    episodes = [r for r in res.log if "episode" in r]
    assert sorted(r["episode"] for r in episodes) == list(range(12))
    assert sorted(r["version"] for r in episodes) == list(range(1, 13))
    assert {r["worker"] for r in episodes} <= {0, 1, 2}


@pytest.mark.parametrize("agent", ["a3c_memory", "a3c_prediction"])
def test_baseline_trainers_run(agent):
    scenes = [t.scene for t in TASKS[::4]]
    tcfg = small_train_cfg(agent=agent, interaction_loss_kind="none", total_episodes=4)
    net = tiny(tcfg, 4, 4)
    res = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, tcfg)
    assert res.final_theta != initial_parameters(net, tcfg)[0]
    assert res.log[0]["agent"] == agent


# --------------------------------------------------------- optimizer


def test_adam_first_step_and_store_versions():
    opt = Adam(3, lr=0.1)
    out = opt.step(np.zeros(3), np.array([2.0, -0.5, 0.0]))
    np.testing.assert_allclose(out, [-0.1, 0.1, 0.0], rtol=1e-6)
    store = SharedParamStore(ParamVector({"w": (3,)}), None, 0.1, 0.1)
    versions = [store.apply(np.ones(3), None) for _ in range(4)]
    assert versions == [1, 2, 3, 4]


# -------------------------------------------------------- diagnostics


def test_grad_similarity_identical_losses_and_oracle():
    tcfg = TrainerConfig(alpha=0.1, k=4, max_episode_steps=12, interaction_loss_kind="learned")
    net = tiny(tcfg, 4, 4)
    theta, phi = random_params(net, tcfg, 2)
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    out = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    l_nav = nav_loss(out.record, tcfg.nav)
    same = grad_similarity(out.theta_leaf, l_nav, l_nav)
    assert same["cosine"] == pytest.approx(1.0, abs=1e-12)

    diag = grad_similarity_diagnostic(runner, out)
    # recompute both gradients from fresh rollouts
    out2 = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    from savn.trainer.training import _head

    phi_params = phi.unpack(out2.phi_leaf)
    (gi,) = grad(runner.interaction_loss(_head(out2.record, 4), phi_params), [out2.theta_leaf])
    out3 = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    (gn,) = grad(nav_loss(out3.record, tcfg.nav), [out3.theta_leaf])
    assert diag["inner"] == pytest.approx(float(gi.data @ gn.data), rel=1e-10)
    assert -1 <= diag["cosine"] <= 1


def test_grad_similarity_zero_phi():
    tcfg = TrainerConfig(alpha=0.1, k=4, max_episode_steps=12, interaction_loss_kind="learned")
    net = tiny(tcfg, 4, 4)
    theta, phi = random_params(net, tcfg, 2)
    phi = phi.replace(np.zeros(phi.size))
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    out = runner.run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    diag = grad_similarity_diagnostic(runner, out)
    assert diag["inner"] == 0.0 and diag["cosine"] is None


# ------------------------------------------------------------ baselines


def test_random_agent_is_uniform():
    agent = RandomAgent(TINY_ENV)
    rng = np.random.default_rng(0)
    n = 100_000
    counts = np.bincount([agent.act(rng) for _ in range(n)], minlength=4)
    assert np.all(np.abs(counts / n - 0.25) < 0.01)


def test_nearest_neighbor_exact_match_returns_optimal_action():
    scenes = [generate_scene(s, TINY_ENV) for s in (0, 1)]
    index = build_nn_index(scenes, None, TINY_ENV)
    for task in TASKS:
        obs = observe(task.scene, task.pose, task.target, TINY_ENV)
        feats, acts = index.by_target[task.target]
        hits = np.flatnonzero((feats == obs[: index.scene_dim]).all(axis=1))
        assert hits.size
        assert index.query(obs, task.target) == acts[hits[0]]
    # a state whose observation is unique in the index maps to its own optimal action
    scene = scenes[0]
    single = build_nn_index([scene], None, TINY_ENV)
    obs_all = {}
    for r, c in scene.walkable_cells():
        for h in range(8):
            pose = Pose(r, c, h)
            obs_all.setdefault(observe(scene, pose, 0, TINY_ENV).tobytes(), []).append(pose)
    unique = [poses[0] for poses in obs_all.values() if len(poses) == 1]
    assert unique
    for pose in unique:
        obs = observe(scene, pose, 0, TINY_ENV)
        assert single.query(obs, 0) == optimal_action(scene, pose, 0, TINY_ENV)
    agent = NearestNeighborAgent(index, TINY_ENV)
    assert agent.episode(TASKS[0], np.random.default_rng(0)).path_length >= 1
    with pytest.raises(ValueError):
        index.query(obs, 5)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_inner_update_aborts_episode_and_training_skips_it():
    tcfg = small_train_cfg(alpha=1e308, k=2, total_episodes=12)
    net = tiny(tcfg, 4, 4)
    theta, phi = random_params(net, tcfg, 0, scale=3.0)
    runner = EpisodeRunner(net, TINY_ENV, tcfg)
    with pytest.raises(EpisodeAborted, match="non-finite"):
        runner.run(theta, phi, TASKS[0], np.random.default_rng(0), forced_actions=NO_DONE)
    # uniform policy: most sampled episodes outlive the first update
    init = (theta.replace(np.zeros(theta.size)), phi)
    res = train(lambda rng: TASKS[int(rng.integers(len(TASKS)))], TINY_ENV, net, tcfg, init=init)
    aborted = [r for r in res.log if "aborted" in r]
    assert aborted and all(r["skipped"] for r in aborted)
    assert len(res.log) == 12 and np.isfinite(res.final_theta.values).all()


def test_zero_update_cap_trains_exactly_like_a3c():
    scenes = [t.scene for t in TASKS[::4]]
    savn = small_train_cfg(interaction_loss_kind="learned", max_inner_updates=0, total_episodes=12, val_every=6, val_episodes=4)
    a3c = savn.replace(agent="a3c", interaction_loss_kind="none")
    net = tiny(savn, 4, 4)
    ra = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, savn, val_tasks=TASKS[:4])
    rb = train(TaskSampler(scenes, None, TINY_ENV), TINY_ENV, net, a3c, val_tasks=TASKS[:4])
    assert ra.final_theta == rb.final_theta and ra.theta == rb.theta
    strip = lambda log: [{k: v for k, v in r.items() if k not in ("agent", "grad_norm_phi")} for r in log]  # noqa: E731
    assert strip(ra.log) == strip(rb.log)
