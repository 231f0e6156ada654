import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import orgym.agent.ppo as ppo_mod
from orgym.agent import (
    MLP,
    ActionSpaceTooLarge,
    ActorCritic,
    FrozenScenario,
    MissingSlice,
    NonFiniteGradient,
    OraclePolicy,
    PPOHyperparams,
    PPOPolicy,
    RewardWeights,
    SlicingEnv,
    Trajectory,
    act,
    compute_reward,
    discounted_returns,
    frozen_scenario,
    oracle_policy,
    ppo_update,
    reward_from_metrics,
    softmax,
    train_ppo,
)
from orgym.xapp import sched_action_space, sched_slicing_action_space

from helpers import gradient_check

W = RewardWeights(0.5, 0.5, tb_ref=30.0, buf_ref=1000.0)


@pytest.fixture(scope="module")
def scenario():
    return frozen_scenario()


class SubSpace:
    """A few chosen ids of a larger space, renumbered from 0."""

    def __init__(self, base, ids):
        self.base, self.ids = base, list(ids)
        self.size = len(self.ids)

    def decode(self, a):
        return self.base.decode(self.ids[a])


class HugeSpace:
    size = 5000


# -- reward -------------------------------------------------------------------------


def test_reward_examples():
    assert reward_from_metrics(30.0, 0.0, W) == pytest.approx(0.5)
    assert reward_from_metrics(0.0, 1000.0, W) == pytest.approx(-0.5)
    assert reward_from_metrics(300.0, 0.0, W) == pytest.approx(0.5)
    assert reward_from_metrics(15.0, 500.0, W) == pytest.approx(0.0)


def test_reward_weights_validation():
    with pytest.raises(ValueError):
        RewardWeights(0.6, 0.6)
    with pytest.raises(ValueError):
        RewardWeights(0.5, 0.5, tb_ref=0.0)


def test_reward_monotone_on_grid():
    tbs = np.linspace(0, 60, 121)
    bufs = np.linspace(0, 2000, 81)
    for b in bufs:
        r = [reward_from_metrics(t, b, W) for t in tbs]
        assert all(x <= y for x, y in zip(r, r[1:]))
    for t in tbs:
        r = [reward_from_metrics(t, b, W) for b in bufs]
        assert all(x >= y for x, y in zip(r, r[1:]))


@given(st.floats(0, 1e9), st.floats(0, 1e12), st.floats(0, 1))
def test_reward_bounded(tbs, buf, w):
    weights = RewardWeights(w, 1 - w, tb_ref=17.0, buf_ref=4096.0)
    assert -1.0 <= reward_from_metrics(tbs, buf, weights) <= 1.0


def test_compute_reward_from_records():
    def rec(ts, sid, buf, tbs):
        return {"ts_ms": ts, "slice_id": sid, "ue_id": sid, "dl_thr_mbps": 0.0, "dl_buffer_bytes": buf,
                "dl_tx_tbs": tbs}

    records = [rec(10, 0, 0, 20), rec(10, 1, 400, 1), rec(20, 0, 0, 40), rec(20, 1, 600, 1)]
    assert compute_reward(records, W) == pytest.approx(0.5 * 1.0 - 0.5 * 0.5)
    with pytest.raises(MissingSlice):
        compute_reward(records[::2], W)


# -- networks and gradients ---------------------------------------------------------------


def test_gradient_check():
    assert max(gradient_check(seed) for seed in range(3)) <= 1e-4


def test_softmax_and_uniform_greedy():
    nets = ActorCritic(6, 9, seed=4)
    p = nets.probs(np.random.default_rng(0).normal(size=(5, 6)))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert np.allclose(p, 1 / 9)
    assert act(nets, np.ones(6), "greedy") == 0
    big = softmax(np.array([[1000.0, -1000.0, 0.0]]))
    assert abs(big.sum() - 1.0) <= 1e-9 and np.isfinite(big).all()


def test_sampling_matches_probabilities():
    nets = ActorCritic(4, 5, seed=2)
    nets.actor = MLP([4, 30, 30, 30, 30, 30, 5], seed=9, out_scale=3.0)
    x = np.array([0.3, -1.0, 2.0, 0.5])
    p = nets.probs(x)[0]
    rng = np.random.default_rng(11)
    n = 100_000
    counts = np.bincount([act(nets, x, "sample", rng) for _ in range(n)], minlength=5)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sigma)
    assert p.max() - p.min() > 0.05  # a non-trivial distribution


def test_discounted_returns_reset_at_episode_end():
    r = discounted_returns([1.0, 1.0, 1.0, 1.0], [False, True, False, True], 0.5)
    assert r.tolist() == [1.5, 1.0, 1.5, 1.0]


# -- PPO update -------------------------------------------------------------------------


def _trajectory(nets, n=16, seed=0, exact_values=False):
    rng = np.random.default_rng(seed)
    tr = Trajectory()
    X = rng.normal(size=(n, nets.n_features))
    rewards = rng.normal(size=n)
    dones = [i == n - 1 for i in range(n)]
    returns = discounted_returns(rewards, dones, 0.99)
    for i in range(n):
        p = nets.probs(X[i])[0]
        a = int(rng.integers(nets.n_actions))
        v = returns[i] if exact_values else float(nets.value(X[i])[0])
        tr.add(X[i], a, rewards[i], v, np.log(p[a]), dones[i])
    return tr


def test_zero_advantage_leaves_actor_unchanged():
    nets = ActorCritic(6, 9, seed=1)
    nets.actor = MLP([6, 30, 30, 30, 30, 30, 9], seed=3)
    before = nets.actor.get_flat().copy()
    critic_before = nets.critic.get_flat().copy()
    ppo_update(nets, _trajectory(nets, exact_values=True), PPOHyperparams(gamma=0.99))
    assert np.array_equal(nets.actor.get_flat(), before)
    assert not np.array_equal(nets.critic.get_flat(), critic_before)


def test_update_changes_actor_and_stays_finite():
    nets = ActorCritic(6, 9, seed=1)
    before = nets.actor.get_flat().copy()
    losses = ppo_update(nets, [_trajectory(nets, seed=s) for s in range(3)])
    assert all(np.isfinite(losses))
    assert not np.array_equal(nets.actor.get_flat(), before)
    assert np.isfinite(nets.actor.get_flat()).all() and np.isfinite(nets.critic.get_flat()).all()


def test_non_finite_gradient_restores_nets(monkeypatch):
    nets = ActorCritic(6, 9, seed=1)
    ppo_update(nets, _trajectory(nets))  # optimizers exist now
    actor, critic = nets.actor.get_flat().copy(), nets.critic.get_flat().copy()
    adam_t = nets.actor_opt.t
    real = ppo_mod.critic_loss_and_grads
    calls = {"n": 0}

    def flaky(critic_net, X, returns):
        calls["n"] += 1
        loss, grads = real(critic_net, X, returns)
        return (float("nan"), grads) if calls["n"] == 3 else (loss, grads)

    monkeypatch.setattr(ppo_mod, "critic_loss_and_grads", flaky)
    with pytest.raises(NonFiniteGradient):
        ppo_update(nets, _trajectory(nets, seed=5), PPOHyperparams(minibatch=4))
    assert np.array_equal(nets.actor.get_flat(), actor)
    assert np.array_equal(nets.critic.get_flat(), critic)
    assert nets.actor_opt.t == adam_t


def test_update_requires_complete_episode():
    nets = ActorCritic(6, 9)
    tr = _trajectory(nets)
    tr.dones[-1] = False
    with pytest.raises(ValueError):
        ppo_update(nets, tr)


# -- oracle ---------------------------------------------------------------------------------


def test_oracle_single_action(scenario):
    space = SubSpace(sched_slicing_action_space([0, 1], 17), [40])
    result = oracle_policy(scenario, space, 200)
    assert result.best_action == 0 and len(result.values) == 1


def test_oracle_larger_broadband_share_wins(scenario):
    joint = sched_slicing_action_space([0, 1], 17)
    # same policies, broadband partition of 2 vs 15 RBGs; reward counts broadband TBs only
    space = SubSpace(joint, [0, 7 * 9])
    thr_only = FrozenScenario(scenario.cell, scenario.history, RewardWeights(1.0, 0.0, tb_ref=1e6, buf_ref=1.0))
    result = oracle_policy(thr_only, space, 500)
    assert result.best_action == 1
    assert result.tbs[1] > result.tbs[0]


def test_oracle_tie_break_and_table(scenario):
    space = sched_slicing_action_space([0, 1], 17)
    result = oracle_policy(scenario, SubSpace(space, [9, 10, 11]), 300)
    assert len(result.values) == 3
    assert result.values[0] == result.values[1] == result.values[2]
    assert result.best_action == 0


def test_oracle_rejects_huge_space(scenario):
    with pytest.raises(ActionSpaceTooLarge):
        oracle_policy(scenario, HugeSpace())


def test_oracle_policy_estimator(scenario):
    pol = OraclePolicy(scenario, sched_action_space([0, 1], 17), 500).fit()
    assert pol.predict(np.zeros((3, 6))).tolist() == [pol.best_action_] * 3
    assert len(pol.values_) == 9


# -- training ---------------------------------------------------------------------------------


def test_seeded_training_is_reproducible(scenario):
    space = sched_slicing_action_space([0, 1], 17)
    curves = []
    for _ in range(2):
        env = SlicingEnv(scenario, space, horizon=4)
        curves.append(train_ppo(ActorCritic(6, 72, seed=7), env, 6, seed=7))
    assert curves[0] == curves[1]


@pytest.mark.parametrize("pair", [(0, 9), (9, 0), (27, 28), (36, 11)])
def test_two_action_training_matches_oracle(scenario, pair):
    space = SubSpace(sched_slicing_action_space([0, 1], 17), pair)
    oracle = oracle_policy(scenario, space, 640)
    env = SlicingEnv(scenario, space, horizon=8)
    policy = PPOPolicy(episodes=60, lr=3e-3, seed=0).fit(env)
    assert policy.predict(env.reset()[None, :])[0] == oracle.best_action


def test_checkpoint_round_trip(tmp_path, scenario):
    env = SlicingEnv(scenario, sched_action_space([0, 1], 17), horizon=4)
    policy = PPOPolicy(episodes=3, seed=1).fit(env)
    path = tmp_path / "ckpt.json"
    policy.save(path)
    data = json.loads(path.read_text())
    assert data["actor"]["shapes"][0] == [6, 30] and len(data["actor"]["shapes"]) == 12
    back = PPOPolicy.load(path)
    X = np.random.default_rng(0).normal(size=(4, 6)) * 1000
    assert np.array_equal(back.predict_proba(X), policy.predict_proba(X))
    assert back.get_params()["hidden"] == 30 and back.get_params()["layers"] == 5
