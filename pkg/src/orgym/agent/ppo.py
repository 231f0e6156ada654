"""PPO actor-critic over a discrete action space, implemented on :class:`MLP`."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import MLP, Adam, log_softmax, softmax

CHECKPOINT_VERSION = 1


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class PPOHyperparams:
    clip: float = 0.2
    gamma: float = 0.99
    lr: float = 3e-4
    epochs: int = 4
    minibatch: int = 64
    ent_coef: float = 0.0
    normalize_advantages: bool = True
    max_grad_norm: float = 0.5


@dataclass
class Trajectory:
    """One or more episodes of (features, action, reward, value) steps."""

    features: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    logprobs: list = field(default_factory=list)
    dones: list = field(default_factory=list)  # True on the last step of an episode

    def add(self, features, action, reward, value, logprob, done):
        self.features.append(np.asarray(features, dtype=np.float64))
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.logprobs.append(float(logprob))
        self.dones.append(bool(done))

    def __len__(self):
        return len(self.actions)

    def check(self):
        n = len(self.actions)
        if not all(len(x) == n for x in (self.features, self.rewards, self.values, self.logprobs, self.dones)):
            raise ValueError("trajectory fields have different lengths")
        if not np.all(np.isfinite(self.rewards)):
            raise ValueError("non-finite reward")


class ActorCritic:
    """Actor and critic of identical hidden shape (default 5 x 30, tanh)."""

    def __init__(self, n_features, n_actions, hidden=30, layers=5, seed=0, transform="log1p"):
        self.n_features = n_features
        self.n_actions = n_actions
        self.hidden = hidden
        self.layers = layers
        self.transform = transform
        body = [hidden] * layers
        # zero actor output layer: the initial policy is exactly uniform
        self.actor = MLP([n_features, *body, n_actions], seed=seed, out_scale=0.0)
        self.critic = MLP([n_features, *body, 1], seed=seed + 1)
        self.actor_opt = None
        self.critic_opt = None

    def prep(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.transform == "log1p":
            return np.sign(X) * np.log1p(np.abs(X))
        return X

    def probs(self, X):
        return softmax(self.actor.forward(self.prep(X)))

    def value(self, X):
        return self.critic.forward(self.prep(X))[:, 0]

    def save(self, path):
        data = {
            "version": CHECKPOINT_VERSION,
            "n_features": self.n_features,
            "n_actions": self.n_actions,
            "hidden": self.hidden,
            "layers": self.layers,
            "transform": self.transform,
            "actor": self.actor.to_json(),
            "critic": self.critic.to_json(),
        }
        Path(path).write_text(json.dumps(data))

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text())
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')}")
        nets = cls(data["n_features"], data["n_actions"], data["hidden"], data["layers"], transform=data["transform"])
        nets.actor = MLP.from_json(data["actor"])
        nets.critic = MLP.from_json(data["critic"])
        return nets


def act(nets: ActorCritic, features, mode="greedy", rng=None):
    """Pick an action id: ``greedy`` is the argmax (lowest id on ties), ``sample`` draws."""
    p = nets.probs(features)[0]
    if mode == "greedy":
        return int(np.argmax(p))
    if mode == "sample":
        rng = rng if rng is not None else np.random.default_rng()
        return int(rng.choice(len(p), p=p / p.sum()))
    raise ValueError(f"unknown mode {mode!r}")


def actor_loss_and_grads(actor: MLP, X, actions, advantages, old_logp, clip=0.2, ent_coef=0.0):
    """Clipped-surrogate loss (to minimize) and its parameter gradients."""
    logits = actor.forward(X)
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    n = len(actions)
    idx = np.arange(n)
    logp = logp_all[idx, actions]
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    surr1, surr2 = ratio * advantages, clipped * advantages
    entropy = -(p * logp_all).sum(axis=1)
    loss = -np.minimum(surr1, surr2).mean() - ent_coef * entropy.mean()

    active = surr1 <= surr2
    dlogp = np.where(active, -ratio * advantages, 0.0) / n
    onehot = np.zeros_like(logits)
    onehot[idx, actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - p)
    if ent_coef:
        dH = -p * (logp_all + entropy[:, None])
        dlogits -= ent_coef * dH / n
    return loss, actor.backward(dlogits)


def critic_loss_and_grads(critic: MLP, X, returns):
    v = critic.forward(X)[:, 0]
    diff = v - returns
    loss = float(np.mean(diff**2))
    dv = (2.0 / len(returns)) * diff
    return loss, critic.backward(dv[:, None])


def discounted_returns(rewards, dones, gamma):
    out = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        if dones[t]:
            running = 0.0
        running = rewards[t] + gamma * running
        out[t] = running
    return out


def _clip_norm(grads, max_norm):
    if not max_norm:
        return grads
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm:
        return [g * (max_norm / total) for g in grads]
    return grads


def ppo_update(nets: ActorCritic, trajectories, hp: PPOHyperparams | None = None, rng=None):
    """One PPO update over complete episodes.

    Advantages are discounted returns minus the critic's recorded values.
    Raises NonFiniteGradient, leaving the networks and optimizers untouched,
    if any loss or gradient goes non-finite. Returns (actor_loss, critic_loss).
    """
    hp = hp or PPOHyperparams()
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    for tr in trajectories:
        tr.check()
        if not tr.dones or not tr.dones[-1]:
            raise ValueError("trajectory must end on an episode boundary")
    X = nets.prep(np.vstack([np.vstack(t.features) for t in trajectories]))
    actions = np.concatenate([np.asarray(t.actions, dtype=int) for t in trajectories])
    old_logp = np.concatenate([np.asarray(t.logprobs) for t in trajectories])
    values = np.concatenate([np.asarray(t.values) for t in trajectories])
    returns = np.concatenate([discounted_returns(t.rewards, t.dones, hp.gamma) for t in trajectories])
    adv = returns - values
    if not np.all(np.isfinite(adv)):
        raise NonFiniteGradient("non-finite advantages")
    if hp.normalize_advantages and adv.std() > 1e-8:
        adv = (adv - adv.mean()) / adv.std()

    if nets.actor_opt is None:
        nets.actor_opt = Adam(nets.actor.params, hp.lr)
        nets.critic_opt = Adam(nets.critic.params, hp.lr)
    saved = (
        nets.actor.copy_params(), nets.critic.copy_params(),
        nets.actor_opt.state(), nets.critic_opt.state(),
    )

    n = len(actions)
    a_losses, c_losses = [], []
    try:
        for _ in range(hp.epochs):
            order = rng.permutation(n)
            for start in range(0, n, hp.minibatch):
                mb = order[start : start + hp.minibatch]
                a_loss, a_grads = actor_loss_and_grads(
                    nets.actor, X[mb], actions[mb], adv[mb], old_logp[mb], hp.clip, hp.ent_coef
                )
                c_loss, c_grads = critic_loss_and_grads(nets.critic, X[mb], returns[mb])
                finite = np.isfinite(a_loss) and np.isfinite(c_loss)
                finite = finite and all(np.all(np.isfinite(g)) for g in (*a_grads, *c_grads))
                if not finite:
                    raise NonFiniteGradient("non-finite loss or gradient")
                nets.actor_opt.step(nets.actor.params, _clip_norm(a_grads, hp.max_grad_norm))
                nets.critic_opt.step(nets.critic.params, _clip_norm(c_grads, hp.max_grad_norm))
                a_losses.append(a_loss)
                c_losses.append(c_loss)
    except NonFiniteGradient:
        nets.actor.load_params(saved[0])
        nets.critic.load_params(saved[1])
        nets.actor_opt.restore(saved[2])
        nets.critic_opt.restore(saved[3])
        raise
    return float(np.mean(a_losses)), float(np.mean(c_losses))


def collect_episode(nets: ActorCritic, env, rng, mode="sample") -> Trajectory:
    tr = Trajectory()
    obs = env.reset()
    done = False
    while not done:
        p = nets.probs(obs)[0]
        a = int(rng.choice(len(p), p=p / p.sum())) if mode == "sample" else int(np.argmax(p))
        v = float(nets.value(obs)[0])
        nxt, r, done, _ = env.step(a)
        tr.add(obs, a, r, v, float(np.log(max(p[a], 1e-300))), done)
        obs = nxt
    return tr


def train_ppo(nets: ActorCritic, env, episodes: int, hp: PPOHyperparams | None = None,
              seed: int = 0, episodes_per_update: int = 1, log=None):
    """On-policy training loop; returns the per-episode mean rewards."""
    hp = hp or PPOHyperparams()
    rng = np.random.default_rng(seed)
    curve, batch = [], []
    for ep in range(episodes):
        tr = collect_episode(nets, env, rng)
        batch.append(tr)
        mean_r = float(np.mean(tr.rewards))
        curve.append(mean_r)
        if len(batch) >= episodes_per_update:
            a_loss, c_loss = ppo_update(nets, batch, hp, rng)
            batch = []
            if log is not None:
                log(ep, mean_r, a_loss, c_loss)
    return curve
