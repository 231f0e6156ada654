"""Decision models with a scikit-learn estimator surface.

Every model exposes ``fit`` / ``predict(X) -> action ids`` and
``get_params`` / ``set_params`` (via :class:`sklearn.base.BaseEstimator`),
so xApps can swap them freely.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .oracle import oracle_policy
from .ppo import ActorCritic, PPOHyperparams, act, train_ppo


class ConstantPolicy(BaseEstimator):
    """Always the same action (``-1`` is a no-op)."""

    def __init__(self, action: int = 0):
        self.action = action

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        X = check_array(X, ensure_all_finite=False)
        return np.full(X.shape[0], self.action, dtype=int)


class UniformRandomPolicy(BaseEstimator):
    def __init__(self, n_actions: int = 9, seed: int = 0):
        self.n_actions = n_actions
        self.seed = seed

    def fit(self, X=None, y=None):
        self.rng_ = np.random.default_rng(self.seed)
        return self

    def predict(self, X):
        if not hasattr(self, "rng_"):
            self.fit()
        X = check_array(X)
        return self.rng_.integers(self.n_actions, size=X.shape[0])


class OraclePolicy(BaseEstimator):
    """Exhaustive search on a frozen scenario; ``predict`` returns its argmax."""

    def __init__(self, scenario=None, space=None, horizon_ms: int = 1000):
        self.scenario = scenario
        self.space = space
        self.horizon_ms = horizon_ms

    def fit(self, X=None, y=None):
        result = oracle_policy(self.scenario, self.space, self.horizon_ms)
        self.best_action_ = result.best_action
        self.values_ = result.values
        self.result_ = result
        return self

    def predict(self, X):
        check_is_fitted(self, "best_action_")
        X = check_array(X)
        return np.full(X.shape[0], self.best_action_, dtype=int)


class PPOPolicy(BaseEstimator):
    """PPO actor-critic (``layers`` x ``hidden`` tanh units) trained on an env."""

    def __init__(self, hidden: int = 30, layers: int = 5, episodes: int = 200, lr: float = 3e-4,
                 clip: float = 0.2, gamma: float = 0.99, epochs: int = 4, minibatch: int = 64,
                 ent_coef: float = 0.0, seed: int = 0):
        self.hidden = hidden
        self.layers = layers
        self.episodes = episodes
        self.lr = lr
        self.clip = clip
        self.gamma = gamma
        self.epochs = epochs
        self.minibatch = minibatch
        self.ent_coef = ent_coef
        self.seed = seed

    def hyperparams(self) -> PPOHyperparams:
        return PPOHyperparams(clip=self.clip, gamma=self.gamma, lr=self.lr, epochs=self.epochs,
                              minibatch=self.minibatch, ent_coef=self.ent_coef)

    def init_nets(self, n_features: int, n_actions: int) -> "PPOPolicy":
        self.nets_ = ActorCritic(n_features, n_actions, self.hidden, self.layers, seed=self.seed)
        return self

    def fit(self, env, y=None, log=None):
        """Train on-policy against ``env`` (a :class:`SlicingEnv`)."""
        if not hasattr(self, "nets_"):
            self.init_nets(env.n_features, env.n_actions)
        self.curve_ = train_ppo(self.nets_, env, self.episodes, self.hyperparams(), seed=self.seed, log=log)
        return self

    def predict(self, X):
        check_is_fitted(self, "nets_")
        X = check_array(X)
        return np.array([act(self.nets_, x, "greedy") for x in X], dtype=int)

    def predict_proba(self, X):
        check_is_fitted(self, "nets_")
        return self.nets_.probs(check_array(X))

    def save(self, path):
        check_is_fitted(self, "nets_")
        self.nets_.save(path)

    @classmethod
    def load(cls, path) -> "PPOPolicy":
        nets = ActorCritic.load(path)
        policy = cls(hidden=nets.hidden, layers=nets.layers)
        policy.nets_ = nets
        return policy
