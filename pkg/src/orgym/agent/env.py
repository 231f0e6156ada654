"""Episodic control environment over a frozen simulator snapshot.

Each step applies one action as a control directive, runs one decision epoch
and returns the windowed features, the epoch reward and the done flag.
"""
from __future__ import annotations

import numpy as np

from ..ransim.cell import run_cell
from ..xapp.features import window_features
from .reward import epoch_metrics, reward_from_metrics
from .scenario import FrozenScenario


class SlicingEnv:
    def __init__(self, scenario: FrozenScenario, space, epoch_windows: int = 4, n_windows: int = 4,
                 horizon: int = 16):
        self.scenario = scenario
        self.space = space
        self.epoch_windows = epoch_windows
        self.n_windows = n_windows
        self.horizon = horizon
        cfg = scenario.cell.config
        self.slice_ids = cfg.slice_ids
        self.epoch_ttis = epoch_windows * cfg.kpm_window_ms // cfg.tti_ms
        self.cell = None
        self.history = []
        self.t = 0

    @property
    def n_features(self) -> int:
        return 3 * len(self.slice_ids)

    @property
    def n_actions(self) -> int:
        return self.space.size

    def _obs(self):
        tail = self.history[-len(self.scenario.cell.ues) * self.n_windows :]
        return window_features(tail, self.n_windows, self.slice_ids)

    def reset(self):
        self.cell = self.scenario.fork()
        self.history = list(self.scenario.history)
        self.t = 0
        return self._obs()

    def step(self, action: int):
        directive = self.space.decode(int(action)).to_directive(self.scenario.node_id)
        self.cell.apply_control(directive)
        records = run_cell(self.cell, self.epoch_ttis)
        self.history.extend(records)
        tbs, buf = epoch_metrics(records, self.scenario.broadband, self.scenario.timesensitive)
        reward = reward_from_metrics(tbs, buf, self.scenario.weights)
        self.t += 1
        return self._obs(), reward, self.t >= self.horizon, {"tbs": tbs, "buffer": buf}


def rollout_mean_reward(env: SlicingEnv, choose, episodes: int = 1) -> float:
    """Mean per-step reward of ``choose(obs) -> action`` over whole episodes."""
    total, steps = 0.0, 0
    for _ in range(episodes):
        obs, done = env.reset(), False
        while not done:
            obs, r, done, _ = env.step(choose(obs))
            total += r
            steps += 1
    return total / max(steps, 1)


def random_policy_mean_reward(env: SlicingEnv, episodes: int, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return rollout_mean_reward(env, lambda obs: int(rng.integers(env.n_actions)), episodes)
