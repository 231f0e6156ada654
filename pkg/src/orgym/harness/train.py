"""Training entry points: PPO on a frozen scenario, or offline from recorded KPM data."""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ..agent.env import SlicingEnv, random_policy_mean_reward
from ..agent.policies import PPOPolicy
from ..agent.ppo import ActorCritic, PPOHyperparams, Trajectory, ppo_update
from ..agent.reward import RewardWeights, compute_reward
from ..agent.scenario import frozen_scenario
from ..ransim.config import ScenarioConfig
from ..xapp.actions import sched_action_space, sched_slicing_action_space
from ..xapp.features import InsufficientHistory, slice_windows, window_features

log = logging.getLogger(__name__)

TRAINING_LOG_HEADER = ["episode", "mean_reward", "actor_loss", "critic_loss"]


class TrainingLog:
    """Collects ``episode,mean_reward,actor_loss,critic_loss`` rows."""

    def __init__(self):
        self.rows: list[tuple[int, float, float, float]] = []

    def __call__(self, episode, mean_reward, actor_loss, critic_loss):
        self.rows.append((int(episode), float(mean_reward), float(actor_loss), float(critic_loss)))
        log.info("episode %d reward %.4f actor %.5f critic %.5f", episode, mean_reward, actor_loss, critic_loss)

    def write(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAINING_LOG_HEADER)
            for ep, r, a, c in self.rows:
                w.writerow([ep, f"{r:.6f}", f"{a:.6f}", f"{c:.6f}"])


def train_on_scenario(config: Optional[ScenarioConfig] = None, episodes: int = 200, seed: int = 0,
                      joint: bool = True, out_dir: str | Path | None = None, **ppo_params) -> PPOPolicy:
    """Train a PPO policy against the frozen snapshot of ``config``.

    Writes ``checkpoint.json`` and ``training.csv`` into ``out_dir`` if given.
    """
    scenario = frozen_scenario(config)
    cfg = scenario.cell.config
    space = (sched_slicing_action_space if joint else sched_action_space)(cfg.slice_ids, cfg.rbg_count)
    env = SlicingEnv(scenario, space)
    training_log = TrainingLog()
    policy = PPOPolicy(episodes=episodes, seed=seed, **ppo_params).fit(env, log=training_log)
    policy.baseline_ = random_policy_mean_reward(env, episodes=10, seed=seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        policy.save(out / "checkpoint.json")
        training_log.write(out / "training.csv")
    return policy


# -- offline ---------------------------------------------------------------------
class RecordCollector:
    """Replay sink that keeps every record of every indication, in order."""

    def __init__(self):
        self.records: list[dict] = []
        self.indications = 0

    def __call__(self, body: dict) -> None:
        self.records.extend(body["records"])
        self.indications += 1


def offline_trajectories(records, weights: RewardWeights, epoch_windows: int = 4, n_windows: int = 4,
                         horizon: int = 16, slice_ids=None, broadband: int = 0, timesensitive: int = 1,
                         rbg_count: int = 17):
    """Cut a recorded stream into epochs of logged (state, action, reward).

    The state is the feature vector at the start of the epoch, the action is
    the scheduling-policy tuple in force (read from ``sched_policy``), and the
    reward is computed over the epoch's windows. Values and log-probabilities
    are left at zero for :func:`train_offline` to fill from the current nets.
    """
    ids, windows = slice_windows(records, slice_ids)
    space = sched_action_space(ids, rbg_count)
    by_ts: dict[int, list] = {}
    for r in records:
        by_ts.setdefault(int(r["ts_ms"]), []).append(r)
    stamps = list(windows)
    out: list[Trajectory] = []
    tr = Trajectory()
    for start in range(n_windows, len(stamps) - epoch_windows + 1, epoch_windows):
        history = [r for ts in stamps[start - n_windows : start] for r in by_ts[ts]]
        epoch = [r for ts in stamps[start : start + epoch_windows] for r in by_ts[ts]]
        try:
            feats = window_features(history, n_windows, ids)
        except InsufficientHistory:
            continue
        policy = {int(r["slice_id"]): int(r["sched_policy"]) for r in epoch if int(r["slice_id"]) >= 0}
        action = space.encode([policy.get(s, 0) for s in ids])
        reward = compute_reward(epoch, weights, broadband, timesensitive)
        tr.add(feats, action, reward, 0.0, 0.0, False)
        if len(tr) == horizon:
            tr.dones[-1] = True
            out.append(tr)
            tr = Trajectory()
    if len(tr):
        tr.dones[-1] = True
        out.append(tr)
    return out, space


def train_offline(nets: ActorCritic, trajectories, updates: int = 50, hp: Optional[PPOHyperparams] = None,
                  seed: int = 0, log_fn=None):
    """Advantage-weighted updates on logged actions.

    Each update refreshes values and log-probabilities from the current nets,
    so the first PPO epoch of every update starts at ratio 1.
    """
    rng = np.random.default_rng(seed)
    for u in range(updates):
        for tr in trajectories:
            X = np.vstack(tr.features)
            p = nets.probs(X)
            tr.values = [float(v) for v in nets.value(X)]
            tr.logprobs = [float(np.log(max(p[i, a], 1e-300))) for i, a in enumerate(tr.actions)]
        a_loss, c_loss = ppo_update(nets, trajectories, hp, rng)
        if log_fn is not None:
            mean_r = float(np.mean([r for tr in trajectories for r in tr.rewards]))
            log_fn(u, mean_r, a_loss, c_loss)
    return nets
