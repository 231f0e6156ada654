"""Reward, policies, the brute-force oracle and a small PPO actor-critic."""
from .env import SlicingEnv, random_policy_mean_reward, rollout_mean_reward
from .nn import MLP, Adam, log_softmax, softmax
from .oracle import ActionSpaceTooLarge, OracleResult, evaluate_action, oracle_policy
from .policies import ConstantPolicy, OraclePolicy, PPOPolicy, UniformRandomPolicy
from .ppo import (
    ActorCritic,
    NonFiniteGradient,
    PPOHyperparams,
    Trajectory,
    act,
    actor_loss_and_grads,
    collect_episode,
    critic_loss_and_grads,
    discounted_returns,
    ppo_update,
    train_ppo,
)
from .reward import MissingSlice, RewardWeights, compute_reward, epoch_metrics, reward_from_metrics
from .scenario import FrozenScenario, calibrate_weights, frozen_scenario, frozen_two_slice_config

__all__ = [
    "SlicingEnv", "random_policy_mean_reward", "rollout_mean_reward",
    "MLP", "Adam", "log_softmax", "softmax",
    "ActionSpaceTooLarge", "OracleResult", "evaluate_action", "oracle_policy",
    "ConstantPolicy", "OraclePolicy", "PPOPolicy", "UniformRandomPolicy",
    "ActorCritic", "NonFiniteGradient", "PPOHyperparams", "Trajectory", "act",
    "actor_loss_and_grads", "collect_episode", "critic_loss_and_grads", "discounted_returns",
    "ppo_update", "train_ppo",
    "MissingSlice", "RewardWeights", "compute_reward", "epoch_metrics", "reward_from_metrics",
    "FrozenScenario", "calibrate_weights", "frozen_scenario", "frozen_two_slice_config",
]
