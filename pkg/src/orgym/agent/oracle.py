"""Exhaustive-search oracle over an enumerable action space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ransim.cell import run_cell
from .reward import epoch_metrics, reward_from_metrics
from .scenario import FrozenScenario

MAX_ORACLE_ACTIONS = 1024


class ActionSpaceTooLarge(ValueError):
    pass


@dataclass
class OracleResult:
    best_action: int
    values: np.ndarray  # reward per action id
    tbs: np.ndarray  # broadband TBs per window per action id
    buffer: np.ndarray  # time-sensitive buffer bytes per action id

    @property
    def best_value(self) -> float:
        return float(self.values[self.best_action])


def evaluate_action(scenario: FrozenScenario, space, action_id: int, horizon_ms: int) -> tuple[float, float, float]:
    """Simulate one action from the snapshot; returns (reward, tbs, buffer)."""
    cell = scenario.fork()
    cell.apply_control(space.decode(action_id).to_directive(scenario.node_id))
    records = run_cell(cell, horizon_ms // cell.config.tti_ms)
    tbs, buf = epoch_metrics(records, scenario.broadband, scenario.timesensitive)
    return reward_from_metrics(tbs, buf, scenario.weights), tbs, buf


def oracle_policy(scenario: FrozenScenario, space, horizon_ms: int = 1000,
                  max_actions: int = MAX_ORACLE_ACTIONS) -> OracleResult:
    """Evaluate every action from an identical snapshot; ties go to the lowest id."""
    if space.size > max_actions:
        raise ActionSpaceTooLarge(f"{space.size} actions > {max_actions}")
    values, tbs, buf = np.zeros(space.size), np.zeros(space.size), np.zeros(space.size)
    for a in range(space.size):
        values[a], tbs[a], buf[a] = evaluate_action(scenario, space, a, horizon_ms)
    return OracleResult(int(np.argmax(values)), values, tbs, buf)
