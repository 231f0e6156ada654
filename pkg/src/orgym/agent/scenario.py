"""The frozen two-slice scenario used by the oracle, the training env and tests.

Slice 0 is broadband (three saturated UEs), slice 1 time-sensitive (three
constant-bit-rate UEs). UEs within each slice have different spectral
efficiencies so the scheduling policy matters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..ransim.cell import CellState, run_cell
from ..ransim.config import ScenarioConfig, config_from_dict
from .reward import RewardWeights, epoch_metrics

BROADBAND, TIME_SENSITIVE = 0, 1


def frozen_two_slice_config(kpm_window_ms: int = 10, seed: int = 0) -> ScenarioConfig:
    return config_from_dict(
        {
            "network-slicing": True,
            "rbg-count": 17,
            "slice-allocation": {"0": [0, 7], "1": [8, 16]},
            "slice-scheduling-policy": [0, 0],
            "slice-users": {"0": [0, 1, 2], "1": [3, 4, 5]},
            "ues": [
                {"id": 0, "efficiency": 2400, "saturated": True},
                {"id": 1, "efficiency": 1600, "saturated": True},
                {"id": 2, "efficiency": 800, "saturated": True},
                {"id": 3, "efficiency": 2400, "rate-bps": 3_000_000},
                {"id": 4, "efficiency": 1200, "rate-bps": 3_000_000},
                {"id": 5, "efficiency": 600, "rate-bps": 3_000_000},
            ],
            "tti-ms": 1,
            "kpm-window-ms": kpm_window_ms,
            "seed": seed,
        }
    )


@dataclass
class FrozenScenario:
    cell: CellState  # snapshot; never stepped directly
    history: list = field(default_factory=list)  # KPM records up to the snapshot
    weights: RewardWeights = field(default_factory=RewardWeights)
    broadband: int = BROADBAND
    timesensitive: int = TIME_SENSITIVE

    @property
    def node_id(self) -> str:
        return self.cell.config.node_id

    def fork(self) -> CellState:
        return self.cell.snapshot()


def calibrate_weights(cell: CellState, horizon_ms: int = 1000, w_thr: float = 0.5,
                      broadband: int = BROADBAND, timesensitive: int = TIME_SENSITIVE) -> RewardWeights:
    """Reference constants from a run of the unchanged configuration.

    ``tb_ref`` is the broadband TBs per window observed; ``buf_ref`` is the
    time-sensitive buffer observed, floored at one window of offered load.
    """
    probe = cell.snapshot()
    records = run_cell(probe, horizon_ms // probe.config.tti_ms)
    tbs, buf = epoch_metrics(records, broadband, timesensitive)
    cfg = cell.config
    offered = sum(
        u.rate_bps * cfg.kpm_window_ms / 8000.0
        for u in cfg.ues
        if u.ue_id in cfg.slice_users.get(timesensitive, []) and not u.saturated
    )
    return RewardWeights(w_thr, 1.0 - w_thr, tb_ref=max(tbs, 1.0), buf_ref=max(buf, offered, 1.0))


def frozen_scenario(config: ScenarioConfig | None = None, warmup_ms: int = 200,
                    calibration_ms: int = 1000) -> FrozenScenario:
    config = config or frozen_two_slice_config()
    cell = CellState(config)
    # the observation needs four full windows of history, whatever the window length
    warmup_ms = max(warmup_ms, 4 * config.kpm_window_ms)
    history = run_cell(cell, warmup_ms // config.tti_ms)
    weights = calibrate_weights(cell, calibration_ms)
    return FrozenScenario(cell, history, weights)
