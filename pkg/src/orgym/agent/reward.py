"""Reward of the scheduling xApps.

Weighted sum of a broadband term (TX transport blocks per window, rewarded)
and a time-sensitive term (downlink buffer, penalized as a latency proxy).
Both terms are normalized by reference values and clipped to [0, 1], so the
reward lies in [-1, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from ..xapp.features import slice_windows


class MissingSlice(ValueError):
    pass


@dataclass(frozen=True)
class RewardWeights:
    w_thr: float = 0.5
    w_buf: float = 0.5
    tb_ref: float = 1.0  # broadband TBs per window
    buf_ref: float = 1.0  # time-sensitive buffer bytes

    def __post_init__(self):
        if self.w_thr < 0 or self.w_buf < 0 or abs(self.w_thr + self.w_buf - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        if self.tb_ref <= 0 or self.buf_ref <= 0:
            raise ValueError("reference constants must be positive")


def reward_from_metrics(tbs_per_window: float, buffer_bytes: float, weights: RewardWeights) -> float:
    thr = min(max(tbs_per_window, 0.0) / weights.tb_ref, 1.0)
    buf = min(max(buffer_bytes, 0.0) / weights.buf_ref, 1.0)
    return weights.w_thr * thr - weights.w_buf * buf


def epoch_metrics(records: Iterable, broadband_slice: int = 0, timesensitive_slice: int = 1) -> tuple[float, float]:
    """(mean broadband TBs per window, mean time-sensitive buffer bytes)."""
    _, windows = slice_windows(records)
    bb = [w[broadband_slice][2] for w in windows.values() if broadband_slice in w]
    ts = [w[timesensitive_slice][1] for w in windows.values() if timesensitive_slice in w]
    if not bb:
        raise MissingSlice(f"no records for broadband slice {broadband_slice}")
    if not ts:
        raise MissingSlice(f"no records for time-sensitive slice {timesensitive_slice}")
    return sum(bb) / len(bb), sum(ts) / len(ts)


def compute_reward(
    records: Iterable,
    weights: RewardWeights,
    broadband_slice: int = 0,
    timesensitive_slice: int = 1,
) -> float:
    tbs, buf = epoch_metrics(records, broadband_slice, timesensitive_slice)
    return reward_from_metrics(tbs, buf, weights)
