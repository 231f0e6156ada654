"""Per-slice MAC schedulers: round-robin (0), waterfilling (1), proportional fair (2).

Each scheduler assigns the RBGs of one slice range to the slice's UEs for a
single TTI. A UE only receives RBGs while the bits already granted to it this
TTI do not cover its buffer, so UEs with empty buffers get nothing and
surplus RBGs stay idle.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .config import POLICY_PROPORTIONAL_FAIR, POLICY_ROUND_ROBIN, POLICY_WATERFILLING

PF_SMOOTHING = 0.01  # per-TTI weight of the newest sample in the PF average


@dataclass
class UeState:
    ue_id: int
    buffer: int = 0  # bytes queued for downlink
    efficiency: float = 0.0  # current bits per RBG per TTI
    avg_rate: float = 1.0  # PF smoothed rate, bits per TTI
    tx_bytes: int = 0
    tx_tbs: int = 0
    rbgs: int = 0  # cumulative RBGs granted
    offered: int = 0  # cumulative bytes offered by traffic

    @property
    def demand_bits(self) -> int:
        return self.buffer * 8


@dataclass
class SliceState:
    slice_id: int
    rr_pointer: int = 0


def _round_robin(rbgs, slice_state, ues, granted, demand):
    n = len(ues)
    out = {}
    ptr = slice_state.rr_pointer % n
    for rbg in rbgs:
        for step in range(n):
            i = (ptr + step) % n
            if granted[i] < demand[i]:
                break
        else:
            break
        out[rbg] = ues[i].ue_id
        granted[i] += ues[i].efficiency
        ptr = (i + 1) % n
    slice_state.rr_pointer = ptr
    return out


def _waterfilling(rbgs, ues, granted, demand):
    # Grant each RBG to the UE with the lowest water level: bits granted this
    # TTI, then cumulative bytes served, then UE id.
    out = {}
    for rbg in rbgs:
        best = None
        for i, ue in enumerate(ues):
            if granted[i] >= demand[i]:
                continue
            key = (granted[i], ue.tx_bytes, ue.ue_id)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            break
        i = best[1]
        out[rbg] = ues[i].ue_id
        granted[i] += ues[i].efficiency
    return out


def _proportional_fair(rbgs, ues, granted, demand, beta=PF_SMOOTHING):
    # Metric: instantaneous rate over the average, where the average already
    # accounts for what this TTI has granted so far.
    out = {}
    keep = 1.0 - beta
    for rbg in rbgs:
        best_i, best_m = -1, -1.0
        for i, ue in enumerate(ues):
            if granted[i] >= demand[i]:
                continue
            avg = keep * ue.avg_rate + beta * granted[i]
            m = ue.efficiency / (avg if avg > 1e-12 else 1e-12)
            if m > best_m:
                best_i, best_m = i, m
        if best_i < 0:
            break
        out[rbg] = ues[best_i].ue_id
        granted[best_i] += ues[best_i].efficiency
    return out


def allocate_slice(
    slice_state: SliceState,
    rbg_range: tuple[int, int],
    policy_code: int,
    ue_states: Sequence[UeState],
) -> dict[int, int]:
    """Assign the RBGs of ``rbg_range`` (inclusive) for one TTI.

    Returns a partial allocation map ``{rbg: ue_id}``; RBGs missing from the
    map are idle. ``ue_states`` must be the slice's UEs; they are scheduled in
    ascending UE id order so ties always go to the lowest id.
    """
    first, last = rbg_range
    if not ue_states or last < first:
        return {}
    ues = sorted(ue_states, key=lambda u: u.ue_id)
    demand = [u.buffer * 8 for u in ues]
    if not any(demand):
        return {}
    granted = [0.0] * len(ues)
    rbgs = range(first, last + 1)
    if policy_code == POLICY_ROUND_ROBIN:
        return _round_robin(rbgs, slice_state, ues, granted, demand)
    if policy_code == POLICY_WATERFILLING:
        return _waterfilling(rbgs, ues, granted, demand)
    if policy_code == POLICY_PROPORTIONAL_FAIR:
        return _proportional_fair(rbgs, ues, granted, demand)
    raise ValueError(f"unknown policy code {policy_code}")
