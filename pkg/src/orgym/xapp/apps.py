"""Concrete xApps: ``sched``, ``sched-slicing`` and the slice prioritization xApp."""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from ..ransim.cell import ControlDirective
from .actions import sched_action_space, sched_slicing_action_space
from .connector import XApp, XAppDescriptor
from .features import WindowFeatureReducer


class InvalidShare(ValueError):
    pass


def sched_xapp(
    model,
    node_ids: Sequence[str],
    xapp_id: str = "sched",
    report_period_ms: int = 250,
    n_windows: int = 4,
    epoch_periods: int = 4,
) -> XApp:
    """xApp that picks one scheduling policy per slice."""
    return XApp(
        XAppDescriptor(
            xapp_id,
            tuple(node_ids),
            report_period_ms,
            model=model,
            processor=WindowFeatureReducer(n_windows),
            epoch_periods=epoch_periods,
            action_space=sched_action_space,
        )
    )


def sched_slicing_xapp(
    model,
    node_ids: Sequence[str],
    xapp_id: str = "sched-slicing",
    report_period_ms: int = 250,
    n_windows: int = 4,
    epoch_periods: int = 4,
) -> XApp:
    """xApp that picks scheduling policies and the slice RBG partition."""
    return XApp(
        XAppDescriptor(
            xapp_id,
            tuple(node_ids),
            report_period_ms,
            model=model,
            processor=WindowFeatureReducer(n_windows),
            epoch_periods=epoch_periods,
            action_space=sched_slicing_action_space,
        )
    )


def prioritize_xapp(
    target_slice: int,
    boost_share: float,
    slice_ids: Sequence[int],
    rbg_count: int,
    node_id: str = "",
) -> ControlDirective:
    """Give ``target_slice`` ceil(boost_share * rbg_count) RBGs.

    The remaining RBGs are split evenly across the other slices, remainder to
    the lowest slice ids. Ranges are laid out contiguously in slice-id order.
    ``boost_share`` must lie in [1/n_slices, 0.9].
    """
    ids = sorted(slice_ids)
    if target_slice not in ids:
        raise InvalidShare(f"unknown slice {target_slice}")
    n = len(ids)
    if not (1.0 / n - 1e-12 <= boost_share <= 0.9):
        raise InvalidShare(f"boost_share {boost_share} outside [1/{n}, 0.9]")
    boosted = math.ceil(boost_share * rbg_count - 1e-9)
    rest = rbg_count - boosted
    others = [s for s in ids if s != target_slice]
    if others and rest < len(others):
        raise InvalidShare(f"{rest} RBGs left for {len(others)} slices")
    sizes = {target_slice: boosted}
    if others:
        base, extra = divmod(rest, len(others))
        for i, sid in enumerate(others):
            sizes[sid] = base + (1 if i < extra else 0)
    table, start = {}, 0
    for sid in ids:
        table[sid] = (start, start + sizes[sid] - 1)
        start += sizes[sid]
    return ControlDirective(node_id, table, None)


class PrioritizeXApp(XApp):
    """Boosts one slice's RBG share once, at its first decision epoch."""

    def __init__(self, node_ids, target_slice: int, boost_share: float,
                 xapp_id: str = "prioritize", report_period_ms: int = 250):
        super().__init__(
            XAppDescriptor(xapp_id, tuple(node_ids), report_period_ms, epoch_periods=1,
                           processor=WindowFeatureReducer(1))
        )
        self.target_slice = target_slice
        self.boost_share = boost_share
        self.decided_at: Optional[int] = None
        self._geometry: dict[str, tuple[list, int]] = {}

    def prepare(self, node_id, slice_ids, rbg_count):
        self._geometry[node_id] = (list(slice_ids), rbg_count)
        super().prepare(node_id, slice_ids, rbg_count)

    def decide(self, node_id: str, features: np.ndarray):
        if self.decided_at is not None:
            return -1, None
        slice_ids, rbg_count = self._geometry[node_id]
        self.decided_at = self.now_ms
        return 0, prioritize_xapp(self.target_slice, self.boost_share, slice_ids, rbg_count, node_id)
