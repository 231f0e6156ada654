"""Discrete action spaces of the scheduling xApps."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

from ..ransim.cell import ControlDirective
from ..ransim.config import POLICY_CODES

MIN_SLICE_RBGS = 2


@dataclass(frozen=True)
class Action:
    action_id: int
    policies: tuple
    allocation: Optional[dict] = None  # slice id -> (first, last); None keeps the current table

    def to_directive(self, node_id: str) -> ControlDirective:
        alloc = dict(self.allocation) if self.allocation is not None else None
        return ControlDirective(node_id, alloc, list(self.policies))


def partition_catalog(rbg_count: int, slice_ids: Sequence[int], min_rbgs: int = MIN_SLICE_RBGS) -> list[dict]:
    """Contiguous RBG partitions with every slice owning at least ``min_rbgs``.

    Cut points between slices are taken from the even RBG indices plus the
    last admissible cut (``rbg_count - min_rbgs``). For 17 RBGs and two
    slices this gives cuts {2, 4, ..., 14, 15}: eight partitions.
    """
    ids = sorted(slice_ids)
    n = len(ids)
    if n == 1:
        return [{ids[0]: (0, rbg_count - 1)}]
    grid = sorted(set(range(2, rbg_count - min_rbgs + 1, 2)) | {rbg_count - min_rbgs})
    out = []
    for cuts in itertools.combinations(grid, n - 1):
        bounds = (0, *cuts, rbg_count)
        if any(b - a < min_rbgs for a, b in zip(bounds, bounds[1:])):
            continue
        out.append({sid: (bounds[i], bounds[i + 1] - 1) for i, sid in enumerate(ids)})
    return out


class ActionSpace:
    """Enumerated actions: policy tuples, optionally crossed with RBG partitions.

    Action ids are ``partition_index * 3**n_slices + policy_index`` with
    policy tuples in lexicographic order, so the lowest id is the tie-break.
    """

    def __init__(self, slice_ids: Sequence[int], rbg_count: int, joint: bool = False):
        self.slice_ids = sorted(slice_ids)
        self.rbg_count = rbg_count
        self.joint = joint
        self.policy_tuples = list(itertools.product(POLICY_CODES, repeat=len(self.slice_ids)))
        self.partitions: list[Optional[dict]] = (
            partition_catalog(rbg_count, self.slice_ids) if joint else [None]
        )

    @property
    def size(self) -> int:
        return len(self.policy_tuples) * len(self.partitions)

    def __len__(self) -> int:
        return self.size

    def decode(self, action_id: int) -> Action:
        if not 0 <= action_id < self.size:
            raise IndexError(f"action {action_id} outside [0, {self.size})")
        part, pol = divmod(int(action_id), len(self.policy_tuples))
        return Action(int(action_id), self.policy_tuples[pol], self.partitions[part])

    def encode(self, policies: Sequence[int], allocation: Optional[dict] = None) -> int:
        pol = self.policy_tuples.index(tuple(policies))
        part = 0
        if self.joint:
            part = self.partitions.index({k: tuple(v) for k, v in allocation.items()})
        return part * len(self.policy_tuples) + pol

    def __iter__(self):
        return (self.decode(i) for i in range(self.size))


def sched_action_space(slice_ids: Sequence[int], rbg_count: int) -> ActionSpace:
    """Scheduling-policy-only actions: {0,1,2}^n_slices."""
    return ActionSpace(slice_ids, rbg_count, joint=False)


def sched_slicing_action_space(slice_ids: Sequence[int], rbg_count: int) -> ActionSpace:
    """Joint policy x RBG-partition actions."""
    return ActionSpace(slice_ids, rbg_count, joint=True)
