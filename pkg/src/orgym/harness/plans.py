"""Experiment plans: cells, a timeline of events, and the plan catalog.

A plan is plain JSON::

    {
      "name": "stairs",
      "duration_s": 180,
      "seed": 0,
      "cells": [{...radio config...}],
      "xapps": {"prio": {"kind": "prioritize", "target_slice": 0, "boost_share": 0.6}},
      "events": [
        {"at_s": 60, "kind": "apply_control", "bs_id": "bs0", "slice_allocation": {"0": [0, 8], "1": [9, 16]}},
        {"at_s": 150, "kind": "start_xapp", "xapp": "prio"}
      ]
    }
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..ransim.cell import ControlDirective, InvalidDirective, validate_directive
from ..ransim.config import MalformedJson, ScenarioConfig, config_from_dict

EVENT_KINDS = ("apply_control", "start_xapp", "stop_xapp")
XAPP_KINDS = ("prioritize", "sched", "sched-slicing")
MODEL_KINDS = ("none", "constant", "random", "checkpoint")


class TimelineConflict(ValueError):
    """The plan's timeline is inconsistent with its cells or xApps."""


@dataclass
class PlanEvent:
    at_ms: int
    kind: str
    bs_id: str = ""
    slice_allocation: Optional[dict] = None
    slice_scheduling_policy: Optional[list] = None
    xapp: str = ""

    def to_json(self) -> dict:
        out: dict[str, Any] = {"at_s": self.at_ms / 1000.0, "kind": self.kind}
        if self.kind == "apply_control":
            out["bs_id"] = self.bs_id
            if self.slice_allocation is not None:
                out["slice_allocation"] = {str(k): list(v) for k, v in sorted(self.slice_allocation.items())}
            if self.slice_scheduling_policy is not None:
                out["slice_scheduling_policy"] = list(self.slice_scheduling_policy)
        else:
            out["xapp"] = self.xapp
        return out


@dataclass
class ExperimentPlan:
    name: str
    cells: list[ScenarioConfig]
    duration_ms: int
    events: list[PlanEvent] = field(default_factory=list)
    xapps: dict[str, dict] = field(default_factory=dict)
    seed: int = 0
    output_dir: str = ""

    def cell(self, bs_id: str) -> ScenarioConfig:
        for cfg in self.cells:
            if cfg.bs_id == bs_id:
                return cfg
        raise TimelineConflict(f"unknown base station {bs_id!r}")

    def with_seed(self, seed: int) -> "ExperimentPlan":
        """Copy with ``seed`` applied to the plan and to every cell (offset by cell index)."""
        data = self.to_json()
        data["seed"] = seed
        for i, c in enumerate(data["cells"]):
            c["seed"] = seed + i
        return plan_from_dict(data)

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "duration_s": self.duration_ms / 1000.0,
            "seed": self.seed,
            "cells": [c.to_json() for c in self.cells],
            "xapps": {k: dict(v) for k, v in sorted(self.xapps.items())},
            "events": [e.to_json() for e in self.events],
        }
        if self.output_dir:
            out["output_dir"] = self.output_dir
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _ms(value: Any, key: str) -> int:
    try:
        ms = float(value) * 1000.0
    except (TypeError, ValueError):
        raise TimelineConflict(f"{key}: not a number: {value!r}") from None
    if not math.isfinite(ms) or ms < 0:
        raise TimelineConflict(f"{key}: must be a finite non-negative time")
    return int(round(ms))


def _event_from_dict(raw: dict, default_bs: str) -> PlanEvent:
    if not isinstance(raw, dict):
        raise TimelineConflict(f"event must be an object, got {raw!r}")
    kind = raw.get("kind")
    if kind not in EVENT_KINDS:
        raise TimelineConflict(f"unknown event kind {kind!r}")
    at_ms = _ms(raw.get("at_s"), "at_s")
    if kind == "apply_control":
        alloc = raw.get("slice_allocation")
        if alloc is not None:
            if not isinstance(alloc, dict):
                raise TimelineConflict("slice_allocation must be an object")
            try:
                alloc = {int(k): tuple(int(x) for x in v) for k, v in alloc.items()}
            except (TypeError, ValueError):
                raise TimelineConflict(f"malformed slice_allocation {raw.get('slice_allocation')!r}") from None
        policies = raw.get("slice_scheduling_policy")
        if alloc is None and policies is None:
            raise TimelineConflict("apply_control needs slice_allocation and/or slice_scheduling_policy")
        return PlanEvent(at_ms, kind, str(raw.get("bs_id", default_bs)), alloc, policies)
    return PlanEvent(at_ms, kind, xapp=str(raw.get("xapp", "")))


def validate_plan(plan: ExperimentPlan) -> ExperimentPlan:
    """Check time ordering and that every referenced cell, slice and xApp exists."""
    if not plan.cells:
        raise TimelineConflict("plan has no cells")
    if plan.duration_ms <= 0:
        raise TimelineConflict("duration must be positive")
    bs_ids = [c.bs_id for c in plan.cells]
    node_ids = [c.node_id for c in plan.cells]
    if len(set(bs_ids)) != len(bs_ids) or len(set(node_ids)) != len(node_ids):
        raise TimelineConflict("duplicate bs_id or node_id across cells")
    for name, spec in plan.xapps.items():
        kind = spec.get("kind")
        if kind not in XAPP_KINDS:
            raise TimelineConflict(f"xapp {name!r}: unknown kind {kind!r}")
        for bs in spec.get("bs_ids", bs_ids):
            plan.cell(bs)
        if kind == "prioritize":
            for cfg in plan.cells:
                if int(spec.get("target_slice", 0)) not in cfg.slice_ids:
                    raise TimelineConflict(f"xapp {name!r}: slice {spec.get('target_slice')} undefined in {cfg.bs_id}")
        elif spec.get("model", {}).get("kind", "none") not in MODEL_KINDS:
            raise TimelineConflict(f"xapp {name!r}: unknown model kind")
    last = -1
    started: set[str] = set()
    for ev in plan.events:
        if ev.at_ms < last:
            raise TimelineConflict(f"events out of order at {ev.at_ms} ms")
        last = ev.at_ms
        if ev.at_ms >= plan.duration_ms:
            raise TimelineConflict(f"event at {ev.at_ms} ms is past the end of the run")
        if ev.kind == "apply_control":
            cfg = plan.cell(ev.bs_id)
            try:
                validate_directive(
                    ControlDirective(cfg.node_id, ev.slice_allocation, ev.slice_scheduling_policy),
                    cfg.rbg_count, cfg.slice_ids,
                )
            except InvalidDirective as exc:
                raise TimelineConflict(f"event at {ev.at_ms} ms: {exc}") from exc
        else:
            if ev.xapp not in plan.xapps:
                raise TimelineConflict(f"event at {ev.at_ms} ms references undefined xapp {ev.xapp!r}")
            if ev.kind == "start_xapp":
                if ev.xapp in started:
                    raise TimelineConflict(f"xapp {ev.xapp!r} started twice")
                started.add(ev.xapp)
            elif ev.xapp not in started:
                raise TimelineConflict(f"xapp {ev.xapp!r} stopped before it started")
    return plan


def plan_from_dict(raw: dict) -> ExperimentPlan:
    if not isinstance(raw, dict):
        raise MalformedJson("plan", "top level must be an object")
    cells_raw = raw.get("cells")
    if cells_raw is None and "scenario" in raw:
        cells_raw = [raw["scenario"]]
    if not isinstance(cells_raw, list):
        raise MalformedJson("cells", "must be a list of radio configs")
    cells = []
    for i, c in enumerate(cells_raw):
        if isinstance(c, dict) and "bs-id" not in c and "bs_id" not in c:
            c = {**c, "bs-id": f"bs{i}"}
            if "node-id" not in c and "node_id" not in c:
                c["node-id"] = f"gnb:311-048-{i + 0x01000501:08x}"
        cells.append(config_from_dict(c))
    xapps = raw.get("xapps", {})
    if not isinstance(xapps, dict):
        raise TimelineConflict("xapps must be an object")
    events = [_event_from_dict(e, cells[0].bs_id if cells else "") for e in raw.get("events", [])]
    if "duration_s" not in raw:
        raise TimelineConflict("duration_s is required")
    plan = ExperimentPlan(
        name=str(raw.get("name", "plan")),
        cells=cells,
        duration_ms=_ms(raw["duration_s"], "duration_s"),
        events=events,
        xapps={str(k): dict(v) for k, v in xapps.items()},
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "")),
    )
    return validate_plan(plan)


def load_plan(path: str | Path) -> ExperimentPlan:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedJson("plan", str(exc)) from exc
    return plan_from_dict(raw)


# -- catalog -------------------------------------------------------------------
RBG_COUNT = 17
MINUTE_MS = 60_000


def split_rbgs(share_a: float, rbg_count: int = RBG_COUNT) -> tuple[int, int]:
    """RBG counts for a two-slice split; ties round up for slice A."""
    a = int(math.floor(share_a * rbg_count + 0.5))
    return a, rbg_count - a


def two_slice_allocation(share_a: float, rbg_count: int = RBG_COUNT) -> dict[int, tuple[int, int]]:
    a, _ = split_rbgs(share_a, rbg_count)
    return {0: (0, a - 1), 1: (a, rbg_count - 1)}


def _saturated_cell(n_slices: int, ues_per_slice: int, allocation: dict, seed: int,
                    kpm_window_ms: int = 100, efficiency: int = 2000) -> dict:
    ue_ids = {s: list(range(s * ues_per_slice, (s + 1) * ues_per_slice)) for s in range(n_slices)}
    return {
        "network-slicing": True,
        "rbg-count": RBG_COUNT,
        "slice-allocation": {str(k): list(v) for k, v in allocation.items()},
        "slice-scheduling-policy": [0] * n_slices,
        "slice-users": {str(k): v for k, v in ue_ids.items()},
        "ues": [{"id": u, "efficiency": efficiency, "saturated": True} for ids in ue_ids.values() for u in ids],
        "tti-ms": 1,
        "kpm-window-ms": kpm_window_ms,
        "seed": seed,
        "bs-id": "bs0",
        "node-id": "gnb:311-048-01000501",
    }


def _phased_plan(name: str, shares: list[float], seed: int, ues_per_slice: int) -> ExperimentPlan:
    cell = _saturated_cell(2, ues_per_slice, two_slice_allocation(shares[0]), seed)
    events = [
        {"at_s": i * 60, "kind": "apply_control", "bs_id": "bs0",
         "slice_allocation": {str(k): list(v) for k, v in two_slice_allocation(share).items()}}
        for i, share in enumerate(shares) if i > 0
    ]
    return plan_from_dict({"name": name, "duration_s": 60 * len(shares), "seed": seed,
                           "cells": [cell], "events": events})


def build_stairs_plan(seed: int = 0, ues_per_slice: int = 3) -> ExperimentPlan:
    """Slice A on 75%, 50%, 25% of RBGs over three minutes; slice B on the rest."""
    return _phased_plan("stairs", [0.75, 0.50, 0.25], seed, ues_per_slice)


def build_v_plan(seed: int = 0, ues_per_slice: int = 3) -> ExperimentPlan:
    """Slice A on 75%, 25%, 75% of RBGs over three minutes; slice B on the rest."""
    return _phased_plan("v", [0.75, 0.25, 0.75], seed, ues_per_slice)


def build_prioritization_plan(seed: int = 0, ues_per_slice: int = 2, start_s: float = 150,
                              duration_s: float = 210, boost_share: float = 0.6,
                              report_period_ms: int = 250) -> ExperimentPlan:
    """Three slices on equal RBG counts; at ``start_s`` a prioritization xApp boosts slice 0.

    Equal counts (5/5/5) leave RBGs 15 and 16 idle, which keeps the
    pre-control slices symmetric.
    """
    per = RBG_COUNT // 3
    alloc = {s: (s * per, (s + 1) * per - 1) for s in range(3)}
    cell = _saturated_cell(3, ues_per_slice, alloc, seed)
    return plan_from_dict({
        "name": "prioritize",
        "duration_s": duration_s,
        "seed": seed,
        "cells": [cell],
        "xapps": {"prioritize": {"kind": "prioritize", "target_slice": 0, "boost_share": boost_share,
                                 "report_period_ms": report_period_ms}},
        "events": [{"at_s": start_s, "kind": "start_xapp", "xapp": "prioritize"}],
    })


CATALOG = {"stairs": build_stairs_plan, "v": build_v_plan, "prioritize": build_prioritization_plan}
