"""Discrete-time (per-TTI) simulator of one sliced base station."""
from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Iterable, Optional

import numpy as np

from .config import (
    ConfigError,
    ScenarioConfig,
    SliceMismatch,
    validate_allocation,
    validate_policies,
)
from .schedulers import PF_SMOOTHING, SliceState, UeState, allocate_slice

SATURATED_BUFFER_BYTES = 1_000_000
FADING_COEFFICIENT = 0.99

KPM_COLUMNS = (
    "ts_ms",
    "bs_id",
    "slice_id",
    "ue_id",
    "dl_tx_bytes",
    "dl_tx_tbs",
    "dl_buffer_bytes",
    "dl_thr_mbps",
    "rbg_share",
    "sched_policy",
)
KPM_HEADER = ",".join(KPM_COLUMNS)
_INT_COLUMNS = {"ts_ms", "slice_id", "ue_id", "dl_tx_bytes", "dl_tx_tbs", "dl_buffer_bytes", "sched_policy"}
_FLOAT_COLUMNS = {"dl_thr_mbps", "rbg_share"}


@dataclass(frozen=True)
class KpmRecord:
    ts_ms: int
    bs_id: str
    slice_id: int
    ue_id: int
    dl_tx_bytes: int
    dl_tx_tbs: int
    dl_buffer_bytes: int
    dl_thr_mbps: float
    rbg_share: float
    sched_policy: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KpmRecord":
        kw = {}
        for f in fields(cls):
            v = d[f.name]
            if f.name in _INT_COLUMNS:
                v = int(v)
            elif f.name in _FLOAT_COLUMNS:
                v = float(v)
            else:
                v = str(v)
            kw[f.name] = v
        return cls(**kw)

    def csv_row(self) -> str:
        return (
            f"{self.ts_ms},{self.bs_id},{self.slice_id},{self.ue_id},{self.dl_tx_bytes},"
            f"{self.dl_tx_tbs},{self.dl_buffer_bytes},{self.dl_thr_mbps:.6f},"
            f"{self.rbg_share:.6f},{self.sched_policy}"
        )


def write_kpm_csv(records: Iterable[KpmRecord], fh, header: bool = True) -> None:
    if header:
        fh.write(KPM_HEADER + "\n")
    for rec in records:
        fh.write(rec.csv_row() + "\n")


def read_kpm_csv(fh) -> list[KpmRecord]:
    reader = csv.DictReader(fh)
    return [KpmRecord.from_dict(row) for row in reader]


@dataclass
class ControlDirective:
    """Run-time reconfiguration of a base station's slice table."""

    node_id: str
    slice_allocation: Optional[dict[int, tuple[int, int]]] = None
    slice_scheduling_policy: Optional[list[int]] = None

    def to_body(self) -> dict:
        body: dict = {"node_id": self.node_id}
        if self.slice_allocation is not None:
            body["slice_allocation"] = {str(k): list(v) for k, v in sorted(self.slice_allocation.items())}
        if self.slice_scheduling_policy is not None:
            body["slice_scheduling_policy"] = list(self.slice_scheduling_policy)
        return body

    @classmethod
    def from_body(cls, body: dict) -> "ControlDirective":
        alloc = body.get("slice_allocation")
        if isinstance(alloc, dict):
            try:
                alloc = {int(k): tuple(v) for k, v in alloc.items()}
            except (TypeError, ValueError):
                pass  # left raw; validation reports it
        return cls(str(body.get("node_id", "")), alloc, body.get("slice_scheduling_policy"))


class InvalidDirective(ConfigError):
    code = "InvalidDirective"

    def __init__(self, cause: ConfigError):
        self.reason = cause.code
        self.cause = cause
        super().__init__(cause.key, f"{cause.code}: {cause.detail}")


def validate_directive(
    directive: ControlDirective, rbg_count: int, slice_ids: list[int]
) -> tuple[Optional[dict[int, tuple[int, int]]], Optional[list[int]]]:
    """Check a directive against a cell's geometry; raise InvalidDirective."""
    try:
        if directive.slice_allocation is None and directive.slice_scheduling_policy is None:
            raise ConfigError("directive", "no payload")
        alloc = policies = None
        if directive.slice_allocation is not None:
            alloc = validate_allocation(directive.slice_allocation, rbg_count)
            if sorted(alloc) != sorted(slice_ids):
                raise SliceMismatch("slice-allocation", f"expected slices {sorted(slice_ids)}")
        if directive.slice_scheduling_policy is not None:
            policies = validate_policies(directive.slice_scheduling_policy, len(slice_ids))
    except InvalidDirective:
        raise
    except ConfigError as exc:
        raise InvalidDirective(exc) from None
    return alloc, policies


class CellState:
    """Mutable per-TTI state of one base station.

    Owned by a single driver at a time; all stepping is deterministic given
    the configuration seed.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.tti = 0
        self.table: dict[int, tuple[int, int]] = dict(config.slice_allocation)
        self.policies: dict[int, int] = dict(zip(config.slice_ids, config.slice_scheduling_policy))
        self.slices = {sid: SliceState(sid) for sid in config.slice_ids}
        self.slice_of = config.slice_of()
        self.ues: dict[int, UeState] = {}
        for spec in config.ues:
            self.ues[spec.ue_id] = UeState(spec.ue_id, efficiency=spec.efficiency)
        self.members = {
            sid: [self.ues[u] for u in sorted(config.slice_users.get(sid, []))] for sid in config.slice_ids
        }
        self._specs = {spec.ue_id: spec for spec in config.ues}
        self._arrival = {
            spec.ue_id: spec.rate_bps * config.tti_ms / 8000.0 for spec in config.ues if not spec.saturated
        }
        self._carry = {u: 0.0 for u in self._arrival}
        self._saturated = [self.ues[s.ue_id] for s in config.ues if s.saturated]
        self._fading = np.zeros(len(config.ues))
        self._rng = np.random.default_rng(config.seed)
        self._pending: Optional[tuple[dict, dict]] = None
        self.control_log: list[dict] = []
        self.last_allocation: dict[int, int] = {}
        self.on_allocation: Optional[Callable[[int, dict[int, int]], None]] = None
        self._win_start = {u: (0, 0, 0) for u in self.ues}
        self._win_ttis = 0

    @property
    def now_ms(self) -> int:
        return self.tti * self.config.tti_ms

    def snapshot(self) -> "CellState":
        """Deep copy, including RNG state; callbacks are dropped."""
        cb, self.on_allocation = self.on_allocation, None
        try:
            return copy.deepcopy(self)
        finally:
            self.on_allocation = cb

    # -- stepping ---------------------------------------------------------
    def step(self) -> "CellState":
        if self._pending is not None:
            self.table, self.policies = self._pending
            self._pending = None

        for ue in self._saturated:
            if ue.buffer < SATURATED_BUFFER_BYTES:
                ue.offered += SATURATED_BUFFER_BYTES - ue.buffer
                ue.buffer = SATURATED_BUFFER_BYTES
        for ue_id, per_tti in self._arrival.items():
            total = self._carry[ue_id] + per_tti
            whole = int(total)
            self._carry[ue_id] = total - whole
            if whole:
                ue = self.ues[ue_id]
                ue.buffer += whole
                ue.offered += whole

        allocation: dict[int, int] = {}
        for sid, rng in self.table.items():
            members = self.members[sid]
            if members:
                allocation.update(allocate_slice(self.slices[sid], rng, self.policies[sid], members))

        counts: dict[int, int] = {}
        for ue_id in allocation.values():
            counts[ue_id] = counts.get(ue_id, 0) + 1
        keep = 1.0 - PF_SMOOTHING
        for ue in self.ues.values():
            n = counts.get(ue.ue_id, 0)
            sent_bits = 0
            if n:
                sent = min(int(n * ue.efficiency) // 8, ue.buffer)
                ue.buffer -= sent
                ue.tx_bytes += sent
                ue.tx_tbs += 1
                ue.rbgs += n
                sent_bits = sent * 8
            ue.avg_rate = keep * ue.avg_rate + PF_SMOOTHING * sent_bits

        if self.config.fading_sigma > 0:
            noise = self._rng.standard_normal(len(self._fading))
            self._fading = FADING_COEFFICIENT * self._fading + self.config.fading_sigma * noise
            for k, spec in enumerate(self.config.ues):
                self.ues[spec.ue_id].efficiency = spec.efficiency * math.exp(self._fading[k])

        self.last_allocation = allocation
        if self.on_allocation is not None:
            self.on_allocation(self.tti, allocation)
        self.tti += 1
        self._win_ttis += 1
        return self

    def window_due(self) -> bool:
        return self.now_ms % self.config.kpm_window_ms == 0 and self._win_ttis > 0

    @property
    def window_open(self) -> bool:
        """True while TTIs have run since the last emitted window."""
        return self._win_ttis > 0

    # -- control ----------------------------------------------------------
    def current_table(self) -> tuple[dict[int, tuple[int, int]], dict[int, int]]:
        if self._pending is not None:
            return self._pending
        return self.table, self.policies

    def apply_control(self, directive: ControlDirective) -> "CellState":
        try:
            alloc, policies = validate_directive(directive, self.config.rbg_count, list(self.slices))
        except InvalidDirective as exc:
            self.control_log.append(
                {"tti": self.tti, "effective_tti": None, "status": "rejected", "reason": exc.reason,
                 "directive": directive.to_body()}
            )
            raise
        table, pol = self.current_table()
        new_table = dict(alloc) if alloc is not None else dict(table)
        new_pol = dict(zip(sorted(self.slices), policies)) if policies is not None else dict(pol)
        status = "noop" if (new_table == table and new_pol == pol) else "applied"
        if status == "applied":
            self._pending = (new_table, new_pol)
        self.control_log.append(
            {"tti": self.tti, "effective_tti": self.tti, "status": status, "reason": "",
             "directive": directive.to_body()}
        )
        return self

    # -- telemetry --------------------------------------------------------
    def emit_kpm_window(self) -> list[KpmRecord]:
        """One record per UE with deltas since the previous window."""
        ttis = self._win_ttis
        if ttis == 0:
            return []
        cfg = self.config
        window_us = ttis * cfg.tti_ms * 1000
        denom = cfg.rbg_count * ttis
        ts = self.now_ms
        records = []
        for ue_id in sorted(self.ues):
            ue = self.ues[ue_id]
            b0, t0, r0 = self._win_start[ue_id]
            tx = ue.tx_bytes - b0
            sid = self.slice_of.get(ue_id, -1)
            records.append(
                KpmRecord(
                    ts_ms=ts,
                    bs_id=cfg.bs_id,
                    slice_id=sid,
                    ue_id=ue_id,
                    dl_tx_bytes=tx,
                    dl_tx_tbs=ue.tx_tbs - t0,
                    dl_buffer_bytes=ue.buffer,
                    dl_thr_mbps=round(tx * 8 / window_us, 6),
                    rbg_share=round((ue.rbgs - r0) / denom, 6),
                    sched_policy=self.policies.get(sid, -1),
                )
            )
            self._win_start[ue_id] = (ue.tx_bytes, ue.tx_tbs, ue.rbgs)
        self._win_ttis = 0
        return records


def step_tti(cell: CellState, config: ScenarioConfig | None = None) -> CellState:
    if config is not None and config is not cell.config:
        raise ValueError("cell was built from a different config")
    return cell.step()


def apply_control(cell: CellState, directive: ControlDirective) -> CellState:
    return cell.apply_control(directive)


def emit_kpm_window(cell: CellState) -> list[KpmRecord]:
    return cell.emit_kpm_window()


def run_cell(cell: CellState, ttis: int) -> list[KpmRecord]:
    """Step ``ttis`` TTIs, collecting every KPM window that closes."""
    out = []
    for _ in range(ttis):
        cell.step()
        if cell.window_due():
            out.extend(cell.emit_kpm_window())
    return out


def kpm_csv_text(records: Iterable[KpmRecord]) -> str:
    buf = io.StringIO()
    write_kpm_csv(records, buf)
    return buf.getvalue()
