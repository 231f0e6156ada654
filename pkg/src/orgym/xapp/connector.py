"""The xApp runtime: an SM connector wrapped around a data-driven logic unit.

The connector owns the subscription lifecycle and the window store; the
logic unit is a ``processor`` (KPM stream -> feature vector) followed by a
``model`` exposing ``predict(X) -> action ids``. A negative or ``None``
action id means "no-op" and sends nothing.
"""
from __future__ import annotations

import csv
import logging
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from ..ransim.cell import ControlDirective
from ..ric.core import PendingControl, RicError
from .actions import ActionSpace, sched_action_space, sched_slicing_action_space
from .features import InsufficientHistory, WindowFeatureReducer

log = logging.getLogger(__name__)

MAX_SUBSCRIBE_ATTEMPTS = 3


@dataclass(frozen=True)
class XAppDescriptor:
    xapp_id: str
    node_ids: tuple
    report_period_ms: int = 250
    metric_set: tuple = ()
    model: Any = None
    processor: Any = None
    epoch_periods: int = 4
    action_space: Callable[[list, int], ActionSpace] = sched_action_space

    def to_json(self) -> dict:
        """xApp config JSON; the model and processor are plugged in by code."""
        return {
            "xapp_id": self.xapp_id,
            "node_ids": list(self.node_ids),
            "report_period_ms": self.report_period_ms,
            "metric_set": list(self.metric_set),
            "epoch_periods": self.epoch_periods,
            "action_space": "sched-slicing" if self.action_space is sched_slicing_action_space else "sched",
        }

    @classmethod
    def from_json(cls, data: dict, model=None, processor=None) -> "XAppDescriptor":
        space = sched_slicing_action_space if data.get("action_space") == "sched-slicing" else sched_action_space
        return cls(
            str(data["xapp_id"]),
            tuple(data.get("node_ids", ())),
            int(data.get("report_period_ms", 250)),
            tuple(data.get("metric_set", ())),
            model,
            processor,
            int(data.get("epoch_periods", 4)),
            space,
        )


@dataclass
class Decision:
    epoch: int
    ts_ms: int
    node_id: str
    features: list
    action_id: int
    ack_status: str = "pending"
    reason: str = ""
    directive: Optional[ControlDirective] = None
    acked_at: Optional[int] = None


class XApp:
    def __init__(self, descriptor: XAppDescriptor, history_windows: int = 64):
        self.descriptor = descriptor
        self.ric = None
        self.history_windows = history_windows
        self.now_ms = 0
        self.node_subs: dict[str, int] = {}
        self.sub_nodes: dict[int, str] = {}
        self.attempts: dict[str, int] = {}
        self.retry_at: dict[str, int] = {}
        self.terminated = False
        self.diagnostic = ""
        self.store: dict[str, OrderedDict] = {}
        self.indications: dict[str, int] = {}
        self.first_indication_at: dict[str, int] = {}
        self.received: list[tuple[str, int, int]] = []  # (node_id, sub_id, seq)
        self.decisions: list[Decision] = []
        self.feature_trace: list[tuple[str, int, np.ndarray]] = []
        self._by_txid: dict[int, Decision] = {}
        self._spaces: dict[str, ActionSpace] = {}
        self._processors: dict[str, Any] = {}
        self._epoch = 0

    @property
    def xapp_id(self) -> str:
        return self.descriptor.xapp_id

    # -- lifecycle ------------------------------------------------------------
    def attach(self, ric) -> "XApp":
        self.ric = ric
        ric.register_xapp(self.xapp_id, self)
        return self

    def start(self, now_ms: int = 0) -> None:
        self.now_ms = now_ms
        for node_id in self.descriptor.node_ids:
            self.attempts[node_id] = 0
            self._subscribe(node_id)

    def _subscribe(self, node_id: str) -> None:
        self.attempts[node_id] += 1
        try:
            info = self.ric.node_info(node_id)
            self.prepare(node_id, info.get("slice_ids", []), int(info.get("rbg_count", 0)))
            sub_id = self.ric.handle_subscription(
                self.xapp_id, node_id, self.descriptor.report_period_ms, self.descriptor.metric_set
            )
        except RicError as exc:
            self._subscription_failed(node_id, exc.code)
            return
        self.node_subs[node_id] = sub_id
        self.sub_nodes[sub_id] = node_id

    def _subscription_failed(self, node_id: str, reason: str) -> None:
        n = self.attempts.get(node_id, 0)
        log.info("%s: subscription to %s failed (%s), attempt %d", self.xapp_id, node_id, reason, n)
        if n >= MAX_SUBSCRIBE_ATTEMPTS:
            self.terminated = True
            self.diagnostic = f"subscription to {node_id} failed {n} times: {reason}"
            self.retry_at.pop(node_id, None)
            log.error("%s terminated: %s", self.xapp_id, self.diagnostic)
            return
        self.retry_at[node_id] = self.now_ms + self.descriptor.report_period_ms * 2 ** (n - 1)

    def tick(self, now_ms: int) -> None:
        self.now_ms = now_ms
        if self.terminated:
            return
        for node_id, due in list(self.retry_at.items()):
            if now_ms >= due:
                del self.retry_at[node_id]
                self._subscribe(node_id)

    def prepare(self, node_id: str, slice_ids, rbg_count: int) -> None:
        if node_id in self._processors:
            return
        proc = self.descriptor.processor or WindowFeatureReducer()
        if hasattr(proc, "get_params"):
            from sklearn.base import clone

            proc = clone(proc)
            if "slice_ids" in proc.get_params() and proc.get_params()["slice_ids"] is None and slice_ids:
                proc.set_params(slice_ids=list(slice_ids))
        proc.fit([])
        self._processors[node_id] = proc
        if slice_ids and rbg_count:
            self._spaces[node_id] = self.descriptor.action_space(list(slice_ids), rbg_count)
        self.store.setdefault(node_id, OrderedDict())
        self.indications.setdefault(node_id, 0)

    # -- RIC callbacks ----------------------------------------------------------
    def on_subscription_response(self, sub_id: int, status: str, reason: str) -> None:
        node_id = self.sub_nodes.get(sub_id)
        if node_id is None or status == "accepted":
            return
        self.sub_nodes.pop(sub_id, None)
        self.node_subs.pop(node_id, None)
        if status == "cancelled":
            log.info("%s: subscription %d cancelled (%s)", self.xapp_id, sub_id, reason)
            return
        self._subscription_failed(node_id, reason)

    def on_indication(self, sub_id: int, body: dict) -> None:
        node_id = self.sub_nodes.get(sub_id, body.get("node_id", ""))
        ts = int(body["ts_ms"])
        self.now_ms = max(self.now_ms, ts)
        self.received.append((node_id, sub_id, int(body.get("seq", 0))))
        self.first_indication_at.setdefault(node_id, ts)
        store = self.store.setdefault(node_id, OrderedDict())
        for rec in body["records"]:
            store.setdefault(int(rec["ts_ms"]), []).append(rec)
        while len(store) > self.history_windows:
            store.popitem(last=False)
        self.indications[node_id] = self.indications.get(node_id, 0) + 1
        if self.indications[node_id] % self.descriptor.epoch_periods == 0:
            self._epoch_step(node_id, ts)

    def on_control_ack(self, pending: PendingControl) -> None:
        decision = self._by_txid.pop(pending.transaction_id, None)
        if decision is None:
            return
        decision.ack_status = pending.status
        decision.reason = pending.reason
        decision.acked_at = pending.acked_at if pending.acked_at is not None else self.now_ms
        if pending.status != "applied":
            log.warning("%s: control %d %s (%s)", self.xapp_id, pending.transaction_id, pending.status, pending.reason)
            notify = getattr(self.descriptor.model, "on_rejected", None)
            if notify is not None:
                notify(decision.action_id, pending.reason)

    # -- logic unit --------------------------------------------------------------
    def features(self, node_id: str) -> np.ndarray:
        records = [r for rows in self.store.get(node_id, {}).values() for r in rows]
        proc = self._processors.get(node_id)
        if proc is None:
            proc = WindowFeatureReducer().fit(records)
            self._processors[node_id] = proc
        return proc.transform(records)

    def decide(self, node_id: str, features: np.ndarray) -> tuple[int, Optional[ControlDirective]]:
        """Map features to (action id, directive); a directive of None is a no-op."""
        model = self.descriptor.model
        if model is None:
            return -1, None
        action = model.predict(features.reshape(1, -1))[0]
        if action is None or action < 0:
            return -1, None
        space = self._spaces[node_id]
        return int(action), space.decode(int(action)).to_directive(node_id)

    def _epoch_step(self, node_id: str, ts: int) -> None:
        try:
            feats = self.features(node_id)
        except InsufficientHistory as exc:
            log.debug("%s: skipping epoch at %d ms: %s", self.xapp_id, ts, exc)
            return
        self._epoch += 1
        self.feature_trace.append((node_id, ts, feats))
        action_id, directive = self.decide(node_id, feats)
        decision = Decision(self._epoch, ts, node_id, [float(x) for x in feats], action_id, directive=directive)
        self.decisions.append(decision)
        if directive is None:
            decision.ack_status = "noop"
            return
        if self.ric is None:
            decision.ack_status = "offline"
            return
        try:
            pending = self.ric.forward_control(self.xapp_id, directive)
        except RicError as exc:
            decision.ack_status, decision.reason = "error", exc.code
            return
        self._by_txid[pending.transaction_id] = decision

    # -- output ------------------------------------------------------------------
    def write_log(self, path: str | Path) -> None:
        """Decision log CSV: ``epoch,ts_ms,features...,action_id,ack_status``."""
        n = max((len(d.features) for d in self.decisions), default=0)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "ts_ms", *[f"f{i}" for i in range(n)], "action_id", "ack_status"])
            for d in self.decisions:
                w.writerow([d.epoch, d.ts_ms, *[f"{x:.6f}" for x in d.features], d.action_id, d.ack_status])
