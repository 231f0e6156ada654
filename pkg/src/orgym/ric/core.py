"""Near-RT RIC service.

One :class:`NearRtRic` plays the e2term (per-connection endpoints), db (node
registry), e2mgr (subscriptions) and routing roles. xApps attach in-process
through :meth:`NearRtRic.register_xapp`; out-of-process xApps go through
:mod:`orgym.ric.server`.
"""
from __future__ import annotations

import copy
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

from ..e2.codec import E2Error, E2Message, FrameDecoder, MsgType, encode_frame, protocol_error
from ..e2.fsm import (
    Disconnected,
    MsgIn,
    Register,
    Relay,
    RicConnState,
    Send,
    Unregister,
    XappControl,
    XappSubscribe,
    ric_fsm,
)
from ..ransim.cell import ControlDirective

log = logging.getLogger(__name__)


class RicError(Exception):
    code = "RicError"


class UnknownNode(RicError):
    code = "UnknownNode"


class UnknownXapp(RicError):
    code = "UnknownXapp"


class PeriodTooSmall(RicError):
    code = "PeriodTooSmall"


class DuplicateXapp(RicError):
    code = "DuplicateXapp"


class XappHandler(Protocol):
    def on_indication(self, sub_id: int, body: dict) -> None: ...

    def on_subscription_response(self, sub_id: int, status: str, reason: str) -> None: ...

    def on_control_ack(self, pending: "PendingControl") -> None: ...


@dataclass
class NodeRecord:
    node_id: str
    conn_id: int
    connected_at: int
    last_indication_at: Optional[int] = None
    subscriptions: list = field(default_factory=list)
    cell: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Route:
    node_id: str
    xapp_id: str
    report_period_ms: int


@dataclass
class PendingControl:
    transaction_id: int
    xapp_id: str
    node_id: str
    directive: ControlDirective
    sent_at: int
    deadline: int
    status: str = "pending"  # applied | rejected | timeout
    reason: str = ""
    acked_at: Optional[int] = None

    @property
    def done(self) -> bool:
        return self.status != "pending"


class _Conn:
    def __init__(self, conn_id: int, send: Callable[[bytes], None]):
        self.state = RicConnState(conn_id)
        self.send = send
        self.decoder = FrameDecoder()


class NearRtRic:
    def __init__(
        self,
        log_sink: Optional[Callable[[dict], None]] = None,
        snapshot_path: str | Path | None = None,
        control_timeout_ms: Optional[int] = None,
    ):
        self._lock = threading.RLock()
        self._conns: dict[int, _Conn] = {}
        self._next_conn = 1
        self.registry: dict[str, NodeRecord] = {}
        self.routes: dict[int, Route] = {}
        self._xapps: dict[str, XappHandler] = {}
        self._next_sub = 1
        self._next_txid = 1
        self.pending: dict[int, PendingControl] = {}
        self.now_ms = 0
        self.log_sink = log_sink
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.control_timeout_ms = control_timeout_ms

    # -- logging ------------------------------------------------------------
    def _event(self, event: str, **fields) -> None:
        entry = {"ts_ms": self.now_ms, "event": event, **fields}
        log.debug("ric %s", entry)
        if self.log_sink is not None:
            self.log_sink(entry)

    def _snapshot(self) -> None:
        if self.snapshot_path is None:
            return
        data = {
            "nodes": [
                {"node_id": r.node_id, "connected_at": r.connected_at, "subscriptions": list(r.subscriptions)}
                for r in self.list_nodes()
            ],
            "routes": {str(k): vars(v) for k, v in sorted(self.routes.items())},
        }
        self.snapshot_path.write_text(json.dumps(data, sort_keys=True, indent=1))

    # -- connections ----------------------------------------------------------
    def accept(self, send: Callable[[bytes], None]) -> int:
        """Register a new node connection; returns its id."""
        with self._lock:
            conn_id = self._next_conn
            self._next_conn += 1
            self._conns[conn_id] = _Conn(conn_id, send)
        return conn_id

    def receive(self, conn_id: int, data: bytes) -> None:
        conn = self._conns.get(conn_id)
        if conn is None:
            return
        try:
            items = list(conn.decoder.feed(data))
        except E2Error as exc:
            self._event("error", conn_id=conn_id, reason=type(exc).__name__)
            conn.send(encode_frame(protocol_error(type(exc).__name__)))
            conn.decoder = FrameDecoder()
            return
        for item in items:
            if isinstance(item, E2Error):
                self._event("error", conn_id=conn_id, reason=type(item).__name__)
                conn.send(encode_frame(protocol_error(type(item).__name__)))
            else:
                self._dispatch(conn, MsgIn(item, self.now_ms))

    def disconnect(self, conn_id: int) -> None:
        conn = self._conns.pop(conn_id, None)
        if conn is not None:
            self._dispatch(conn, Disconnected(self.now_ms))

    def _dispatch(self, conn: _Conn, event) -> None:
        deliveries: list[Callable[[], None]] = []
        with self._lock:
            conn.state, actions = ric_fsm(conn.state, event, self.registry)
            for action in actions:
                if isinstance(action, Send):
                    conn.send(encode_frame(action.msg))
                    if action.msg.msg_type == MsgType.PROTOCOL_ERROR:
                        self._event("error", conn_id=conn.state.conn_id, **action.msg.body)
                elif isinstance(action, Register):
                    self.registry[action.node_id] = NodeRecord(
                        action.node_id, conn.state.conn_id, self.now_ms, cell=dict(action.cell)
                    )
                    self._event("setup", node_id=action.node_id, conn_id=conn.state.conn_id)
                    self._snapshot()
                elif isinstance(action, Unregister):
                    deliveries += self._evict(action.node_id)
                elif isinstance(action, Relay):
                    deliveries += self._relay(conn, action.msg)
        for deliver in deliveries:
            deliver()

    def _evict(self, node_id: str) -> list:
        record = self.registry.pop(node_id, None)
        out = []
        if record is None:
            return out
        for sub_id in record.subscriptions:
            route = self.routes.pop(sub_id, None)
            handler = self._xapps.get(route.xapp_id) if route else None
            if handler is not None:
                out.append(lambda h=handler, s=sub_id: h.on_subscription_response(s, "cancelled", "NodeDisconnected"))
        self._event("disconnect", node_id=node_id, cancelled=list(record.subscriptions))
        self._snapshot()
        return out

    def _relay(self, conn: _Conn, msg: E2Message) -> list:
        t = msg.msg_type
        if t == MsgType.RIC_INDICATION:
            return self._route_locked(msg)
        if t == MsgType.RIC_SUBSCRIPTION_RESPONSE:
            sub_id = msg.body["sub_id"]
            route = self.routes.get(sub_id)
            status, reason = msg.body["status"], msg.body.get("reason", "")
            self._event("subscribe_response", sub_id=sub_id, status=status, reason=reason)
            if route is None:
                return []
            if status != "accepted":
                self.routes.pop(sub_id, None)
                record = self.registry.get(route.node_id)
                if record is not None and sub_id in record.subscriptions:
                    record.subscriptions.remove(sub_id)
            handler = self._xapps.get(route.xapp_id)
            if handler is None:
                return []
            return [lambda: handler.on_subscription_response(sub_id, status, reason)]
        if t == MsgType.RIC_CONTROL_ACK:
            pending = self.pending.get(msg.transaction_id)
            if pending is None or pending.done:
                self._event("error", reason="UnexpectedAck", transaction_id=msg.transaction_id)
                return []
            pending.status = msg.body["status"]
            pending.reason = msg.body.get("reason", "")
            pending.acked_at = self.now_ms
            self._event(
                "control_ack", transaction_id=pending.transaction_id, xapp_id=pending.xapp_id,
                node_id=pending.node_id, status=pending.status, reason=pending.reason,
            )
            del self.pending[msg.transaction_id]
            handler = self._xapps.get(pending.xapp_id)
            return [lambda: handler.on_control_ack(pending)] if handler is not None else []
        # ProtocolError from the node
        self._event("error", node_id=conn.state.node_id, **msg.body)
        return []

    # -- xApps ----------------------------------------------------------------
    def register_xapp(self, xapp_id: str, handler: XappHandler) -> None:
        with self._lock:
            if xapp_id in self._xapps:
                raise DuplicateXapp(xapp_id)
            self._xapps[xapp_id] = handler
            self._event("xapp_register", xapp_id=xapp_id)

    def unregister_xapp(self, xapp_id: str) -> None:
        with self._lock:
            self._xapps.pop(xapp_id, None)
            for sub_id, route in list(self.routes.items()):
                if route.xapp_id == xapp_id:
                    del self.routes[sub_id]
                    record = self.registry.get(route.node_id)
                    if record is not None and sub_id in record.subscriptions:
                        record.subscriptions.remove(sub_id)

    def handle_subscription(
        self, xapp_id: str, node_id: str, report_period_ms: int, metric_set=()
    ) -> int:
        """Subscribe an xApp to periodic KPM indications from a node."""
        with self._lock:
            if xapp_id not in self._xapps:
                raise UnknownXapp(xapp_id)
            record = self.registry.get(node_id)
            if record is None:
                raise UnknownNode(node_id)
            window = int(record.cell.get("kpm_window_ms", 1))
            if report_period_ms < max(window, 1):
                raise PeriodTooSmall(f"{report_period_ms} ms < KPM window {window} ms")
            sub_id = self._next_sub
            self._next_sub += 1
            self.routes[sub_id] = Route(node_id, xapp_id, report_period_ms)
            record.subscriptions.append(sub_id)
            conn = self._conns[record.conn_id]
            self._event("subscribe", sub_id=sub_id, xapp_id=xapp_id, node_id=node_id, period_ms=report_period_ms)
            self._snapshot()
            event = XappSubscribe(sub_id, xapp_id, report_period_ms, tuple(metric_set), self.now_ms)
        self._dispatch(conn, event)
        return sub_id

    def _route_locked(self, msg: E2Message) -> list:
        sub_id = msg.body["sub_id"]
        route = self.routes.get(sub_id)
        handler = self._xapps.get(route.xapp_id) if route else None
        if route is None or handler is None:
            self._event("error", reason="UnknownSubscription", sub_id=sub_id)
            return []
        record = self.registry.get(route.node_id)
        if record is not None:
            record.last_indication_at = self.now_ms
        self._event(
            "indication", sub_id=sub_id, xapp_id=route.xapp_id, node_id=route.node_id,
            seq=msg.body["seq"], records=len(msg.body["records"]),
        )
        body = msg.body
        return [lambda: handler.on_indication(sub_id, body)]

    def route_indication(self, msg: E2Message) -> int:
        """Deliver an indication to its subscriber; returns the delivery count."""
        with self._lock:
            deliveries = self._route_locked(msg)
        for deliver in deliveries:
            deliver()
        return len(deliveries)

    def forward_control(
        self, xapp_id: str, directive: ControlDirective, timeout_ms: Optional[int] = None
    ) -> PendingControl:
        """Send a control request to the directive's node.

        Returns immediately; the outcome lands on the returned record and the
        xApp's ``on_control_ack`` when the node acks or the timeout expires.
        """
        with self._lock:
            if xapp_id not in self._xapps:
                raise UnknownXapp(xapp_id)
            record = self.registry.get(directive.node_id)
            if record is None:
                raise UnknownNode(directive.node_id)
            if timeout_ms is None:
                timeout_ms = self.control_timeout_ms
            if timeout_ms is None:
                periods = [r.report_period_ms for r in self.routes.values()
                           if r.xapp_id == xapp_id and r.node_id == directive.node_id]
                timeout_ms = 2 * (min(periods) if periods else int(record.cell.get("kpm_window_ms", 100)))
            txid = self._next_txid
            self._next_txid += 1
            pending = PendingControl(txid, xapp_id, directive.node_id, directive, self.now_ms, self.now_ms + timeout_ms)
            self.pending[txid] = pending
            conn = self._conns[record.conn_id]
            self._event("control", transaction_id=txid, xapp_id=xapp_id, node_id=directive.node_id,
                        directive=directive.to_body())
            body = directive.to_body()
            body.pop("node_id")
            event = XappControl(txid, body, self.now_ms)
        self._dispatch(conn, event)
        return pending

    def tick(self, now_ms: int) -> None:
        """Advance the RIC clock and expire overdue control requests."""
        expired = []
        with self._lock:
            self.now_ms = now_ms
            for txid, pending in list(self.pending.items()):
                if now_ms >= pending.deadline:
                    pending.status, pending.reason = "timeout", "Timeout"
                    del self.pending[txid]
                    self._event("control_timeout", transaction_id=txid, xapp_id=pending.xapp_id)
                    handler = self._xapps.get(pending.xapp_id)
                    if handler is not None:
                        expired.append((handler, pending))
        for handler, pending in expired:
            handler.on_control_ack(pending)

    def list_nodes(self) -> list[NodeRecord]:
        with self._lock:
            records = sorted(self.registry.values(), key=lambda r: (r.connected_at, r.conn_id))
            return [copy.deepcopy(r) for r in records]

    def node_info(self, node_id: str) -> dict:
        with self._lock:
            record = self.registry.get(node_id)
            if record is None:
                raise UnknownNode(node_id)
            return copy.deepcopy(record.cell)
