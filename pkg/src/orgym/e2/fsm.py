"""Pure protocol state machines for the two ends of an E2-lite connection.

``node_fsm`` is the base-station side, ``ric_fsm`` the RIC side of one
connection. Both are pure: they take a state and an event and return the
next state plus a list of actions for the driver to execute. Neither
performs I/O.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional, Union

from ..ransim.cell import ControlDirective, InvalidDirective, validate_directive
from .codec import E2Message, MsgType, is_node_id, protocol_error

# -- events ------------------------------------------------------------------


@dataclass(frozen=True)
class Connected:
    now_ms: int = 0


@dataclass(frozen=True)
class Disconnected:
    now_ms: int = 0


@dataclass(frozen=True)
class MsgIn:
    msg: E2Message
    now_ms: int = 0


@dataclass(frozen=True)
class Timer:
    now_ms: int


@dataclass(frozen=True)
class KpmWindow:
    records: tuple  # KPM rows as dicts
    now_ms: int


@dataclass(frozen=True)
class XappSubscribe:
    """RIC-internal: an xApp asked for a subscription on this connection's node."""

    sub_id: int
    xapp_id: str
    report_period_ms: int
    metric_set: tuple
    now_ms: int = 0


@dataclass(frozen=True)
class XappControl:
    transaction_id: int
    body: dict
    now_ms: int = 0


Event = Union[Connected, Disconnected, MsgIn, Timer, KpmWindow, XappSubscribe, XappControl]

# -- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    msg: E2Message


@dataclass(frozen=True)
class ApplyControl:
    directive: ControlDirective
    transaction_id: int


@dataclass(frozen=True)
class Register:
    node_id: str
    cell: dict


@dataclass(frozen=True)
class Unregister:
    node_id: str


@dataclass(frozen=True)
class Relay:
    """RIC side: hand a node's message to the routing layer."""

    msg: E2Message


# -- base-station side -------------------------------------------------------

IDLE, SETUP_SENT, ESTABLISHED = "idle", "setup_sent", "established"
IDENTITY_COLUMNS = ("ts_ms", "bs_id", "slice_id", "ue_id")


@dataclass(frozen=True)
class NodeSub:
    sub_id: int
    xapp_id: str
    period_ms: int
    next_due: int
    metric_set: tuple
    seq: int = 0
    pending: tuple = ()


@dataclass(frozen=True)
class NodeState:
    node_id: str
    rbg_count: int
    slice_ids: tuple
    kpm_window_ms: int
    phase: str = IDLE
    subs: tuple = ()  # NodeSub, ordered by sub_id
    next_txid: int = 1

    @property
    def cell_info(self) -> dict:
        return {"rbg_count": self.rbg_count, "slice_ids": list(self.slice_ids), "kpm_window_ms": self.kpm_window_ms}


def node_state_for(config) -> NodeState:
    return NodeState(config.node_id, config.rbg_count, tuple(config.slice_ids), config.kpm_window_ms)


def _project(row: dict, metrics: tuple) -> dict:
    if not metrics:
        return row
    return {k: row[k] for k in (*IDENTITY_COLUMNS, *metrics) if k in row}


def _sub_response(sub_id: int, status: str, txid: int, reason: str = "") -> Send:
    body = {"sub_id": sub_id, "status": status}
    if reason:
        body["reason"] = reason
    return Send(E2Message(MsgType.RIC_SUBSCRIPTION_RESPONSE, body, txid))


def _ack(status: str, txid: int, reason: str = "") -> Send:
    body = {"status": status}
    if reason:
        body["reason"] = reason
    return Send(E2Message(MsgType.RIC_CONTROL_ACK, body, txid))


def _node_established(state: NodeState, msg: E2Message, now: int):
    t, body, txid = msg.msg_type, msg.body, msg.transaction_id
    if t == MsgType.RIC_SUBSCRIPTION_REQUEST:
        sub_id = body["sub_id"]
        if body["node_id"] != state.node_id:
            return state, [_sub_response(sub_id, "rejected", txid, "UnknownNode")]
        if body["report_period_ms"] < state.kpm_window_ms:
            return state, [_sub_response(sub_id, "rejected", txid, "PeriodTooSmall")]
        if any(s.sub_id == sub_id for s in state.subs):
            return state, [_sub_response(sub_id, "rejected", txid, "DuplicateSubscription")]
        period = body["report_period_ms"]
        sub = NodeSub(sub_id, body["xapp_id"], period, now + period, tuple(body["metric_set"]))
        subs = tuple(sorted((*state.subs, sub), key=lambda s: s.sub_id))
        return replace(state, subs=subs), [_sub_response(sub_id, "accepted", txid)]
    if t == MsgType.RIC_CONTROL_REQUEST:
        directive = ControlDirective.from_body(body)
        if directive.node_id != state.node_id:
            return state, [_ack("rejected", txid, "UnknownNode")]
        try:
            validate_directive(directive, state.rbg_count, list(state.slice_ids))
        except InvalidDirective as exc:
            return state, [_ack("rejected", txid, exc.reason)]
        return state, [ApplyControl(directive, txid), _ack("applied", txid)]
    if t == MsgType.PROTOCOL_ERROR:
        return state, []
    return state, [Send(protocol_error("UnexpectedMessage", txid, msg_type=int(t)))]


def node_fsm(state: NodeState, event: Event):
    """Base-station endpoint: Idle -> SetupSent -> Established."""
    if isinstance(event, Disconnected):
        return replace(state, phase=IDLE, subs=()), []

    if state.phase == IDLE:
        if isinstance(event, Connected):
            msg = E2Message(
                MsgType.E2_SETUP_REQUEST, {"node_id": state.node_id, "cell": state.cell_info}, state.next_txid
            )
            return replace(state, phase=SETUP_SENT, next_txid=state.next_txid + 1), [Send(msg)]
        return state, []

    if isinstance(event, MsgIn):
        msg = event.msg
        if state.phase == SETUP_SENT:
            if msg.msg_type == MsgType.E2_SETUP_RESPONSE and msg.body.get("status") == "accepted":
                return replace(state, phase=ESTABLISHED), []
            if msg.msg_type in (MsgType.E2_SETUP_RESPONSE, MsgType.PROTOCOL_ERROR):
                return state, []
            return state, [Send(protocol_error("NotEstablished", msg.transaction_id, msg_type=int(msg.msg_type)))]
        return _node_established(state, msg, event.now_ms)

    if state.phase != ESTABLISHED or not state.subs:
        return state, []

    if isinstance(event, KpmWindow):
        subs = tuple(
            replace(s, pending=s.pending + tuple(_project(r, s.metric_set) for r in event.records))
            for s in state.subs
        )
        return replace(state, subs=subs), []

    if isinstance(event, Timer):
        now = event.now_ms
        if all(s.next_due > now for s in state.subs):
            return state, []
        actions, subs = [], []
        for s in state.subs:
            if s.next_due <= now:
                body = {
                    "sub_id": s.sub_id,
                    "node_id": state.node_id,
                    "seq": s.seq,
                    "ts_ms": now,
                    "records": list(s.pending),
                }
                actions.append(Send(E2Message(MsgType.RIC_INDICATION, body)))
                next_due = s.next_due
                while next_due <= now:
                    next_due += s.period_ms
                s = replace(s, seq=s.seq + 1, pending=(), next_due=next_due)
            subs.append(s)
        return replace(state, subs=tuple(subs)), actions

    return state, []


# -- RIC side ----------------------------------------------------------------

AWAIT_SETUP, REGISTERED = "await_setup", "registered"


@dataclass(frozen=True)
class RicConnState:
    conn_id: int
    phase: str = AWAIT_SETUP
    node_id: Optional[str] = None


_FROM_NODE = (
    MsgType.RIC_SUBSCRIPTION_RESPONSE,
    MsgType.RIC_INDICATION,
    MsgType.RIC_CONTROL_ACK,
    MsgType.PROTOCOL_ERROR,
)


def ric_fsm(state: RicConnState, event: Event, registry: Mapping[str, Any] = {}):
    """RIC endpoint of one node connection.

    ``registry`` is a read-only view of the node ids currently registered on
    any connection; it is the only cross-connection input.
    """
    if isinstance(event, Disconnected):
        actions = [Unregister(state.node_id)] if state.phase == REGISTERED else []
        return replace(state, phase=AWAIT_SETUP, node_id=None), actions

    if isinstance(event, MsgIn):
        msg = event.msg
        txid = msg.transaction_id
        if state.phase == AWAIT_SETUP:
            if msg.msg_type != MsgType.E2_SETUP_REQUEST:
                if msg.msg_type == MsgType.PROTOCOL_ERROR:
                    return state, []
                return state, [Send(protocol_error("SetupRequired", txid, msg_type=int(msg.msg_type)))]
            node_id = msg.body["node_id"]
            if not is_node_id(node_id):
                return state, [Send(protocol_error("MalformedNodeId", txid, node_id=node_id))]
            if node_id in registry:
                return state, [Send(protocol_error("DuplicateNode", txid, node_id=node_id))]
            cell = msg.body.get("cell") if isinstance(msg.body.get("cell"), dict) else {}
            response = E2Message(MsgType.E2_SETUP_RESPONSE, {"node_id": node_id, "status": "accepted"}, txid)
            return replace(state, phase=REGISTERED, node_id=node_id), [Register(node_id, cell), Send(response)]
        if msg.msg_type in _FROM_NODE:
            return state, [Relay(msg)]
        return state, [Send(protocol_error("UnexpectedMessage", txid, msg_type=int(msg.msg_type)))]

    if isinstance(event, XappSubscribe):
        if state.phase != REGISTERED:
            return state, []
        body = {
            "sub_id": event.sub_id,
            "node_id": state.node_id,
            "xapp_id": event.xapp_id,
            "report_period_ms": event.report_period_ms,
            "metric_set": list(event.metric_set),
        }
        return state, [Send(E2Message(MsgType.RIC_SUBSCRIPTION_REQUEST, body, event.sub_id))]

    if isinstance(event, XappControl):
        if state.phase != REGISTERED:
            return state, []
        body = dict(event.body)
        body["node_id"] = state.node_id
        return state, [Send(E2Message(MsgType.RIC_CONTROL_REQUEST, body, event.transaction_id))]

    return state, []


# Messages each endpoint may legally receive, per state.
NODE_ACCEPTS = {
    IDLE: frozenset(),
    SETUP_SENT: frozenset({MsgType.E2_SETUP_RESPONSE, MsgType.PROTOCOL_ERROR}),
    ESTABLISHED: frozenset(
        {MsgType.RIC_SUBSCRIPTION_REQUEST, MsgType.RIC_CONTROL_REQUEST, MsgType.PROTOCOL_ERROR}
    ),
}
RIC_ACCEPTS = {
    AWAIT_SETUP: frozenset({MsgType.E2_SETUP_REQUEST}),
    REGISTERED: frozenset(_FROM_NODE),
}
