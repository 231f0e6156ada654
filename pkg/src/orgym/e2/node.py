"""RAN-side E2 termination: binds a simulated cell to a node FSM and a byte stream."""
from __future__ import annotations

import logging

from ..ransim.cell import CellState, InvalidDirective, KpmRecord
from .codec import E2Error, FrameDecoder, encode_frame, protocol_error
from .fsm import ApplyControl, Connected, Disconnected, KpmWindow, MsgIn, Send, Timer, node_fsm, node_state_for

log = logging.getLogger(__name__)


class E2Node:
    """Drives ``node_fsm`` for one base station.

    ``send`` is any callable taking bytes (a loopback endpoint's ``send`` or
    a socket writer). The owner feeds received bytes to :meth:`receive` and
    advances time with :meth:`tick` and :meth:`kpm_window`.
    """

    def __init__(self, cell: CellState, send=None):
        self.cell = cell
        self.state = node_state_for(cell.config)
        self.send = send
        self.decoder = FrameDecoder()
        self.now_ms = 0
        self.sent: list = []  # (now_ms, msg) when record_sent is on
        self.record_sent = False

    @property
    def node_id(self) -> str:
        return self.state.node_id

    def _run(self, event) -> None:
        self.state, actions = node_fsm(self.state, event)
        for action in actions:
            if isinstance(action, Send):
                if self.record_sent:
                    self.sent.append((self.now_ms, action.msg))
                if self.send is not None:
                    self.send(encode_frame(action.msg))
            elif isinstance(action, ApplyControl):
                try:
                    self.cell.apply_control(action.directive)
                except InvalidDirective:  # pragma: no cover - the FSM validated it already
                    log.exception("directive failed after validation")

    def connect(self, send=None, now_ms: int | None = None) -> None:
        if send is not None:
            self.send = send
        if now_ms is not None:
            self.now_ms = now_ms
        self.decoder = FrameDecoder()
        self._run(Connected(self.now_ms))

    def disconnect(self) -> None:
        self._run(Disconnected(self.now_ms))

    def receive(self, data: bytes) -> None:
        try:
            items = list(self.decoder.feed(data))
        except E2Error as exc:
            log.warning("%s: unrecoverable stream error %s", self.node_id, exc)
            if self.send is not None:
                self.send(encode_frame(protocol_error(type(exc).__name__)))
            self.decoder = FrameDecoder()
            return
        for item in items:
            if isinstance(item, E2Error):
                if self.send is not None:
                    self.send(encode_frame(protocol_error(type(item).__name__)))
                continue
            self._run(MsgIn(item, self.now_ms))

    def tick(self, now_ms: int) -> None:
        self.now_ms = now_ms
        self._run(Timer(now_ms))

    def kpm_window(self, records: list[KpmRecord], now_ms: int) -> None:
        self.now_ms = now_ms
        self._run(KpmWindow(tuple(r.to_dict() for r in records), now_ms))

    @property
    def established(self) -> bool:
        return self.state.phase == "established"
