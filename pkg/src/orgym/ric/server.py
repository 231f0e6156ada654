"""TCP front ends for :class:`NearRtRic`.

:class:`RicServer` terminates E2-lite for base stations. With ``xapp_port``
set it also accepts out-of-process xApps speaking the same frames: an xApp
sends ``RicSubscriptionRequest`` (its ``sub_id`` is ignored; the RIC assigns
one) and ``RicControlRequest`` and receives subscription responses,
indications and control acks on that connection.
"""
from __future__ import annotations

import logging
import socket
import socketserver
import threading

from ..e2.codec import E2Error, E2Message, FrameDecoder, MsgType, encode_frame, protocol_error
from ..e2.transport import DEFAULT_PORT
from ..ransim.cell import ControlDirective
from .core import NearRtRic, PendingControl, RicError

log = logging.getLogger(__name__)


def _sender(sock: socket.socket):
    wlock = threading.Lock()

    def send(data: bytes) -> None:
        with wlock:
            try:
                sock.sendall(data)
            except OSError:
                pass

    return send


class _NodeHandler(socketserver.BaseRequestHandler):
    def handle(self):
        ric: NearRtRic = self.server.ric
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn_id = ric.accept(_sender(sock))
        log.info("e2 connection %d from %s", conn_id, self.client_address)
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    break
                ric.receive(conn_id, data)
        except OSError:
            pass
        finally:
            ric.disconnect(conn_id)


class WireXapp:
    """RIC-side stand-in for a remote xApp: RIC callbacks become frames."""

    def __init__(self, ric: NearRtRic, send):
        self.ric = ric
        self.send = send
        self.xapp_id = ""
        self._sub_txids: dict[int, int] = {}
        self._ctl_txids: dict[int, int] = {}

    def _out(self, msg_type: MsgType, body: dict, txid: int = 0) -> None:
        self.send(encode_frame(E2Message(msg_type, body, txid)))

    # RIC callbacks
    def on_indication(self, sub_id: int, body: dict) -> None:
        self._out(MsgType.RIC_INDICATION, body)

    def on_subscription_response(self, sub_id: int, status: str, reason: str) -> None:
        body = {"sub_id": sub_id, "status": status}
        if reason:
            body["reason"] = reason
        self._out(MsgType.RIC_SUBSCRIPTION_RESPONSE, body, self._sub_txids.pop(sub_id, 0))

    def on_control_ack(self, pending: PendingControl) -> None:
        body = {"status": pending.status}
        if pending.reason:
            body["reason"] = pending.reason
        self._out(MsgType.RIC_CONTROL_ACK, body, self._ctl_txids.pop(pending.transaction_id, 0))

    # frames from the xApp
    def handle(self, msg: E2Message) -> None:
        body, txid = msg.body, msg.transaction_id
        if msg.msg_type == MsgType.RIC_SUBSCRIPTION_REQUEST:
            xapp_id = body["xapp_id"]
            try:
                if not self.xapp_id:
                    self.ric.register_xapp(xapp_id, self)
                    self.xapp_id = xapp_id
                elif xapp_id != self.xapp_id:
                    raise RicError(f"connection belongs to {self.xapp_id}")
                sub_id = self.ric.handle_subscription(
                    xapp_id, body["node_id"], body["report_period_ms"], tuple(body["metric_set"])
                )
            except RicError as exc:
                self._out(MsgType.RIC_SUBSCRIPTION_RESPONSE, {"sub_id": 0, "status": "rejected", "reason": exc.code},
                          txid)
                return
            self._sub_txids[sub_id] = txid
        elif msg.msg_type == MsgType.RIC_CONTROL_REQUEST:
            try:
                if not self.xapp_id:
                    raise RicError("subscribe before sending controls")
                directive = ControlDirective.from_body(body)
                pending = self.ric.forward_control(self.xapp_id, directive)
            except (RicError, ValueError, KeyError, TypeError) as exc:
                reason = getattr(exc, "code", type(exc).__name__)
                self._out(MsgType.RIC_CONTROL_ACK, {"status": "rejected", "reason": reason}, txid)
                return
            if pending.done:
                self.on_control_ack(pending)
            else:
                self._ctl_txids[pending.transaction_id] = txid
        elif msg.msg_type != MsgType.PROTOCOL_ERROR:
            self.send(encode_frame(protocol_error("UnexpectedMessage", txid, msg_type=int(msg.msg_type))))

    def close(self) -> None:
        if self.xapp_id:
            self.ric.unregister_xapp(self.xapp_id)


class _XappHandler(socketserver.BaseRequestHandler):
    def handle(self):
        sock: socket.socket = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send = _sender(sock)
        peer = WireXapp(self.server.ric, send)
        decoder = FrameDecoder()
        try:
            while True:
                data = sock.recv(65536)
                if not data:
                    break
                try:
                    items = list(decoder.feed(data))
                except E2Error as exc:
                    send(encode_frame(protocol_error(type(exc).__name__)))
                    decoder = FrameDecoder()
                    continue
                for item in items:
                    if isinstance(item, E2Error):
                        send(encode_frame(protocol_error(type(item).__name__)))
                    else:
                        peer.handle(item)
        except OSError:
            pass
        finally:
            peer.close()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class RicServer:
    """Serves E2-lite for ``ric`` from background threads.

    Port 0 picks a free port; read it back from :attr:`port` / :attr:`xapp_port`.
    """

    def __init__(self, ric: NearRtRic, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
                 xapp_port: int | None = None):
        self.ric = ric
        self._servers = [_Server((host, port), _NodeHandler)]
        if xapp_port is not None:
            self._servers.append(_Server((host, xapp_port), _XappHandler))
        for srv in self._servers:
            srv.ric = ric
        self._threads = [threading.Thread(target=s.serve_forever, name="ric-tcp", daemon=True) for s in self._servers]

    @property
    def address(self) -> tuple[str, int]:
        return self._servers[0].server_address[:2]

    @property
    def port(self) -> int:
        return self.address[1]

    @property
    def xapp_address(self) -> tuple[str, int] | None:
        return self._servers[1].server_address[:2] if len(self._servers) > 1 else None

    def start(self) -> "RicServer":
        for t in self._threads:
            t.start()
        return self

    def stop(self) -> None:
        for srv in self._servers:
            srv.shutdown()
            srv.server_close()
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
