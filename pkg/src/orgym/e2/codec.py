"""E2-lite wire format.

A frame is::

    +----------------------+-----------+-------------------------------+
    | length (4 bytes, BE) | msg_type  | body: canonical JSON (UTF-8)  |
    +----------------------+-----------+-------------------------------+

``length`` counts the type byte plus the body. The body is the message's
fields serialized with sorted keys and no insignificant whitespace. A
non-zero ``transaction_id`` travels inside the body under the reserved key
``"transaction_id"``; zero is omitted, so an empty ProtocolError encodes as
``00 00 00 03 08 7B 7D``.
"""
from __future__ import annotations

import enum
import json
import re
import struct
from dataclasses import dataclass, field
from typing import Any, Iterator

MAX_BODY = 16 * 1024 * 1024
HEADER = struct.Struct("!IB")
TXID_KEY = "transaction_id"
NODE_ID_RE = re.compile(r"gnb:[0-9]{3}-[0-9]{3}-[0-9a-fA-F]{8}")


class MsgType(enum.IntEnum):
    E2_SETUP_REQUEST = 0x01
    E2_SETUP_RESPONSE = 0x02
    RIC_SUBSCRIPTION_REQUEST = 0x03
    RIC_SUBSCRIPTION_RESPONSE = 0x04
    RIC_INDICATION = 0x05
    RIC_CONTROL_REQUEST = 0x06
    RIC_CONTROL_ACK = 0x07
    PROTOCOL_ERROR = 0x08


RESPONSE_OF = {
    MsgType.E2_SETUP_REQUEST: MsgType.E2_SETUP_RESPONSE,
    MsgType.RIC_SUBSCRIPTION_REQUEST: MsgType.RIC_SUBSCRIPTION_RESPONSE,
    MsgType.RIC_CONTROL_REQUEST: MsgType.RIC_CONTROL_ACK,
}


class E2Error(Exception):
    """Base of every codec error; decoding never raises anything else."""


class BodyTooLarge(E2Error):
    pass


class NeedMoreBytes(E2Error):
    def __init__(self, needed: int):
        self.needed = needed
        super().__init__(f"need {needed} more bytes")


class UnknownMsgType(E2Error):
    def __init__(self, code: int):
        self.msg_code = code
        super().__init__(f"unknown msg_type 0x{code:02X}")


class MalformedBody(E2Error):
    pass


class LengthMismatch(E2Error):
    pass


def is_node_id(value: Any) -> bool:
    return isinstance(value, str) and NODE_ID_RE.fullmatch(value) is not None


# Required body fields per message type: name -> accepted python types.
_STR, _INT, _LIST, _DICT = (str,), (int,), (list,), (dict,)
SCHEMAS: dict[MsgType, dict[str, tuple]] = {
    MsgType.E2_SETUP_REQUEST: {"node_id": _STR},
    MsgType.E2_SETUP_RESPONSE: {"node_id": _STR, "status": _STR},
    MsgType.RIC_SUBSCRIPTION_REQUEST: {
        "sub_id": _INT,
        "node_id": _STR,
        "xapp_id": _STR,
        "report_period_ms": _INT,
        "metric_set": _LIST,
    },
    MsgType.RIC_SUBSCRIPTION_RESPONSE: {"sub_id": _INT, "status": _STR},
    MsgType.RIC_INDICATION: {"sub_id": _INT, "node_id": _STR, "seq": _INT, "ts_ms": _INT, "records": _LIST},
    MsgType.RIC_CONTROL_REQUEST: {"node_id": _STR},
    MsgType.RIC_CONTROL_ACK: {"status": _STR},
    MsgType.PROTOCOL_ERROR: {},
}


def check_body(msg_type: MsgType, body: Any) -> None:
    if not isinstance(body, dict):
        raise MalformedBody("body must be a JSON object")
    if TXID_KEY in body:
        raise MalformedBody(f"{TXID_KEY!r} is reserved")
    for name, types in SCHEMAS[msg_type].items():
        if name not in body:
            raise MalformedBody(f"{msg_type.name} missing {name!r}")
        value = body[name]
        if isinstance(value, bool) or not isinstance(value, types):
            raise MalformedBody(f"{msg_type.name}.{name} has type {type(value).__name__}")
        if types is _INT and value < 0:
            raise MalformedBody(f"{msg_type.name}.{name} must be unsigned")


@dataclass(frozen=True)
class E2Message:
    msg_type: MsgType
    body: dict = field(default_factory=dict)
    transaction_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "msg_type", MsgType(self.msg_type))


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False).encode()


def encode_frame(msg: E2Message) -> bytes:
    check_body(msg.msg_type, msg.body)
    if isinstance(msg.transaction_id, bool) or not isinstance(msg.transaction_id, int) or msg.transaction_id < 0:
        raise MalformedBody("transaction_id must be an unsigned integer")
    payload = dict(msg.body)
    if msg.transaction_id:
        payload[TXID_KEY] = msg.transaction_id
    try:
        body = canonical_json(payload)
    except (TypeError, ValueError) as exc:
        raise MalformedBody(str(exc)) from None
    if len(body) > MAX_BODY:
        raise BodyTooLarge(f"body is {len(body)} bytes (max {MAX_BODY})")
    return HEADER.pack(len(body) + 1, int(msg.msg_type)) + body


def _parse(data: bytes, length: int) -> E2Message:
    code = data[4]
    try:
        msg_type = MsgType(code)
    except ValueError:
        raise UnknownMsgType(code) from None
    try:
        payload = json.loads(data[5 : 4 + length].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, RecursionError) as exc:
        raise MalformedBody(f"invalid JSON body: {type(exc).__name__}") from None
    if not isinstance(payload, dict):
        raise MalformedBody("body must be a JSON object")
    txid = payload.pop(TXID_KEY, 0)
    if isinstance(txid, bool) or not isinstance(txid, int) or txid < 0:
        raise MalformedBody("transaction_id must be an unsigned integer")
    check_body(msg_type, payload)
    return E2Message(msg_type, payload, txid)


def _frame_length(data: bytes) -> int:
    if len(data) < 4:
        raise NeedMoreBytes(4 - len(data))
    (length,) = struct.unpack_from("!I", data)
    if length < 1:
        raise LengthMismatch("length must cover the msg_type byte")
    if length - 1 > MAX_BODY:
        raise LengthMismatch(f"declared body of {length - 1} bytes exceeds {MAX_BODY}")
    return length


def decode_frame(data: bytes) -> E2Message:
    """Decode exactly one frame; the inverse of :func:`encode_frame`.

    Total on arbitrary input: raises only :class:`E2Error` subclasses.
    """
    data = bytes(data)
    length = _frame_length(data)
    if len(data) < 4 + length:
        raise NeedMoreBytes(4 + length - len(data))
    if len(data) > 4 + length:
        raise LengthMismatch(f"{len(data) - 4 - length} trailing bytes after frame")
    return _parse(data, length)


class FrameDecoder:
    """Incremental decoder for a byte stream carrying back-to-back frames.

    A frame with a valid header but a bad type or body is consumed and its
    error yielded in place of a message, so one bad frame does not poison
    the stream. A bad length header is unrecoverable and is raised.
    """

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> Iterator[E2Message | E2Error]:
        self._buf.extend(data)
        while True:
            try:
                length = _frame_length(self._buf)
            except NeedMoreBytes:
                return
            if len(self._buf) < 4 + length:
                return
            frame = bytes(self._buf[: 4 + length])
            del self._buf[: 4 + length]
            try:
                yield _parse(frame, length)
            except E2Error as exc:
                yield exc

    @property
    def pending(self) -> int:
        return len(self._buf)


# -- message constructors -------------------------------------------------
def setup_request(node_id: str, cell: dict | None = None, txid: int = 0) -> E2Message:
    body = {"node_id": node_id}
    if cell is not None:
        body["cell"] = cell
    return E2Message(MsgType.E2_SETUP_REQUEST, body, txid)


def protocol_error(reason: str = "", txid: int = 0, **extra) -> E2Message:
    body = dict(extra)
    if reason:
        body["reason"] = reason
    return E2Message(MsgType.PROTOCOL_ERROR, body, txid)
