"""E2-lite: framing, message schemas, endpoint state machines and transports."""
from .codec import (
    MAX_BODY,
    BodyTooLarge,
    E2Error,
    E2Message,
    FrameDecoder,
    LengthMismatch,
    MalformedBody,
    MsgType,
    NeedMoreBytes,
    UnknownMsgType,
    decode_frame,
    encode_frame,
    is_node_id,
)
from .fsm import (
    ApplyControl,
    Connected,
    Disconnected,
    KpmWindow,
    MsgIn,
    NodeState,
    RicConnState,
    Send,
    Timer,
    XappControl,
    XappSubscribe,
    node_fsm,
    ric_fsm,
)
from .node import E2Node
from .transport import DEFAULT_PORT, LoopbackNetwork
