"""Shared fixtures: loopback-wired nodes around one RIC on a manual clock, E2 fuzzing and
state-space exploration, and a gradient oracle."""
import random
from collections import deque

import numpy as np

from orgym.agent import MLP, actor_loss_and_grads, critic_loss_and_grads, softmax
from orgym.e2.codec import SCHEMAS, E2Error, E2Message, FrameDecoder, MsgType, decode_frame, encode_frame, protocol_error, setup_request
from orgym.e2.fsm import (
    ESTABLISHED,
    IDLE,
    NODE_ACCEPTS,
    RIC_ACCEPTS,
    Connected,
    Disconnected,
    KpmWindow,
    MsgIn,
    Register,
    RicConnState,
    Send,
    Timer,
    Unregister,
    XappControl,
    XappSubscribe,
    node_fsm,
    node_state_for,
    ric_fsm,
)
from orgym.e2.node import E2Node
from orgym.e2.transport import LoopbackNetwork
from orgym.ransim import config_from_dict
from orgym.ransim.cell import CellState
from orgym.ric import NearRtRic


def node_id(i):
    return f"gnb:311-048-{i:08d}"


def make_cell(i, window=10):
    return CellState(config_from_dict({
        "slice-allocation": {"0": [0, 8], "1": [9, 16]},
        "slice-users": {"0": [0], "1": [1]},
        "kpm-window-ms": window,
        "node-id": node_id(i),
        "bs-id": f"bs{i}",
    }))


class Recorder:
    def __init__(self):
        self.indications = []
        self.responses = []
        self.acks = []

    def on_indication(self, sub_id, body):
        self.indications.append((sub_id, body))

    def on_subscription_response(self, sub_id, status, reason):
        self.responses.append((sub_id, status, reason))

    def on_control_ack(self, pending):
        self.acks.append(pending)


class Bench:
    """Nodes wired to one RIC over loopback pipes, driven by a manual clock."""

    def __init__(self, n_nodes=2, window=10):
        self.log = []
        self.ric = NearRtRic(log_sink=self.log.append)
        self.net = LoopbackNetwork()
        self.now = 0
        self.nodes = {}
        self.pipes = {}
        self.xapps = []
        for i in range(n_nodes):
            self.add_node(i, window)

    def add_node(self, i, window=10):
        node = E2Node(make_cell(i, window))
        a, b = self.net.pipe(f"n{i}", "ric")
        conn = self.ric.accept(b.send)
        b.on_receive = lambda data, c=conn: self.ric.receive(c, data)
        b.on_close = lambda c=conn: self.ric.disconnect(c)
        a.on_receive = node.receive
        node.connect(a.send, self.now)
        self.net.pump()
        self.nodes[i], self.pipes[i] = node, a
        return node

    def drop(self, i):
        self.pipes.pop(i).close()
        self.nodes.pop(i).disconnect()

    def run(self, ms):
        for _ in range(ms):
            self.now += 1
            for node in self.nodes.values():
                cell = node.cell
                cell.step()
                if cell.window_due():
                    node.kpm_window(cell.emit_kpm_window(), self.now)
            self.ric.tick(self.now)
            for node in self.nodes.values():
                node.tick(self.now)
            self.net.pump()
            for xapp in self.xapps:
                xapp.tick(self.now)
            self.net.pump()

    def start(self, xapp):
        xapp.attach(self.ric)
        xapp.start(self.now)
        self.xapps.append(xapp)
        self.net.pump()
        return xapp


def _numeric_grads(net, loss_fn, eps=1e-5):
    flat = net.get_flat()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        net.set_flat(flat)
        up = loss_fn()
        flat[i] = orig - eps
        net.set_flat(flat)
        down = loss_fn()
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    net.set_flat(flat)
    return out


def _layer_rel_err(grads, numeric):
    """Max over parameter tensors of |analytic - numeric| / max(|analytic|, |numeric|), L2 norms."""
    worst, k = 0.0, 0
    for g in grads:
        n = numeric[k : k + g.size].reshape(g.shape)
        k += g.size
        denom = max(np.linalg.norm(g), np.linalg.norm(n), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - n) / denom))
    return worst


def gradient_check(seed, n_in=6, n_act=9, batch=8):
    """Worst relative error of the actor and critic gradients of a random 5x30 net."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(batch, n_in))
    actor = MLP([n_in, 30, 30, 30, 30, 30, n_act], seed=seed, out_scale=1.0)
    critic = MLP([n_in, 30, 30, 30, 30, 30, 1], seed=seed + 100)
    actions = rng.integers(n_act, size=batch)
    adv = rng.normal(size=batch)
    old_logp = np.log(softmax(actor.forward(X)))[np.arange(batch), actions] + rng.normal(0, 0.05, batch)
    returns = rng.normal(size=batch)

    def a_loss():
        return actor_loss_and_grads(actor, X, actions, adv, old_logp, 0.2, 0.01)[0]

    def c_loss():
        return critic_loss_and_grads(critic, X, returns)[0]

    _, ga = actor_loss_and_grads(actor, X, actions, adv, old_logp, 0.2, 0.01)
    _, gc = critic_loss_and_grads(critic, X, returns)
    return max(_layer_rel_err(ga, _numeric_grads(actor, a_loss)), _layer_rel_err(gc, _numeric_grads(critic, c_loss)))


# -- E2 codec fuzzing -----------------------------------------------------------------

FUZZ_NODE = "gnb:311-048-01000501"


def _random_text(rng, n):
    # includes non-ASCII code points but never surrogates
    return "".join(chr(rng.choice([rng.randint(32, 126), rng.randint(0xA0, 0xD7FF), rng.randint(0xE000, 0x10FFFF)]))
                   for _ in range(rng.randint(0, n)))


def _random_scalar(rng):
    kind = rng.randrange(5)
    if kind == 0:
        return None
    if kind == 1:
        return rng.random() < 0.5
    if kind == 2:
        return rng.randint(-(2**53), 2**53)
    if kind == 3:
        return rng.uniform(-1e12, 1e12)
    return _random_text(rng, 10)


def _random_json(rng, depth=2):
    if depth == 0 or rng.random() < 0.5:
        return _random_scalar(rng)
    if rng.random() < 0.5:
        return [_random_json(rng, depth - 1) for _ in range(rng.randint(0, 4))]
    return {_random_text(rng, 6): _random_json(rng, depth - 1) for _ in range(rng.randint(0, 4))}


def random_message(rng):
    """A schema-conforming message with random field values and a few unknown extra fields."""
    msg_type = rng.choice(list(MsgType))
    gen = {
        (str,): lambda: _random_text(rng, 24),
        (int,): lambda: rng.randint(0, 2**53),
        (list,): lambda: [_random_scalar(rng) for _ in range(rng.randint(0, 5))],
        (dict,): lambda: {_random_text(rng, 5): _random_scalar(rng) for _ in range(rng.randint(0, 4))},
    }
    body = {name: gen[types]() for name, types in SCHEMAS[msg_type].items()}
    for _ in range(rng.randint(0, 3)):
        key = _random_text(rng, 8)
        if key not in body and key != "transaction_id":
            body[key] = _random_json(rng)
    return E2Message(msg_type, body, rng.randint(0, 2**32))


def fuzz_decoder(n, seed=1234):
    """Feed ``n`` hostile frames to the one-shot and streaming decoders.

    Returns counts of frames decoded to a message and frames rejected with an
    E2Error; any other exception propagates.
    """
    rng = random.Random(seed)
    seeds = [encode_frame(m) for m in (
        setup_request(FUZZ_NODE, {"rbg_count": 17}, 3),
        protocol_error("x"),
        E2Message(MsgType.RIC_INDICATION, {"sub_id": 1, "node_id": FUZZ_NODE, "seq": 0, "ts_ms": 250,
                                           "records": []}),
    )]
    outcomes = {"msg": 0, "err": 0}
    dec = FrameDecoder()
    for i in range(n):
        kind = i % 3
        if kind == 0:
            data = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 24)))
        elif kind == 1:
            body = bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 16)))
            data = (len(body) + 1).to_bytes(4, "big") + bytes([rng.randint(0, 9)]) + body
        else:
            data = bytearray(rng.choice(seeds))
            for _ in range(rng.randint(1, 3)):
                data[rng.randrange(len(data))] = rng.getrandbits(8)
            data = bytes(data)
        try:
            decode_frame(data)
            outcomes["msg"] += 1
        except E2Error:
            outcomes["err"] += 1
        try:
            for item in dec.feed(data):
                assert isinstance(item, (E2Message, E2Error))
        except E2Error:
            dec = FrameDecoder()
    return outcomes


# -- node/RIC state-space exploration ----------------------------------------------------

FSM_CONFIG = config_from_dict({"slice-allocation": {"0": [0, 8], "1": [9, 16]}, "slice-users": {"0": [0], "1": [1]},
                               "kpm-window-ms": 10, "node-id": FUZZ_NODE})
RECORD = {"ts_ms": 10, "bs_id": "bs0", "slice_id": 0, "ue_id": 0, "dl_thr_mbps": 1.0}


class Violation(AssertionError):
    pass


def fsm_step(world, event):
    """Apply one event to (node, ric, n2r, r2n, registry, clock, next_id); returns the new world."""
    node, ric, n2r, r2n, registry, clock, nxt = world
    n2r, r2n = deque(n2r), deque(r2n)

    def ric_apply(ev):
        nonlocal ric, registry
        ric, actions = ric_fsm(ric, ev, dict.fromkeys(registry))
        for a in actions:
            if isinstance(a, Send):
                r2n.append(a.msg)
            elif isinstance(a, Register):
                registry = registry | {a.node_id}
            elif isinstance(a, Unregister):
                registry = registry - {a.node_id}

    def node_apply(ev):
        nonlocal node
        node, actions = node_fsm(node, ev)
        for a in actions:
            if isinstance(a, Send):
                n2r.append(a.msg)

    kind = event[0]
    if kind == "connect":
        node_apply(Connected(clock))
    elif kind == "disconnect":
        node_apply(Disconnected(clock))
        ric_apply(Disconnected(clock))
        n2r.clear()
        r2n.clear()
    elif kind == "n2r":
        msg = n2r.popleft()
        if msg.msg_type not in RIC_ACCEPTS[ric.phase]:
            raise Violation(f"node sent {msg.msg_type.name} to RIC in {ric.phase}")
        ric_apply(MsgIn(msg, clock))
    elif kind == "r2n":
        msg = r2n.popleft()
        if msg.msg_type not in NODE_ACCEPTS[node.phase]:
            raise Violation(f"RIC sent {msg.msg_type.name} to node in {node.phase}")
        node_apply(MsgIn(msg, clock))
    elif kind == "timer":
        clock += 250
        node_apply(Timer(clock))
    elif kind == "kpm":
        node_apply(KpmWindow((RECORD,), clock))
    elif kind == "subscribe":
        ric_apply(XappSubscribe(nxt, "x", 250, (), clock))
        nxt += 1
    elif kind == "control_ok":
        ric_apply(XappControl(nxt, {"slice_scheduling_policy": [1, 2]}, clock))
        nxt += 1
    elif kind == "control_bad":
        ric_apply(XappControl(nxt, {"slice_allocation": {"0": [0, 9], "1": [9, 16]}}, clock))
        nxt += 1
    return node, ric, tuple(n2r), tuple(r2n), registry, clock, nxt


def fsm_enabled(world):
    node, ric, n2r, r2n, *_ = world
    out = [("timer",), ("kpm",), ("subscribe",), ("control_ok",), ("control_bad",)]
    if node.phase == IDLE:
        out.append(("connect",))
    else:
        out.append(("disconnect",))
    if n2r:
        out.append(("n2r",))
    if r2n:
        out.append(("r2n",))
    return out




def explore_fsm(depth, start=None):
    """Breadth-first search over all interleavings up to ``depth`` events.

    Raises Violation on the first message delivered to a peer whose phase
    does not accept it. Returns (transitions explored, distinct states that
    reached an established node with a live subscription).
    """
    start = start or (node_state_for(FSM_CONFIG), RicConnState(1), (), (), frozenset(), 0, 1)
    frontier = [start]
    seen = {repr(start[:5])}
    explored = subscribed = 0
    for _ in range(depth):
        nxt = []
        for world in frontier:
            for ev in fsm_enabled(world):
                new = fsm_step(world, ev)
                explored += 1
                key = repr(new[:5])
                if key not in seen:
                    seen.add(key)
                    nxt.append(new)
                    if new[0].phase == ESTABLISHED and new[0].subs:
                        subscribed += 1
        frontier = nxt
    return explored, subscribed


# -- acceptance reporting ---------------------------------------------------------------

ACCEPTANCE_LINES = []


def report(number, checks):
    """Print and record one PASS/FAIL line for criterion ``number``; ``checks`` maps label -> bool."""
    failed = [label for label, ok in checks.items() if not ok]
    line = f"criterion {number}: {'FAIL' if failed else 'PASS'}"
    if failed:
        line += " (" + "; ".join(failed) + ")"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return not failed
