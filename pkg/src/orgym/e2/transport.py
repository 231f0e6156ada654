"""Byte-stream transports for E2-lite.

:class:`LoopbackNetwork` is an in-process, deterministic stand-in for TCP:
bytes written on one end are queued and only delivered when the owner of
the simulated clock calls :meth:`LoopbackNetwork.pump`.
"""
from __future__ import annotations

from collections import deque
from typing import Callable, Optional

DEFAULT_PORT = 36421


class Endpoint:
    def __init__(self, network: "LoopbackNetwork", name: str):
        self.network = network
        self.name = name
        self.peer: Optional[Endpoint] = None
        self.inbox: deque[bytes] = deque()
        self.on_receive: Optional[Callable[[bytes], None]] = None
        self.on_close: Optional[Callable[[], None]] = None
        self.closed = False
        self.bytes_sent = 0

    def send(self, data: bytes) -> None:
        if self.closed or self.peer is None or self.peer.closed:
            return
        self.bytes_sent += len(data)
        self.peer.inbox.append(bytes(data))

    def close(self) -> None:
        if self.closed:
            return
        for end in (self, self.peer):
            if end is None:
                continue
            end.closed = True
            end.inbox.clear()
        for end in (self, self.peer):
            if end is not None and end.on_close is not None:
                end.on_close()


class LoopbackNetwork:
    def __init__(self):
        self._ends: list[Endpoint] = []

    def pipe(self, a: str = "a", b: str = "b") -> tuple[Endpoint, Endpoint]:
        ea, eb = Endpoint(self, a), Endpoint(self, b)
        ea.peer, eb.peer = eb, ea
        self._ends += [ea, eb]
        return ea, eb

    def pump(self, max_rounds: int = 10_000) -> int:
        """Deliver queued bytes until every inbox is empty; returns chunks delivered."""
        delivered = 0
        for _ in range(max_rounds):
            progressed = False
            for end in self._ends:
                while end.inbox and not end.closed:
                    data = end.inbox.popleft()
                    if end.on_receive is not None:
                        end.on_receive(data)
                    delivered += 1
                    progressed = True
            if not progressed:
                return delivered
        raise RuntimeError("loopback did not quiesce")

    def busy(self) -> bool:
        return any(end.inbox for end in self._ends)
