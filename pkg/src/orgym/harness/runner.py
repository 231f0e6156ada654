"""Runs an :class:`ExperimentPlan` end to end and writes a run directory.

In the default deterministic mode the harness owns the simulated clock. Each
TTI it fires due timeline events, steps every cell, hands closed KPM windows
to the nodes, advances node and RIC timers, pumps the loopback network and
ticks the xApps. With ``net=True`` nodes reach the RIC over real TCP sockets
and message delivery is left to the OS.
"""
from __future__ import annotations

import json
import logging
import platform
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .. import __version__
from ..agent.policies import ConstantPolicy, PPOPolicy, UniformRandomPolicy
from ..e2.node import E2Node
from ..e2.transport import LoopbackNetwork
from ..ransim.cell import CellState, ControlDirective, write_kpm_csv
from ..ric.core import NearRtRic
from ..ric.server import RicServer
from ..xapp.apps import PrioritizeXApp, sched_slicing_xapp, sched_xapp
from ..xapp.connector import XApp
from .plans import ExperimentPlan

log = logging.getLogger(__name__)


class ComponentCrash(RuntimeError):
    def __init__(self, component: str, cause: BaseException):
        super().__init__(f"{component} crashed: {type(cause).__name__}: {cause}")
        self.component = component
        self.cause = cause


@dataclass
class RunResult:
    run_dir: Path
    plan: ExperimentPlan
    cells: dict[str, CellState]
    xapps: dict[str, XApp]
    ric: NearRtRic
    ric_log: list[dict] = field(default_factory=list)
    wall_s: float = 0.0


def build_model(spec: Optional[dict]):
    spec = spec or {"kind": "none"}
    kind = spec.get("kind", "none")
    if kind == "none":
        return None
    if kind == "constant":
        return ConstantPolicy(int(spec.get("action", 0)))
    if kind == "random":
        return UniformRandomPolicy(int(spec["n_actions"]), int(spec.get("seed", 0))).fit()
    if kind == "checkpoint":
        return PPOPolicy.load(spec["path"])
    raise ValueError(f"unknown model kind {kind!r}")


def build_xapp(name: str, spec: dict, plan: ExperimentPlan) -> XApp:
    bs_ids = spec.get("bs_ids", [c.bs_id for c in plan.cells])
    node_ids = [plan.cell(b).node_id for b in bs_ids]
    period = int(spec.get("report_period_ms", 250))
    kind = spec["kind"]
    if kind == "prioritize":
        return PrioritizeXApp(node_ids, int(spec["target_slice"]), float(spec["boost_share"]), name, period)
    factory = sched_xapp if kind == "sched" else sched_slicing_xapp
    return factory(
        build_model(spec.get("model")), node_ids, name, period,
        n_windows=int(spec.get("n_windows", 4)), epoch_periods=int(spec.get("epoch_periods", 4)),
    )


class _SerializedXApp:
    """Routes RIC callbacks through a lock shared with the harness (TCP mode)."""

    def __init__(self, xapp: XApp, lock: threading.Lock):
        self.xapp, self.lock = xapp, lock

    def on_indication(self, sub_id, body):
        with self.lock:
            self.xapp.on_indication(sub_id, body)

    def on_subscription_response(self, sub_id, status, reason):
        with self.lock:
            self.xapp.on_subscription_response(sub_id, status, reason)

    def on_control_ack(self, pending):
        with self.lock:
            self.xapp.on_control_ack(pending)


class _TcpLink:
    """Client side of one node's TCP connection; received bytes queue for the harness."""

    def __init__(self, address: tuple[str, int]):
        self.sock = socket.create_connection(address, timeout=5)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock.settimeout(None)
        self.inbox: queue.Queue[bytes] = queue.Queue()
        self._reader = threading.Thread(target=self._read, daemon=True)
        self._reader.start()

    def _read(self):
        try:
            while True:
                data = self.sock.recv(65536)
                if not data:
                    break
                self.inbox.put(data)
        except OSError:
            pass

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError:
            pass

    def drain(self, node: E2Node) -> None:
        while True:
            try:
                data = self.inbox.get_nowait()
            except queue.Empty:
                return
            node.receive(data)

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
        self._reader.join(timeout=2)


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(plan: ExperimentPlan, out_dir: str | Path | None = None, seed: Optional[int] = None,
                   net: bool = False, port: int = 0, summarize: bool = True,
                   settle_s: float = 0.5) -> RunResult:
    """Execute ``plan`` and write its run directory; returns the in-memory components too.

    Raises ComponentCrash (partial outputs retained, ``meta.json`` records the
    failure) if any component raises during the run.
    """
    if seed is not None:
        plan = plan.with_seed(seed)
    run_dir = Path(out_dir or plan.output_dir or f"runs/{plan.name}-seed{plan.seed}")
    (run_dir / "kpm").mkdir(parents=True, exist_ok=True)
    (run_dir / "xapp").mkdir(exist_ok=True)
    _write_json(run_dir / "config.json", plan.to_json())

    ric_log: list[dict] = []
    ric_log_fh = open(run_dir / "ric.log.jsonl", "w", encoding="utf-8")

    def sink(entry: dict) -> None:
        ric_log.append(entry)
        ric_log_fh.write(json.dumps(entry, sort_keys=True) + "\n")

    ric = NearRtRic(log_sink=sink)
    cells = {cfg.bs_id: CellState(cfg) for cfg in plan.cells}
    nodes = {bs: E2Node(cell) for bs, cell in cells.items()}
    kpm_fhs = {bs: open(run_dir / "kpm" / f"{bs}.csv", "w", newline="", encoding="utf-8") for bs in cells}
    for fh in kpm_fhs.values():
        write_kpm_csv([], fh)
    xapps = {name: build_xapp(name, spec, plan) for name, spec in plan.xapps.items()}
    result = RunResult(run_dir, plan, cells, xapps, ric, ric_log)

    lock = threading.Lock()
    network = LoopbackNetwork()
    server: Optional[RicServer] = None
    links: dict[str, _TcpLink] = {}
    started: list[str] = []
    component = "harness"
    wall0 = time.perf_counter()
    error: Optional[ComponentCrash] = None
    tti_ms = plan.cells[0].tti_ms
    if any(c.tti_ms != tti_ms for c in plan.cells):
        raise ValueError("all cells must share one tti-ms")

    def pump() -> None:
        if net:
            for bs, link in links.items():
                link.drain(nodes[bs])
        else:
            network.pump()

    try:
        component = "ric"
        if net:
            server = RicServer(ric, port=port).start()
        for bs, node in nodes.items():
            component = f"node:{bs}"
            if net:
                links[bs] = _TcpLink(server.address)
                node.connect(links[bs].send, now_ms=0)
            else:
                a, b = network.pipe(bs, "ric")
                conn_id = ric.accept(b.send)
                b.on_receive = lambda data, c=conn_id: ric.receive(c, data)
                b.on_close = lambda c=conn_id: ric.disconnect(c)
                a.on_receive = node.receive
                node.connect(a.send, now_ms=0)
        if net:
            deadline = time.monotonic() + 5
            while len(ric.list_nodes()) < len(nodes) and time.monotonic() < deadline:
                pump()
                time.sleep(0.001)
        pump()

        events = list(plan.events)
        ei = 0
        total = plan.duration_ms // tti_ms
        for k in range(total):
            now = k * tti_ms
            while ei < len(events) and events[ei].at_ms <= now:
                ev = events[ei]
                ei += 1
                component = f"timeline@{ev.at_ms}"
                if ev.kind == "apply_control":
                    cell = cells[ev.bs_id]
                    cell.apply_control(ControlDirective(cell.config.node_id, ev.slice_allocation,
                                                        ev.slice_scheduling_policy))
                    sink({"ts_ms": now, "event": "timeline_control", "bs_id": ev.bs_id,
                          "status": cell.control_log[-1]["status"]})
                elif ev.kind == "start_xapp":
                    xapp = xapps[ev.xapp]
                    handler = _SerializedXApp(xapp, lock) if net else xapp
                    xapp.ric = ric
                    ric.register_xapp(xapp.xapp_id, handler)
                    with lock:
                        xapp.start(now)
                    started.append(ev.xapp)
                    pump()
                elif ev.kind == "stop_xapp":
                    ric.unregister_xapp(ev.xapp)
                    started.remove(ev.xapp)
            after = now + tti_ms
            for bs, cell in cells.items():
                component = f"cell:{bs}"
                cell.step()
                if cell.window_due():
                    records = cell.emit_kpm_window()
                    write_kpm_csv(records, kpm_fhs[bs], header=False)
                    nodes[bs].kpm_window(records, after)
            component = "ric"
            ric.tick(after)
            for bs, node in nodes.items():
                component = f"node:{bs}"
                node.tick(after)
            component = "transport"
            pump()
            for name in started:
                component = f"xapp:{name}"
                with lock:
                    xapps[name].tick(after)
            pump()
            if net:
                time.sleep(0)  # yield to the socket threads
        end_ms = total * tti_ms
        for bs, cell in cells.items():
            # a run that does not end on a window boundary closes a short last window
            if cell.window_open:
                component = f"cell:{bs}"
                records = cell.emit_kpm_window()
                write_kpm_csv(records, kpm_fhs[bs], header=False)
                nodes[bs].kpm_window(records, end_ms)
        if net:
            # let in-flight messages land before tearing down
            end = time.monotonic() + settle_s
            while time.monotonic() < end:
                pump()
                time.sleep(0.005)
    except Exception as exc:  # noqa: BLE001 - reported as a component crash
        error = ComponentCrash(component, exc)
        log.error("%s", error)
    finally:
        for node in nodes.values():
            if node.established:
                node.disconnect()
        for link in links.values():
            link.close()
        if server is not None:
            server.stop()
        for fh in kpm_fhs.values():
            fh.close()
        for name, xapp in xapps.items():
            xapp.write_log(run_dir / "xapp" / f"{name}.csv")
        ric_log_fh.close()
        result.wall_s = time.perf_counter() - wall0
        meta = {
            "version": __version__,
            "python": platform.python_version(),
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "wall_s": round(result.wall_s, 3),
            "transport": "tcp" if net else "loopback",
            "status": "crashed" if error else "ok",
        }
        if error:
            meta["error"] = str(error)
        _write_json(run_dir / "meta.json", meta)
    if error:
        raise error
    if summarize:
        from .summary import export_summary

        export_summary(run_dir)
    return result
