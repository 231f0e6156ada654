"""Run summaries: per-minute slice throughput and RBG share, buffer CDFs,
proportionality residuals and control latencies, computed from a run directory.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ransim.cell import read_kpm_csv

MINUTE_MS = 60_000
CDF_POINTS = 100


def empirical_cdf(values, points: int = CDF_POINTS) -> dict:
    """``points`` quantiles of ``values`` at probabilities 1/points, 2/points, ..., 1."""
    p = np.arange(1, points + 1) / points
    if len(values) == 0:
        return {"p": p.round(6).tolist(), "x": []}
    x = np.quantile(np.asarray(values, dtype=float), p, method="inverted_cdf")
    return {"p": p.round(6).tolist(), "x": [round(float(v), 6) for v in x]}


def _shares(values: dict) -> dict:
    total = sum(values.values())
    return {k: (v / total if total > 0 else 0.0) for k, v in values.items()}


def _residual(thr: dict, rbg: dict) -> float:
    ts, rs = _shares(thr), _shares(rbg)
    return max((abs(ts[k] - rs.get(k, 0.0)) for k in ts), default=0.0)


def _r(x: float) -> float:
    return round(float(x), 6)


@dataclass
class SliceSeries:
    thr_mbps: list = field(default_factory=list)  # per minute, sum over the slice's UEs
    rbg_share: list = field(default_factory=list)  # per minute, fraction of the cell's RBGs
    thr_share: list = field(default_factory=list)  # per minute, fraction of the cell's throughput
    buffer_cdf: dict = field(default_factory=dict)  # per-window slice buffer bytes


@dataclass
class CellSummary:
    minutes: list
    slices: dict[int, SliceSeries]
    residual_per_minute: list
    phases: list


@dataclass
class RunSummary:
    name: str
    duration_ms: int
    cells: dict[str, CellSummary]
    control_latency_ms: list

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "duration_ms": self.duration_ms,
            "control_latency_ms": self.control_latency_ms,
            "cells": {
                bs: {
                    "minutes": c.minutes,
                    "residual_per_minute": c.residual_per_minute,
                    "phases": c.phases,
                    "slices": {str(s): vars(v) for s, v in sorted(c.slices.items())},
                }
                for bs, c in sorted(self.cells.items())
            },
        }


def slice_windows(records) -> dict[int, dict[int, dict[str, float]]]:
    """window ts -> slice id -> summed thr, RBG share and buffer over the slice's UEs."""
    out: dict[int, dict[int, dict[str, float]]] = defaultdict(lambda: defaultdict(lambda: defaultdict(float)))
    for r in records:
        if r.slice_id < 0:
            continue
        agg = out[r.ts_ms][r.slice_id]
        agg["thr"] += r.dl_thr_mbps
        agg["rbg"] += r.rbg_share
        agg["buf"] += r.dl_buffer_bytes
    return out


def _mean_over(windows: dict, keys: list, slice_ids: list, metric: str) -> dict[int, float]:
    return {s: float(np.mean([windows[t][s][metric] for t in keys])) if keys else 0.0 for s in slice_ids}


def phase_boundaries(config: dict, ric_log: list[dict], bs_id: str, node_id: str) -> list[int]:
    """Times (ms) at which the cell's configuration changed."""
    bounds = {int(round(e["at_s"] * 1000)) for e in config.get("events", [])
              if e.get("kind") == "apply_control" and e.get("bs_id") == bs_id}
    bounds |= {int(e["ts_ms"]) for e in ric_log
               if e.get("event") == "control_ack" and e.get("status") == "applied" and e.get("node_id") == node_id}
    return sorted(b for b in bounds if b > 0)


def summarize_cell(records, duration_ms: int, window_ms: int, boundaries: list[int]) -> CellSummary:
    windows = slice_windows(records)
    slice_ids = sorted({s for w in windows.values() for s in w})
    by_minute: dict[int, list] = defaultdict(list)
    for ts in sorted(windows):
        by_minute[(ts - 1) // MINUTE_MS].append(ts)
    minutes = sorted(by_minute)
    slices = {s: SliceSeries() for s in slice_ids}
    residuals = []
    for m in minutes:
        thr = _mean_over(windows, by_minute[m], slice_ids, "thr")
        rbg = _mean_over(windows, by_minute[m], slice_ids, "rbg")
        thr_sh = _shares(thr)
        for s in slice_ids:
            slices[s].thr_mbps.append(_r(thr[s]))
            slices[s].rbg_share.append(_r(rbg[s]))
            slices[s].thr_share.append(_r(thr_sh[s]))
        residuals.append(_r(_residual(thr, rbg)))
    for s in slice_ids:
        slices[s].buffer_cdf = empirical_cdf([windows[t][s]["buf"] for t in sorted(windows)])

    # phases: windows lying wholly between two configuration changes
    edges = [0, *boundaries, duration_ms]
    phases = []
    for start, end in zip(edges, edges[1:]):
        keys = [t for t in sorted(windows) if t - window_ms >= start and t <= end]
        if not keys:
            continue
        thr = _mean_over(windows, keys, slice_ids, "thr")
        rbg = _mean_over(windows, keys, slice_ids, "rbg")
        phases.append({
            "start_ms": start,
            "end_ms": end,
            "thr_mbps": {str(s): _r(thr[s]) for s in slice_ids},
            "thr_share": {str(s): _r(v) for s, v in _shares(thr).items()},
            "rbg_share": {str(s): _r(rbg[s]) for s in slice_ids},
            "residual": _r(_residual(thr, rbg)),
        })
    return CellSummary(minutes, slices, residuals, phases)


def control_latencies(ric_log: list[dict]) -> list[int]:
    """Control request to ack, in simulated ms, per acknowledged transaction."""
    sent = {e["transaction_id"]: e["ts_ms"] for e in ric_log if e.get("event") == "control"}
    return [e["ts_ms"] - sent[e["transaction_id"]] for e in ric_log
            if e.get("event") == "control_ack" and e.get("transaction_id") in sent]


def read_ric_log(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def export_summary(run_dir: str | Path) -> RunSummary:
    """Summarize a run directory; writes ``summary.json`` and ``summary_minutes.csv``."""
    run_dir = Path(run_dir)
    config = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
    ric_log = read_ric_log(run_dir / "ric.log.jsonl")
    duration_ms = int(round(config["duration_s"] * 1000))
    cells = {}
    for cell in config["cells"]:
        bs = cell["bs-id"]
        with open(run_dir / "kpm" / f"{bs}.csv", newline="", encoding="utf-8") as fh:
            records = read_kpm_csv(fh)
        bounds = phase_boundaries(config, ric_log, bs, cell["node-id"])
        cells[bs] = summarize_cell(records, duration_ms, int(cell["kpm-window-ms"]), bounds)
    summary = RunSummary(config.get("name", ""), duration_ms, cells, control_latencies(ric_log))
    (run_dir / "summary.json").write_text(json.dumps(summary.to_json(), indent=1, sort_keys=True) + "\n",
                                          encoding="utf-8")
    with open(run_dir / "summary_minutes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bs_id", "minute", "slice_id", "thr_mbps", "thr_share", "rbg_share"])
        for bs, c in sorted(cells.items()):
            for i, m in enumerate(c.minutes):
                for s, series in sorted(c.slices.items()):
                    w.writerow([bs, m, s, f"{series.thr_mbps[i]:.6f}", f"{series.thr_share[i]:.6f}",
                                f"{series.rbg_share[i]:.6f}"])
    return summary
