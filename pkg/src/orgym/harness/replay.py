"""Replay recorded KPM CSVs as synthetic RIC indications.

Windows are batched exactly as a live node would: an indication at each
report-period boundary after ``start_ms`` carries every window that closed
since the previous one, in file order.
"""
from __future__ import annotations

import csv
import json
import time
from collections import defaultdict
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence

from ..e2.fsm import IDENTITY_COLUMNS
from ..ransim.cell import KPM_COLUMNS, KpmRecord


class SchemaMismatch(ValueError):
    pass


def read_dataset(paths: Sequence[str | Path]) -> list[KpmRecord]:
    """Read KPM CSVs, enforcing the exact header; records keep file order."""
    out: list[KpmRecord] = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != tuple(KPM_COLUMNS):
                raise SchemaMismatch(f"{path}: header {header} != {list(KPM_COLUMNS)}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(KPM_COLUMNS):
                    raise SchemaMismatch(f"{path}:{lineno}: expected {len(KPM_COLUMNS)} fields, got {len(row)}")
                try:
                    out.append(KpmRecord.from_dict(dict(zip(KPM_COLUMNS, row))))
                except (TypeError, ValueError) as exc:
                    raise SchemaMismatch(f"{path}:{lineno}: {exc}") from None
    return out


def run_dir_geometry(paths: Sequence[str | Path]) -> dict[str, dict]:
    """bs_id -> {node_id, slice_ids, rbg_count, kpm_window_ms} from an enclosing run's config.json."""
    geometry: dict[str, dict] = {}
    for path in paths:
        config_path = Path(path).resolve().parent.parent / "config.json"
        if not config_path.exists():
            continue
        for cell in json.loads(config_path.read_text(encoding="utf-8")).get("cells", []):
            geometry[cell["bs-id"]] = {
                "node_id": cell["node-id"],
                "slice_ids": sorted(int(s) for s in cell["slice-allocation"]),
                "rbg_count": int(cell["rbg-count"]),
                "kpm_window_ms": int(cell["kpm-window-ms"]),
            }
    return geometry


def _project(row: dict, metric_set: tuple) -> dict:
    if not metric_set:
        return row
    return {k: row[k] for k in (*IDENTITY_COLUMNS, *metric_set) if k in row}


def iter_indications(
    records: Iterable[KpmRecord],
    period_ms: int,
    start_ms: int = 0,
    node_ids: Optional[dict[str, str]] = None,
    metric_set: tuple = (),
    flush: bool = False,
    first_sub_id: int = 1,
) -> Iterator[dict]:
    """Indication bodies in time order (base stations interleaved by due time).

    Windows closing at or before ``start_ms`` are skipped. A trailing partial
    batch is only emitted when ``flush`` is set.
    """
    if period_ms <= 0:
        raise ValueError("period_ms must be positive")
    node_ids = node_ids or {}
    per_bs: dict[str, list[KpmRecord]] = defaultdict(list)
    for r in records:
        if r.ts_ms > start_ms:
            per_bs[r.bs_id].append(r)
    bs_order = list(per_bs)
    batches = []  # (due, bs index, records)
    for i, bs in enumerate(bs_order):
        rows = per_bs[bs]
        last_ts = max(r.ts_ms for r in rows)
        due = start_ms + period_ms
        pending: list[dict] = []
        k = 0
        while k < len(rows) or pending:
            while k < len(rows) and rows[k].ts_ms <= due:
                pending.append(_project(rows[k].to_dict(), metric_set))
                k += 1
            if due > last_ts:
                if flush and pending:
                    batches.append((due, i, pending))
                break
            batches.append((due, i, pending))
            pending = []
            due += period_ms
    seq: dict[int, int] = defaultdict(int)
    for due, i, rows in sorted(batches, key=lambda b: (b[0], b[1])):
        bs = bs_order[i]
        yield {
            "sub_id": first_sub_id + i,
            "node_id": node_ids.get(bs, bs),
            "seq": seq[i],
            "ts_ms": due,
            "records": rows,
        }
        seq[i] += 1


def replay_dataset(
    csv_paths: Sequence[str | Path],
    sink,
    speed: Optional[float] = None,
    period_ms: int = 250,
    start_ms: int = 0,
    metric_set: tuple = (),
    flush: bool = False,
    geometry: Optional[dict[str, dict]] = None,
) -> int:
    """Push recorded windows into ``sink``; returns the number of indications.

    ``sink`` is an xApp (anything with ``on_indication(sub_id, body)``) or a
    plain callable taking the body. ``speed`` paces delivery against the
    wall clock (1.0 = real time, 10.0 = ten times faster, None = no pacing).
    """
    records = read_dataset(csv_paths)
    geometry = geometry if geometry is not None else run_dir_geometry(csv_paths)
    node_ids = {bs: g["node_id"] for bs, g in geometry.items()}
    deliver: Callable[[dict], None]
    bodies = iter_indications(records, period_ms, start_ms, node_ids, metric_set, flush)
    if hasattr(sink, "on_indication"):
        bs_ids = list(dict.fromkeys(r.bs_id for r in records if r.ts_ms > start_ms))
        for i, bs in enumerate(bs_ids):
            node_id = node_ids.get(bs, bs)
            g = geometry.get(bs, {})
            slice_ids = g.get("slice_ids") or sorted({r.slice_id for r in records if r.bs_id == bs and r.slice_id >= 0})
            sink.prepare(node_id, slice_ids, g.get("rbg_count", 17))
            sink.node_subs[node_id] = 1 + i
            sink.sub_nodes[1 + i] = node_id

        def deliver(body):
            sink.on_indication(body["sub_id"], body)
    else:
        deliver = sink
    count = 0
    t0 = time.perf_counter()
    for body in bodies:
        if speed:
            # an indication due at ts arrives (ts - start) / speed after the replay begins
            target = (body["ts_ms"] - start_ms) / 1000.0 / speed
            delay = target - (time.perf_counter() - t0)
            if delay > 0:
                time.sleep(delay)
        deliver(body)
        count += 1
    return count
