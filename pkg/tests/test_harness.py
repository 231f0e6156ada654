import csv
import json
import math
import time

import numpy as np
import pytest

from orgym.harness import (
    CATALOG,
    ComponentCrash,
    SchemaMismatch,
    TimelineConflict,
    build_prioritization_plan,
    build_stairs_plan,
    build_v_plan,
    empirical_cdf,
    export_summary,
    iter_indications,
    plan_from_dict,
    read_dataset,
    replay_dataset,
    run_experiment,
    split_rbgs,
)
from orgym.harness.runner import build_xapp
from orgym.ransim.cell import CellState, KpmRecord

NODE = "gnb:311-048-01000501"


def cell(window=100, slicing=True, **extra):
    base = {
        "network-slicing": slicing,
        "slice-allocation": {"0": [0, 8], "1": [9, 16]},
        "slice-users": {"0": [0, 1], "1": [2, 3]},
        "ues": [{"id": 0, "efficiency": 2000}, {"id": 1, "efficiency": 1200},
                {"id": 2, "efficiency": 2000, "rate-bps": 4_000_000}, {"id": 3, "efficiency": 900}],
        "kpm-window-ms": window,
        "bs-id": "bs0",
        "node-id": NODE,
    }
    base.update(extra)
    return base


def sched_plan(duration_s=12, start_s=2.0, model=None, seed=0, kind="sched-slicing"):
    return plan_from_dict({
        "name": "sched",
        "duration_s": duration_s,
        "seed": seed,
        "cells": [cell(window=50)],
        "xapps": {"agent": {"kind": kind, "report_period_ms": 250, "epoch_periods": 2, "n_windows": 4,
                            "model": model or {"kind": "random", "n_actions": 72, "seed": 3}}},
        "events": [{"at_s": start_s, "kind": "start_xapp", "xapp": "agent"}],
    })


def kpm_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- plans ------------------------------------------------------------------------------


def test_split_rbgs_rounding():
    assert split_rbgs(0.75) == (13, 4)
    assert split_rbgs(0.5) == (9, 8)
    assert split_rbgs(0.25) == (4, 13)


def _phase_tables(plan):
    tables = [plan.cells[0].slice_allocation]
    tables += [ev.slice_allocation for ev in plan.events if ev.kind == "apply_control"]
    return [{s: b - a + 1 for s, (a, b) in t.items()} for t in tables]


def test_stairs_plan_phases():
    plan = build_stairs_plan()
    assert [ev.at_ms for ev in plan.events] == [60_000, 120_000]
    assert _phase_tables(plan) == [{0: 13, 1: 4}, {0: 9, 1: 8}, {0: 4, 1: 13}]
    assert plan.duration_ms == 180_000
    assert all(u.saturated for u in plan.cells[0].ues)


def test_v_plan_phases():
    plan = build_v_plan()
    tables = _phase_tables(plan)
    assert tables[1] == {0: 4, 1: 13}
    assert round(tables[1][0] / 17, 2) == 0.24  # 25% rounded to whole RBGs
    for t in tables:
        assert sum(t.values()) == 17


def test_prioritization_plan_timeline():
    plan = build_prioritization_plan()
    (ev,) = plan.events
    assert (ev.at_ms, ev.kind, ev.xapp) == (150_000, "start_xapp", "prioritize")
    sizes = {s: b - a + 1 for s, (a, b) in plan.cells[0].slice_allocation.items()}
    assert sizes == {0: 5, 1: 5, 2: 5}
    assert plan.xapps["prioritize"]["target_slice"] == 0


def test_catalog_names():
    assert set(CATALOG) == {"stairs", "v", "prioritize"}


@pytest.mark.parametrize("mutate", [
    lambda p: p["events"].append({"at_s": 1, "kind": "apply_control", "slice_allocation": {"5": [0, 3]}}),
    lambda p: p["events"].extend([{"at_s": 5, "kind": "apply_control", "slice_scheduling_policy": [1, 1]},
                                  {"at_s": 3, "kind": "apply_control", "slice_scheduling_policy": [2, 2]}]),
    lambda p: p["events"].append({"at_s": 99, "kind": "apply_control", "slice_scheduling_policy": [1, 1]}),
    lambda p: p["events"].append({"at_s": 1, "kind": "start_xapp", "xapp": "ghost"}),
    lambda p: p.update(xapps={"pr": {"kind": "prioritize", "target_slice": 7, "boost_share": 0.6}}),
    lambda p: p["events"].append({"at_s": 1, "kind": "explode"}),
    lambda p: p["events"].append({"at_s": 1, "kind": "apply_control",
                                  "slice_allocation": {"0": [0, 9], "1": [9, 16]}}),
])
def test_timeline_conflicts(mutate):
    raw = {"name": "x", "duration_s": 10, "cells": [cell()], "events": []}
    mutate(raw)
    with pytest.raises(TimelineConflict):
        plan_from_dict(raw)


def test_plan_json_round_trip():
    plan = build_prioritization_plan(seed=4)
    again = plan_from_dict(json.loads(plan.dumps()))
    assert again.to_json() == plan.to_json()


# -- runs -------------------------------------------------------------------------------


def test_empty_timeline_window_count(tmp_path):
    plan = plan_from_dict({"name": "idle", "duration_s": 10, "cells": [cell(window=30)]})
    run_experiment(plan, tmp_path / "run")
    rows = kpm_rows(tmp_path / "run" / "kpm" / "bs0.csv")
    per_ue = {}
    for r in rows:
        per_ue[r["ue_id"]] = per_ue.get(r["ue_id"], 0) + 1
    assert per_ue == {str(u): math.ceil(10_000 / 30) for u in range(4)}
    assert rows[-1]["ts_ms"] == "10000"
    for name in ("config.json", "ric.log.jsonl", "summary.json", "meta.json", "summary_minutes.csv"):
        assert (tmp_path / "run" / name).exists()
    meta = json.loads((tmp_path / "run" / "meta.json").read_text())
    assert meta["status"] == "ok" and meta["transport"] == "loopback"


@pytest.fixture(scope="module")
def sched_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("sched")
    return [run_experiment(sched_plan(), base / f"r{i}") for i in range(2)]


def test_runs_are_byte_identical(sched_runs):
    a, b = (r.run_dir for r in sched_runs)
    files = ["config.json", "kpm/bs0.csv", "xapp/agent.csv", "ric.log.jsonl", "summary.json",
             "summary_minutes.csv"]
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert len(sched_runs[0].xapps["agent"].decisions) > 5


def test_xapp_log_and_controls(sched_runs):
    run = sched_runs[0]
    rows = list(csv.reader(open(run.run_dir / "xapp" / "agent.csv")))
    assert rows[0][:2] == ["epoch", "ts_ms"] and rows[0][-2:] == ["action_id", "ack_status"]
    assert len(rows[0]) == 2 + 6 + 2
    assert {r[-1] for r in rows[1:]} == {"applied"}
    summary = json.loads((run.run_dir / "summary.json").read_text())
    assert summary["control_latency_ms"] and max(summary["control_latency_ms"]) <= 250


def test_single_slice_summary(tmp_path):
    plan = plan_from_dict({"name": "one", "duration_s": 3, "cells": [cell(slicing=False)]})
    run_experiment(plan, tmp_path / "run")
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    sl = summary["cells"]["bs0"]["slices"]
    assert list(sl) == ["0"]
    assert sl["0"]["thr_share"] == [1.0]
    assert all(ph["thr_share"] == {"0": 1.0} for ph in summary["cells"]["bs0"]["phases"])


def test_empirical_cdf():
    const = empirical_cdf([7.0] * 40)
    assert const["x"] == [7.0] * 100
    assert const["p"][0] == 0.01 and const["p"][-1] == 1.0
    rng = np.random.default_rng(0)
    cdf = empirical_cdf(rng.exponential(size=500))
    assert all(x <= y for x, y in zip(cdf["x"], cdf["x"][1:]))
    assert all(0 < p <= 1 for p in cdf["p"])
    assert empirical_cdf([1.0, 2.0], 4)["x"] == [1.0, 1.0, 2.0, 2.0]


def test_summary_phases_follow_controls(tmp_path):
    plan = plan_from_dict({"name": "two", "duration_s": 4, "cells": [cell(ues=[{"id": u} for u in range(4)])],
                           "events": [{"at_s": 2, "kind": "apply_control",
                                       "slice_allocation": {"0": [0, 3], "1": [4, 16]}}]})
    run_experiment(plan, tmp_path / "run")
    phases = json.loads((tmp_path / "run" / "summary.json").read_text())["cells"]["bs0"]["phases"]
    assert [(p["start_ms"], p["end_ms"]) for p in phases] == [(0, 2000), (2000, 4000)]
    assert phases[1]["rbg_share"]["0"] == pytest.approx(4 / 17, abs=1e-6)
    assert all(p["residual"] <= 0.01 for p in phases)


def test_component_crash_keeps_partial_output(tmp_path, monkeypatch):
    real = CellState.step

    def failing(self):
        if self.tti >= 500:
            raise RuntimeError("radio on fire")
        return real(self)

    monkeypatch.setattr(CellState, "step", failing)
    plan = plan_from_dict({"name": "crash", "duration_s": 2, "cells": [cell()]})
    with pytest.raises(ComponentCrash) as info:
        run_experiment(plan, tmp_path / "run")
    assert info.value.component == "cell:bs0"
    meta = json.loads((tmp_path / "run" / "meta.json").read_text())
    assert meta["status"] == "crashed" and "radio on fire" in meta["error"]
    rows = kpm_rows(tmp_path / "run" / "kpm" / "bs0.csv")
    assert rows and int(rows[-1]["ts_ms"]) == 500


def test_tcp_mode_run(tmp_path):
    plan = sched_plan(duration_s=4, start_s=1.0, model={"kind": "constant", "action": 10})
    result = run_experiment(plan, tmp_path / "run", net=True, port=0)
    meta = json.loads((tmp_path / "run" / "meta.json").read_text())
    assert meta["transport"] == "tcp" and meta["status"] == "ok"
    decisions = result.xapps["agent"].decisions
    assert decisions and decisions[0].ack_status == "applied"
    assert result.cells["bs0"].current_table()[0] == {0: (0, 3), 1: (4, 16)}


# -- replay ------------------------------------------------------------------------------


def test_replay_matches_live_features(sched_runs):
    run = sched_runs[0]
    live = run.xapps["agent"].feature_trace
    fresh = build_xapp("agent", run.plan.xapps["agent"], run.plan)
    n = replay_dataset([run.run_dir / "kpm" / "bs0.csv"], fresh, period_ms=250, start_ms=2000)
    assert n == 40
    assert len(fresh.feature_trace) == len(live) > 0
    for (n1, t1, f1), (n2, t2, f2) in zip(live, fresh.feature_trace):
        assert (n1, t1) == (n2, t2)
        assert np.array_equal(f1, f2)
    assert [d.action_id for d in fresh.decisions] == [d.action_id for d in run.xapps["agent"].decisions]


def test_iter_indications_batches_like_a_node():
    recs = [KpmRecord(ts, "bs0", 0, 0, 0, 0, 0, 0.0, 0.0, 0) for ts in range(50, 1001, 50)]
    bodies = list(iter_indications(recs, 250))
    assert [b["ts_ms"] for b in bodies] == [250, 500, 750, 1000]
    assert [len(b["records"]) for b in bodies] == [5, 5, 5, 5]
    assert [b["seq"] for b in bodies] == [0, 1, 2, 3]
    tail = list(iter_indications(recs[:-2], 250, flush=True))
    assert [len(b["records"]) for b in tail] == [5, 5, 5, 3]
    assert len(list(iter_indications(recs[:-2], 250))) == 3


def test_replay_speed(sched_runs):
    path = sched_runs[0].run_dir / "kpm" / "bs0.csv"
    got = []
    t0 = time.perf_counter()
    n = replay_dataset([path], got.append, speed=10.0, period_ms=250, start_ms=9000)
    wall = time.perf_counter() - t0
    assert n == 12
    assert 0.3 * 0.8 <= wall <= 0.3 * 1.2
    unpaced = []
    replay_dataset([path], unpaced.append, period_ms=250, start_ms=9000)
    assert unpaced == got


def test_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("ts_ms,bs_id,slice_id\n1,bs0,0\n")
    with pytest.raises(SchemaMismatch):
        read_dataset([bad])
    with pytest.raises(SchemaMismatch):
        replay_dataset([bad], lambda body: None)


def test_export_summary_is_idempotent(sched_runs):
    run_dir = sched_runs[1].run_dir
    before = (run_dir / "summary.json").read_bytes()
    export_summary(run_dir)
    assert (run_dir / "summary.json").read_bytes() == before
