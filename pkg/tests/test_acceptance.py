"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also repeated in
the terminal summary) before asserting, so a failing criterion still reports.
"""
import random
import time

import numpy as np
import pytest
from scipy import stats

from orgym.agent import ConstantPolicy, PPOPolicy, SlicingEnv, frozen_scenario, oracle_policy
from orgym.agent.env import random_policy_mean_reward, rollout_mean_reward
from orgym.e2.codec import decode_frame, encode_frame
from orgym.harness import CATALOG, export_summary, replay_dataset, run_experiment
from orgym.harness.runner import build_xapp
from orgym.harness.summary import slice_windows
from orgym.ransim import CellState, SliceState, UeState, allocate_slice, config_from_dict, read_kpm_csv, run_cell
from orgym.xapp import sched_action_space, sched_slicing_action_space, sched_xapp

from helpers import Bench, explore_fsm, fuzz_decoder, gradient_check, node_id, random_message, report
from test_harness import sched_plan

pytestmark = pytest.mark.slow


def within(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b))


@pytest.fixture(scope="module")
def catalog_runs(tmp_path_factory):
    """Each catalog plan run twice with seed 0."""
    runs = {}
    for name, build in CATALOG.items():
        runs[name] = [run_experiment(build(), tmp_path_factory.mktemp(f"{name}{k}"), seed=0) for k in range(2)]
    return runs


def minute_series(run):
    summary = export_summary(run.run_dir)
    cell = summary.cells["bs0"]
    return cell, [cell.slices[s].thr_mbps for s in sorted(cell.slices)]


def kpm_records(run):
    with open(run.run_dir / "kpm" / "bs0.csv", newline="") as fh:
        return read_kpm_csv(fh)


# -- 1, 2: slicing tracks RBG shares ------------------------------------------------------


def test_criterion_1_stairs(catalog_runs):
    run = catalog_runs["stairs"][0]
    cell, (a, b) = minute_series(run)
    ok = report(1, {
        f"three minutes (got {len(cell.minutes)})": len(cell.minutes) == 3,
        f"residual <= 0.10 every minute {cell.residual_per_minute}": max(cell.residual_per_minute) <= 0.10,
        f"A strictly decreasing {a}": a[0] > a[1] > a[2],
        f"B strictly increasing {b}": b[0] < b[1] < b[2],
        f"wall {run.wall_s:.1f}s <= 30s": run.wall_s <= 30.0,
    })
    assert ok


def test_criterion_2_v(catalog_runs):
    cell, (a, _) = minute_series(catalog_runs["v"][0])
    ok = report(2, {
        f"residual <= 0.10 every minute {cell.residual_per_minute}": max(cell.residual_per_minute) <= 0.10,
        f"A minimum at minute 2 {a}": a[1] < a[0] and a[1] < a[2],
        f"A minutes 1 and 3 within 10% {a}": within(a[0], a[2], 0.10),
    })
    assert ok


# -- 3: prioritization xApp ------------------------------------------------------------------


def test_criterion_3_prioritize(catalog_runs):
    run = catalog_runs["prioritize"][0]
    plan = run.plan
    window = plan.cells[0].kpm_window_ms
    period = plan.xapps["prioritize"]["report_period_ms"]
    start_ms = int(plan.events[0].at_ms)
    xapp = run.xapps["prioritize"]
    decided = xapp.decided_at
    acks = [e for e in run.ric_log if e["event"] == "control_ack" and e["status"] == "applied"]
    applied = acks[0]["ts_ms"] if acks else None

    windows = slice_windows(kpm_records(run))
    slices = sorted(next(iter(windows.values())))

    def mean_thr(keys):
        return {s: float(np.mean([windows[t][s]["thr"] for t in keys])) for s in slices}

    pre = mean_thr([t for t in windows if t <= start_ms])
    post = mean_thr([t for t in windows if applied is not None and t - window >= applied])
    # the first KPM window whose RBG share for slice 0 reflects the new allocation
    before = windows[start_ms][0]["rbg"]
    changed = [t for t in sorted(windows) if t > start_ms and abs(windows[t][0]["rbg"] - before) > 1e-9]
    observed = changed[0] if changed else None
    ok = report(3, {
        f"pre-control slices within 10% {pre}": (max(pre.values()) - min(pre.values())) <= 0.10 * max(pre.values()),
        "a control was applied": applied is not None,
        f"A strictly greatest after control {post}": all(post[0] > post[s] for s in slices if s != 0),
        f"A >= 1.5x pre-control ({post[0]:.2f} vs {pre[0]:.2f})": post[0] >= 1.5 * pre[0],
        "other slices decrease": all(post[s] < pre[s] for s in slices if s != 0),
        f"ack within 2 periods (decided {decided}, applied {applied})":
            applied is not None and decided is not None and applied - decided <= 2 * period,
        f"applied allocation visible in KPM within 2 periods (at {observed})":
            observed is not None and observed - decided <= 2 * period,
    })
    assert ok


# -- 4: joint action space dominates -------------------------------------------------------


def test_criterion_4_action_space_dominance():
    t0 = time.perf_counter()
    scenario = frozen_scenario()
    joint = oracle_policy(scenario, sched_slicing_action_space(scenario.cell.config.slice_ids, 17))
    sched = oracle_policy(scenario, sched_action_space(scenario.cell.config.slice_ids, 17))
    wall = time.perf_counter() - t0
    j, s = joint.best_action, sched.best_action
    ok = report(4, {
        f"joint max {joint.best_value:.4f} >= sched max {sched.best_value:.4f}": joint.best_value >= sched.best_value,
        f"joint TBs {joint.tbs[j]:.2f} >= sched TBs {sched.tbs[s]:.2f}": joint.tbs[j] >= sched.tbs[s],
        f"joint buffer {joint.buffer[j]:.0f} <= sched buffer {sched.buffer[s]:.0f}": joint.buffer[j] <= sched.buffer[s],
        f"wall {wall:.1f}s <= 300s": wall <= 300.0,
    })
    assert ok


# -- 5: protocol ------------------------------------------------------------------------------


def test_criterion_5_protocol():
    rng = random.Random(20)
    mismatches = 0
    for _ in range(10_000):
        msg = random_message(rng)
        frame = encode_frame(msg)
        back = decode_frame(frame)
        mismatches += back != msg or encode_frame(back) != frame
    outcomes = fuzz_decoder(100_000, seed=99)
    explored, subscribed = explore_fsm(6)  # raises on an illegal send

    b = Bench(1, window=10)
    x = b.start(sched_xapp(ConstantPolicy(-1), [node_id(0)], report_period_ms=100))
    b.run(100)
    first = x.first_indication_at.get(node_id(0))
    ok = report(5, {
        f"1e4 round trips exact ({mismatches} mismatches)": mismatches == 0,
        "1e5 fuzzed frames without a crash": outcomes["msg"] + outcomes["err"] == 100_000,
        f"depth-6 enumeration clean ({explored} transitions)": explored > 0 and subscribed > 0,
        f"first indication at {first} <= one period": first is not None and first <= 100,
    })
    assert ok


# -- 6: schedulers -----------------------------------------------------------------------------


def test_criterion_6_schedulers():
    rr_exact = True
    for n_ues, n_rbgs in ((2, 6), (3, 6), (3, 9), (4, 16), (5, 15)):
        alloc = allocate_slice(SliceState(0), (0, n_rbgs - 1), 0,
                               [UeState(u, buffer=10**9, efficiency=1000) for u in range(n_ues)])
        rr_exact &= [list(alloc.values()).count(u) for u in range(n_ues)] == [n_rbgs // n_ues] * n_ues

    def cell(policy, n_ues, rbgs):
        return CellState(config_from_dict({
            "slice-allocation": {"0": [0, rbgs - 1]}, "slice-users": {"0": list(range(n_ues))},
            "slice-scheduling-policy": [policy], "ues": [{"id": u, "efficiency": 1000} for u in range(n_ues)],
        }))

    pf = cell(2, 3, 7)
    run_cell(pf, 10_000)
    total = sum(u.rbgs for u in pf.ues.values())
    pf_dev = max(abs(u.rbgs / total - 1 / 3) for u in pf.ues.values())

    wf = cell(1, 3, 5)
    worst = 0
    for _ in range(2000):
        before = {u: ue.tx_bytes for u, ue in wf.ues.items()}
        wf.step()
        tb = max(wf.ues[u].tx_bytes - before[u] for u in before)
        served = [ue.tx_bytes for ue in wf.ues.values()]
        worst = max(worst, (max(served) - min(served)) / tb if tb else 0)
    ok = report(6, {
        "round-robin exact on divisible cases": rr_exact,
        f"PF share deviation {pf_dev:.5f} <= 0.005": pf_dev <= 0.005,
        f"waterfilling spread {worst:.2f} TB <= 1": worst <= 1.0,
    })
    assert ok


# -- 7: agent numerics -------------------------------------------------------------------------


def test_criterion_7_agent_numerics():
    grad_err = max(gradient_check(seed, n_act=(9, 72)[seed % 2]) for seed in range(20))
    scenario = frozen_scenario()
    space = sched_slicing_action_space(scenario.cell.config.slice_ids, 17)
    trained, random_means = [], []
    t0 = time.perf_counter()
    for seed in range(10):
        env = SlicingEnv(scenario, space)
        policy = PPOPolicy(episodes=200, seed=seed).fit(env)
        trained.append(rollout_mean_reward(env, lambda obs: int(policy.predict(obs[None, :])[0])))
        random_means.append(random_policy_mean_reward(env, episodes=10, seed=seed))
    train_s = time.perf_counter() - t0
    p = stats.ttest_ind(trained, random_means, equal_var=False, alternative="greater").pvalue
    ok = report(7, {
        f"gradient relative error {grad_err:.2e} <= 1e-4": grad_err <= 1e-4,
        f"PPO {np.mean(trained):.3f} beats random {np.mean(random_means):.3f} (p={p:.2g} < 0.05)": p < 0.05,
        f"training {train_s:.0f}s <= 600s": train_s <= 600.0,
    })
    assert ok


# -- 8: determinism ----------------------------------------------------------------------------


def test_criterion_8_determinism(catalog_runs):
    checks = {}
    for name, (a, b) in catalog_runs.items():
        same = (a.run_dir / "kpm" / "bs0.csv").read_bytes() == (b.run_dir / "kpm" / "bs0.csv").read_bytes()
        checks[f"{name} KPM CSVs byte-identical"] = same
    assert report(8, checks)


# -- 9: offline/online equivalence ----------------------------------------------------------------


def test_criterion_9_replay_equivalence(tmp_path):
    run = run_experiment(sched_plan(duration_s=20, start_s=3.0), tmp_path / "live", seed=5)
    live = run.xapps["agent"]
    fresh = build_xapp("agent", run.plan.xapps["agent"], run.plan)
    replay_dataset([run.run_dir / "kpm" / "bs0.csv"], fresh, period_ms=250, start_ms=3000)
    same = len(live.feature_trace) == len(fresh.feature_trace) > 0 and all(
        (n1, t1) == (n2, t2) and np.array_equal(f1, f2)
        for (n1, t1, f1), (n2, t2, f2) in zip(live.feature_trace, fresh.feature_trace))
    ok = report(9, {
        f"{len(fresh.feature_trace)} replayed feature vectors equal {len(live.feature_trace)} live": same,
        "same decisions": [d.action_id for d in fresh.decisions] == [d.action_id for d in live.decisions],
    })
    assert ok
