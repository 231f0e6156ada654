"""``orgym`` command line.

Exit codes: 0 ok, 1 invalid input (config, plan, CSV schema, arguments),
2 runtime failure. ``ORGYM_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .ransim.config import ConfigError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("orgym")


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("ORGYM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _cmd_run(args) -> int:
    from .harness.plans import load_plan
    from .harness.runner import run_experiment

    plan = load_plan(args.plan)
    result = run_experiment(plan, args.out, seed=args.seed, net=args.net, port=args.port)
    print(result.run_dir)
    return EXIT_OK


def _cmd_plan(args) -> int:
    from .harness.plans import CATALOG

    plan = CATALOG[args.name](seed=args.seed)
    text = plan.dumps()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    from .harness.summary import export_summary

    run_dir = Path(args.run_dir)
    if not (run_dir / "config.json").exists():
        raise InvalidInput(f"{run_dir} is not a run directory (no config.json)")
    summary = export_summary(run_dir)
    for bs, cell in sorted(summary.cells.items()):
        print(f"{bs}: minute  " + "  ".join(f"slice{s} Mbps/share" for s in sorted(cell.slices)) + "  residual")
        for i, m in enumerate(cell.minutes):
            cols = "  ".join(f"{cell.slices[s].thr_mbps[i]:10.3f}/{cell.slices[s].thr_share[i]:.3f}"
                             for s in sorted(cell.slices))
            print(f"{bs}: {m:6d}  {cols}  {cell.residual_per_minute[i]:.4f}")
    if summary.control_latency_ms:
        print(f"control latency ms: {summary.control_latency_ms}")
    return EXIT_OK


def _model_from_args(args, n_actions: int):
    from .harness.runner import build_model

    if args.checkpoint:
        return build_model({"kind": "checkpoint", "path": args.checkpoint})
    if args.action is not None:
        return build_model({"kind": "constant", "action": args.action})
    return build_model({"kind": "random", "n_actions": n_actions, "seed": args.seed})


def _cmd_replay(args) -> int:
    from .harness.replay import read_dataset, replay_dataset, run_dir_geometry
    from .harness.train import RecordCollector, TrainingLog, offline_trajectories, train_offline

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.into == "xapp":
        from .xapp.apps import sched_slicing_xapp, sched_xapp

        factory = sched_slicing_xapp if args.joint else sched_xapp
        probe = factory(None, [])
        geometry = run_dir_geometry(args.csv)
        records = read_dataset(args.csv)
        slice_ids = sorted({r.slice_id for r in records if r.slice_id >= 0})
        space = probe.descriptor.action_space(slice_ids, args.rbg_count)
        xapp = factory(_model_from_args(args, space.size), [], xapp_id=args.xapp_id,
                       report_period_ms=args.period_ms, epoch_periods=args.epoch_periods)
        n = replay_dataset(args.csv, xapp, speed=args.speed, period_ms=args.period_ms, start_ms=args.start_ms,
                           geometry=geometry or None)
        path = out / f"{args.xapp_id}.csv"
        xapp.write_log(path)
        print(f"{n} indications, {len(xapp.decisions)} decisions -> {path}")
        return EXIT_OK

    from .agent.ppo import ActorCritic, PPOHyperparams
    from .agent.reward import RewardWeights, epoch_metrics

    collector = RecordCollector()
    n = replay_dataset(args.csv, collector, speed=args.speed, period_ms=args.period_ms, start_ms=args.start_ms)
    if not collector.records:
        raise InvalidInput("dataset has no windows after start")
    tbs, buf = epoch_metrics(collector.records, args.broadband, args.timesensitive)
    weights = RewardWeights(tb_ref=max(tbs, 1.0), buf_ref=max(buf, 1.0))
    trajectories, space = offline_trajectories(collector.records, weights, broadband=args.broadband,
                                               timesensitive=args.timesensitive, rbg_count=args.rbg_count)
    if not trajectories:
        raise InvalidInput("dataset too short for one epoch")
    nets = ActorCritic(len(trajectories[0].features[0]), space.size, seed=args.seed)
    training_log = TrainingLog()
    train_offline(nets, trajectories, updates=args.updates, hp=PPOHyperparams(), seed=args.seed,
                  log_fn=training_log)
    nets.save(out / "checkpoint.json")
    training_log.write(out / "training.csv")
    print(f"{n} indications, {sum(len(t) for t in trajectories)} epochs -> {out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .agent.scenario import frozen_two_slice_config
    from .harness.plans import load_plan
    from .harness.train import train_on_scenario

    if args.scenario == "frozen":
        config = frozen_two_slice_config()
    else:
        config = load_plan(args.scenario).cells[0]
    policy = train_on_scenario(config, args.episodes, args.seed, joint=not args.sched_only, out_dir=args.out)
    print(f"final mean reward {sum(policy.curve_[-10:]) / min(10, len(policy.curve_)):.4f} "
          f"(uniform random {policy.baseline_:.4f}) -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orgym", description="Desk-scale O-RAN closed-loop gym.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="execute an experiment plan")
    r.add_argument("plan")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--net", action="store_true", help="connect nodes to the RIC over TCP")
    r.add_argument("--port", type=int, default=0, help="RIC port with --net (0 = any free port)")
    r.add_argument("--out", default=None)
    r.set_defaults(func=_cmd_run)

    pl = sub.add_parser("plan", help="print a catalog plan as JSON")
    pl.add_argument("name", choices=["stairs", "v", "prioritize"])
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("-o", "--output", default=None)
    pl.set_defaults(func=_cmd_plan)

    s = sub.add_parser("summarize", help="summarize a run directory")
    s.add_argument("run_dir")
    s.set_defaults(func=_cmd_summarize)

    rp = sub.add_parser("replay", help="replay KPM CSVs into an xApp or offline training")
    rp.add_argument("csv", nargs="+")
    rp.add_argument("--into", choices=["xapp", "train"], required=True)
    rp.add_argument("--out", default="replay-out")
    rp.add_argument("--period-ms", type=int, default=250)
    rp.add_argument("--start-ms", type=int, default=0)
    rp.add_argument("--speed", type=float, default=None)
    rp.add_argument("--rbg-count", type=int, default=17)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--xapp-id", default="replay")
    rp.add_argument("--epoch-periods", type=int, default=4)
    rp.add_argument("--joint", action="store_true", help="sched-slicing action space")
    rp.add_argument("--checkpoint", default=None)
    rp.add_argument("--action", type=int, default=None, help="constant action id")
    rp.add_argument("--updates", type=int, default=50)
    rp.add_argument("--broadband", type=int, default=0)
    rp.add_argument("--timesensitive", type=int, default=1)
    rp.set_defaults(func=_cmd_replay)

    t = sub.add_parser("train", help="train PPO on a frozen scenario")
    t.add_argument("--scenario", required=True, help="plan JSON (first cell is used) or 'frozen'")
    t.add_argument("--episodes", type=int, default=200)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", default="train-out")
    t.add_argument("--sched-only", action="store_true")
    t.set_defaults(func=_cmd_train)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    from .harness.plans import TimelineConflict
    from .harness.replay import SchemaMismatch
    from .harness.runner import ComponentCrash

    try:
        return args.func(args)
    except (ConfigError, TimelineConflict, SchemaMismatch, InvalidInput, FileNotFoundError) as exc:
        print(f"orgym: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ComponentCrash as exc:
        print(f"orgym: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"orgym: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
