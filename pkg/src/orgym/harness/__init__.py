"""Experiment plans, the scenario runner, summaries, replay and training."""
from .plans import (
    CATALOG,
    ExperimentPlan,
    PlanEvent,
    TimelineConflict,
    build_prioritization_plan,
    build_stairs_plan,
    build_v_plan,
    load_plan,
    plan_from_dict,
    split_rbgs,
)
from .replay import SchemaMismatch, iter_indications, read_dataset, replay_dataset
from .runner import ComponentCrash, RunResult, run_experiment
from .summary import RunSummary, empirical_cdf, export_summary

__all__ = [
    "CATALOG", "ExperimentPlan", "PlanEvent", "TimelineConflict", "build_prioritization_plan",
    "build_stairs_plan", "build_v_plan", "load_plan", "plan_from_dict", "split_rbgs",
    "SchemaMismatch", "iter_indications", "read_dataset", "replay_dataset",
    "ComponentCrash", "RunResult", "run_experiment",
    "RunSummary", "empirical_cdf", "export_summary",
]
