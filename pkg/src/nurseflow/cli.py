"""Command-line front end.

Subcommands: ``simulate`` materializes testing data only, ``plan`` solves
and prints one week's transfer plan, ``run`` executes a full experiment
cell, ``report`` rebuilds the summary tables from trajectory logs.  Exit
codes: 0 success, 1 configuration problem, 2 runtime failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, config_from_dict, load_config
from .evaluator import compare_scenarios, write_cost_curves_csv, write_metrics_csv, write_summary_csv
from .experiment import (
    cells_from_log,
    generate_testing_paths,
    planner_settings,
    read_trajectory_log,
    run_experiment,
    save_testing_bundle,
)
from .planner import PlannerError, plan_week
from .seeding import PLAN_ROUNDING, WEEKLY_TRAINING, child_rng
from .simulator import estimate_rolling_params, generate_training_paths


def _load(config_path, from_manifest, **overrides):
    if from_manifest:
        manifest = json.loads(Path(from_manifest).read_text())
        data = manifest["config"]
    elif config_path:
        import yaml

        data = yaml.safe_load(Path(config_path).read_text()) or {}
    else:
        data = {}
    for key, value in overrides.items():
        if value is None:
            continue
        data[key] = value
    return config_from_dict(data)


CONFIG_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True), help="YAML experiment file."),
    click.option("--seed", type=int, default=None, help="Override the base seed."),
    click.option("--out", "output_dir", type=click.Path(), default=None, help="Output directory."),
    click.option("--method", type=click.Choice(["saa", "sro", "both"]), default=None),
    click.option(
        "--network",
        type=click.Choice(["fully_connected", "hub_and_spoke"]),
        default=None,
        help="Override the network design.",
    ),
    click.option("--jobs", type=int, default=None, help="Trajectory workers to run in parallel."),
    click.option(
        "--freeze-paths",
        type=click.Path(),
        default=None,
        help="Bundle directory: reuse it if present, else write it.",
    ),
]


def with_config_options(fn):
    for opt in reversed(CONFIG_OPTIONS):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Nurse redeployment planning experiments."""


def _config_or_exit(config_path, from_manifest=None, **overrides):
    try:
        return _load(config_path, from_manifest, **overrides)
    except ConfigError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)


@main.command()
@with_config_options
def simulate(config_path, seed, output_dir, method, network, jobs, freeze_paths):
    """Generate and save the testing demand/capacity datasets only."""
    cfg = _config_or_exit(
        config_path,
        seed=seed,
        output_dir=output_dir,
        method=method,
        network=network,
        jobs=jobs,
        freeze_paths=freeze_paths,
    )
    try:
        paths = generate_testing_paths(cfg)
        files = save_testing_bundle(cfg.output_dir / "testing_data", paths)
    except Exception as exc:  # pragma: no cover - defensive
        click.echo(f"simulation failed: {exc}", err=True)
        sys.exit(2)
    for f in files:
        click.echo(f"wrote {f}")


@main.command()
@with_config_options
@click.option("--week", type=int, default=1, show_default=True, help="Week to plan.")
@click.option("--eps", type=float, default=0.0, show_default=True, help="Robust half-width.")
def plan(config_path, seed, output_dir, method, network, jobs, freeze_paths, week, eps):
    """Solve one week's plan on testing path 0 and print it."""
    cfg = _config_or_exit(
        config_path, seed=seed, output_dir=output_dir, method=method, network=network,
        jobs=jobs, freeze_paths=freeze_paths,
    )
    try:
        path = generate_testing_paths(cfg)[0]
        settings = planner_settings(cfg, cfg.methods[-1])
        g0 = (week - 1) * cfg.week_days + 1
        estimates = estimate_rolling_params(path, g0, cfg.window_weeks)
        batch = generate_training_paths(
            estimates, path.census_at(g0), cfg.training_paths, cfg.week_days, g0,
            child_rng(cfg.seed, WEEKLY_TRAINING, 0, week),
        )
        per_set = cfg.training_paths // cfg.training_sets
        net_w = settings.network.with_capacity(path.capacity_for_week(week))
        result = plan_week(
            net_w, settings.costs, batch.subset(range(per_set)), eps,
            child_rng(cfg.seed, PLAN_ROUNDING, 0, 0, week), rounding=cfg.rounding,
        )
    except (PlannerError, ValueError) as exc:
        click.echo(f"planning failed: {exc}", err=True)
        sys.exit(2)
    names = cfg.network().names
    click.echo(f"week {week} plan (eps={eps}, objective {result.objective:.2f}):")
    any_row = False
    for t in range(cfg.week_days):
        for i in range(len(names)):
            for j in range(len(names)):
                if result.plan[t, i, j]:
                    click.echo(f"  day {t + 1}: {names[i]} -> {names[j]}: {int(result.plan[t, i, j])}")
                    any_row = True
    if not any_row:
        click.echo("  (no transfers planned)")


@main.command()
@with_config_options
@click.option("--from-manifest", type=click.Path(exists=True), default=None,
              help="Re-run the exact configuration recorded in a manifest.")
def run(config_path, seed, output_dir, method, network, jobs, freeze_paths, from_manifest):
    """Run the full experiment cell and write all artifacts."""
    cfg = _config_or_exit(
        config_path, from_manifest,
        seed=seed, output_dir=output_dir, method=method, network=network,
        jobs=jobs, freeze_paths=freeze_paths,
    )
    try:
        result = run_experiment(cfg)
    except PlannerError as exc:
        click.echo(f"run failed: {exc}", err=True)
        sys.exit(2)
    summary, deltas = compare_scenarios(result.cells)
    click.echo(summary.to_string())
    if not deltas.empty:
        click.echo(deltas.to_string(index=False))
    for name, path in sorted(result.files.items()):
        click.echo(f"wrote {path}")


@main.command()
@click.option("--out", "output_dir", type=click.Path(exists=True), required=True,
              help="Directory holding trajectories.jsonl and manifest.json.")
def report(output_dir):
    """Rebuild metric CSVs and the summary table from trajectory logs."""
    out = Path(output_dir)
    manifest_file = out / "manifest.json"
    log_file = out / "trajectories.jsonl"
    if not manifest_file.exists() or not log_file.exists():
        click.echo("report needs manifest.json and trajectories.jsonl in --out", err=True)
        sys.exit(1)
    manifest = json.loads(manifest_file.read_text())
    cfg = config_from_dict(manifest["config"])
    records = read_trajectory_log(log_file)
    cells = cells_from_log(records, cfg.network().distances, cfg.coordination)
    write_metrics_csv(out / "metrics.csv", cells)
    write_summary_csv(out / "summary.csv", cells)
    write_cost_curves_csv(out / "cost_curves.csv", cells)
    summary, deltas = compare_scenarios(cells)
    click.echo(summary.to_string())
    if not deltas.empty:
        click.echo(deltas.to_string(index=False))


if __name__ == "__main__":
    main()
