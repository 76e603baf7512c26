"""Experiment orchestration: testing data, trajectory workers, artifacts.

A run evaluates one (network, secondment) cell for one or both methods over
H testing paths x M training sets.  Workers over (method, path, set) are
fully independent: every random stream is derived from the base seed by
purpose and indices, so parallel and serial execution produce identical
bytes.  Artifacts: the testing-data bundle (demand/capacity plus the flow
detail needed to re-estimate), line-delimited trajectory logs, metric CSVs
and a JSON manifest with checksums.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import ExperimentConfig
from .evaluator import (
    CellResult,
    evaluate_trajectories,
    write_cost_curves_csv,
    write_metrics_csv,
    write_summary_csv,
)
from .planner import PlannerSettings, Trajectory, run_horizon
from .seeding import TESTING_PATH, child_rng
from .simulator import (
    TestingPath,
    generate_testing_path,
    load_capacity_csv,
    load_paths_csv,
    save_capacity_csv,
    save_paths_csv,
)

__all__ = [
    "ExperimentRun",
    "generate_testing_paths",
    "save_testing_bundle",
    "load_testing_bundle",
    "planner_settings",
    "run_experiment",
    "write_trajectory_log",
    "read_trajectory_log",
]

UNIT_NAMES = ("MS", "PCU", "ICU", "D")


def generate_testing_paths(cfg: ExperimentConfig) -> dict[int, TestingPath]:
    """One ground-truth path per testing index, each from its own stream."""
    cap = cfg.capacity_settings()
    out = {}
    for h in range(cfg.testing_paths):
        out[h] = generate_testing_path(
            network=cfg.network(),
            arrival_params=cfg.arrival_params(),
            transitions=cfg.transition_model(),
            weeks=cfg.weeks,
            warmup_days=cfg.warmup_days,
            capacity_initial=cap["initial"],
            capacity_scale=cap["scale"],
            rng=child_rng(cfg.seed, TESTING_PATH, h),
            capacity_step_up=cap["step_up"],
            capacity_step_down=cap["step_down"],
        )
    return out


# -- testing-data bundle ------------------------------------------------------


def save_testing_bundle(directory: Path, paths: dict[int, TestingPath]) -> list[Path]:
    """Demand + capacity CSVs plus the flow detail (census, moves, arrivals).

    Demand and capacity follow the interchange layout; the extra files make
    a frozen bundle self-sufficient for rolling re-estimation.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    some = next(iter(paths.values()))
    first_day = 1 - some.warmup_days
    save_paths_csv(directory / "demand.csv", {h: p.demand for h, p in paths.items()}, first_day)
    save_capacity_csv(directory / "capacity.csv", {h: p.capacity for h, p in paths.items()})
    census_rows = []
    flow_rows = []
    for h, p in sorted(paths.items()):
        L = p.num_locations
        total = p.demand.shape[1]
        for i in range(L):
            for u in range(3):
                for d in range(total + 1):
                    census_rows.append((h, i, UNIT_NAMES[u], first_day + d, int(p.census[i, u, d])))
                for d in range(total):
                    flow_rows.append(
                        (
                            h,
                            i,
                            first_day + d,
                            UNIT_NAMES[u],
                            int(p.moves[i, u, 0, d]),
                            int(p.moves[i, u, 1, d]),
                            int(p.moves[i, u, 2, d]),
                            int(p.moves[i, u, 3, d]),
                            int(p.arrivals_by_unit[i, u, d]),
                        )
                    )
    pd.DataFrame(
        census_rows, columns=["path_id", "location", "unit", "day", "count"]
    ).to_csv(directory / "census.csv", index=False)
    pd.DataFrame(
        flow_rows,
        columns=["path_id", "location", "day", "from_unit", "to_MS", "to_PCU", "to_ICU", "to_D", "arrivals"],
    ).to_csv(directory / "flows.csv", index=False)
    return [directory / n for n in ("demand.csv", "capacity.csv", "census.csv", "flows.csv")]


def load_testing_bundle(directory: Path) -> dict[int, TestingPath]:
    directory = Path(directory)
    demand, first_day = load_paths_csv(directory / "demand.csv")
    capacity = load_capacity_csv(directory / "capacity.csv")
    warmup = 1 - first_day
    census_df = pd.read_csv(directory / "census.csv")
    flows_df = pd.read_csv(directory / "flows.csv")
    unit_idx = {name: k for k, name in enumerate(UNIT_NAMES)}
    out = {}
    for h, dem in demand.items():
        L, total = dem.shape
        census = np.zeros((L, 3, total + 1), dtype=int)
        sub = census_df[census_df.path_id == h]
        census[sub.location, sub.unit.map(unit_idx), sub.day - first_day] = sub["count"]
        moves = np.zeros((L, 3, 4, total), dtype=int)
        arrivals = np.zeros((L, 3, total), dtype=int)
        sub = flows_df[flows_df.path_id == h]
        rows = (sub.location.to_numpy(), sub.from_unit.map(unit_idx).to_numpy(), (sub.day - first_day).to_numpy())
        for v, col in enumerate(["to_MS", "to_PCU", "to_ICU", "to_D"]):
            moves[rows[0], rows[1], v, rows[2]] = sub[col]
        arrivals[rows[0], rows[1], rows[2]] = sub["arrivals"]
        out[h] = TestingPath(
            demand=dem,
            census=census,
            arrivals_by_unit=arrivals,
            moves=moves,
            capacity=capacity[h],
            warmup_days=warmup,
        )
    return out


# -- trajectory log -----------------------------------------------------------


def trajectory_records(cfg: ExperimentConfig, method: str, traj: Trajectory):
    for week in traj.weeks:
        for day in week.days:
            arcs = []
            planned = day.planned
            deployed = day.deployed
            for i in range(planned.shape[0]):
                for j in range(planned.shape[1]):
                    if planned[i, j] or deployed[i, j]:
                        arcs.append(
                            {
                                "i": i,
                                "j": j,
                                "planned": float(planned[i, j]),
                                "deployed": float(deployed[i, j]),
                                "emergency": float(max(deployed[i, j] - planned[i, j], 0)),
                                "cancelled": float(max(planned[i, j] - deployed[i, j], 0)),
                            }
                        )
            yield {
                "network": cfg.network_kind,
                "secondment": cfg.secondment_kind,
                "seed": cfg.seed,
                "method": method,
                "path": traj.path_index,
                "set": traj.set_index,
                "week": week.week,
                "day": day.day,
                "eps": week.eps,
                "demand": [float(v) for v in day.demand],
                "shortage_by_location": [float(max(v, 0.0)) for v in day.delta],
                "arcs": arcs,
                "costs": {
                    "planned": day.planned_cost,
                    "emergency": day.costs.emergency,
                    "cancellation": day.costs.cancellation,
                    "shortage": day.costs.shortage,
                },
            }


def write_trajectory_log(path: Path, cfg: ExperimentConfig, trajectories: dict) -> None:
    with open(path, "w") as fh:
        for (method, h, m) in sorted(trajectories):
            for record in trajectory_records(cfg, method, trajectories[(method, h, m)]):
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_trajectory_log(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cells_from_log(records: list[dict], distances: np.ndarray, coordination_rate: float) -> list[CellResult]:
    """Rebuild per-cell weekly metrics from a trajectory log.

    Produces the same numbers as evaluating the in-memory trajectories, so
    summary tables can be regenerated without re-running any optimization.
    """
    from .evaluator import WeeklyMetrics

    by_cell: dict[tuple, dict] = {}
    for rec in records:
        cell_key = (rec["method"], rec["network"], rec["secondment"], rec["seed"])
        cell = by_cell.setdefault(cell_key, {})
        traj_key = (rec["path"], rec["set"])
        weeks = cell.setdefault(traj_key, {})
        week = weeks.setdefault(
            rec["week"],
            {"planned": 0.0, "emergency": 0.0, "cancellation": 0.0, "shortage": 0.0,
             "transfers": 0.0, "miles": 0.0, "arcs_used": set(), "eps": rec["eps"]},
        )
        week["planned"] += rec["costs"]["planned"]
        week["emergency"] += rec["costs"]["emergency"]
        week["cancellation"] += rec["costs"]["cancellation"]
        week["shortage"] += rec["costs"]["shortage"]
        for arc in rec["arcs"]:
            if arc["deployed"] > 0:
                week["transfers"] += arc["deployed"]
                week["miles"] += arc["deployed"] * float(distances[arc["i"], arc["j"]])
                week["arcs_used"].add((arc["i"], arc["j"]))

    cells = []
    for (method, network, secondment, seed), trajs in sorted(by_cell.items()):
        n = len(trajs)
        num_weeks = max(max(weeks) for weeks in trajs.values())
        weekly = []
        for w in range(1, num_weeks + 1):
            sums = {"planned": 0.0, "emergency": 0.0, "cancellation": 0.0, "shortage": 0.0,
                    "coordination": 0.0, "transfers": 0.0, "miles": 0.0}
            for weeks in trajs.values():
                wk = weeks[w]
                for key in ("planned", "emergency", "cancellation", "shortage", "transfers", "miles"):
                    sums[key] += wk[key]
                sums["coordination"] += coordination_rate * len(wk["arcs_used"])
            weekly.append(
                WeeklyMetrics(
                    planned=sums["planned"] / n,
                    emergency=sums["emergency"] / n,
                    cancellation=sums["cancellation"] / n,
                    shortage=sums["shortage"] / n,
                    coordination=sums["coordination"] / n,
                    deployed_transfers=sums["transfers"] / n,
                    transferred_miles=sums["miles"] / n,
                )
            )
        eps = {key: [weeks[w]["eps"] for w in sorted(weeks)] for key, weeks in trajs.items()}
        cells.append(
            CellResult(
                method=method,
                network=network,
                secondment=secondment,
                seed=seed,
                weekly=weekly,
                eps_by_trajectory=eps,
            )
        )
    return cells


# -- run ----------------------------------------------------------------------


def planner_settings(cfg: ExperimentConfig, method: str) -> PlannerSettings:
    return PlannerSettings(
        network=cfg.network(),
        costs=cfg.cost_params(),
        weeks=cfg.weeks,
        week_days=cfg.week_days,
        training_paths_per_day=cfg.training_paths,
        num_sets=cfg.training_sets,
        method=method,
        eps_upsilon=cfg.eps_upsilon,
        eps_schedule=cfg.eps_schedule if method == "sro" else None,
        estimate_window_weeks=cfg.window_weeks,
        clip_support=cfg.clip_support,
        rounding=cfg.rounding,
        base_seed=cfg.seed,
    )


def _trajectory_task(payload):
    settings, path, h, m = payload
    return (settings.method, h, m), run_horizon(settings, path, h, m)


@dataclass
class ExperimentRun:
    cells: list[CellResult]
    trajectories: dict
    files: dict[str, Path]
    manifest: dict


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None) -> ExperimentRun:
    """Execute the configured cell end to end and write all artifacts."""
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    manifest_path = out / "manifest.json"

    if cfg.freeze_paths and (Path(cfg.freeze_paths) / "demand.csv").exists():
        paths = load_testing_bundle(cfg.freeze_paths)
        if len(paths) < cfg.testing_paths:
            raise ValueError(
                f"frozen bundle holds {len(paths)} paths; config wants {cfg.testing_paths}"
            )
        paths = {h: paths[h] for h in range(cfg.testing_paths)}
    else:
        paths = generate_testing_paths(cfg)
        if cfg.freeze_paths:
            save_testing_bundle(cfg.freeze_paths, paths)

    bundle_files = save_testing_bundle(out / "testing_data", paths)

    tasks = [
        (planner_settings(cfg, method), paths[h], h, m)
        for method in cfg.methods
        for h in range(cfg.testing_paths)
        for m in range(cfg.training_sets)
    ]
    trajectories = {}
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                for key, traj in pool.map(_trajectory_task, tasks):
                    trajectories[key] = traj
        else:
            for payload in tasks:
                key, traj = _trajectory_task(payload)
                trajectories[key] = traj
    except Exception as exc:
        manifest = _manifest(cfg, started, {}, complete=False, error=str(exc))
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        raise

    distances = cfg.network().distances
    cells = []
    for method in cfg.methods:
        trajs = [trajectories[(method, h, m)] for h in range(cfg.testing_paths) for m in range(cfg.training_sets)]
        cells.append(
            evaluate_trajectories(
                trajs,
                cfg.weeks,
                distances,
                cfg.coordination,
                method,
                cfg.network_kind,
                cfg.secondment_kind,
                cfg.seed,
            )
        )

    files = {
        "trajectories": out / "trajectories.jsonl",
        "metrics": out / "metrics.csv",
        "summary": out / "summary.csv",
        "cost_curves": out / "cost_curves.csv",
    }
    write_trajectory_log(files["trajectories"], cfg, trajectories)
    write_metrics_csv(files["metrics"], cells)
    write_summary_csv(files["summary"], cells)
    write_cost_curves_csv(files["cost_curves"], cells)
    for extra in bundle_files:
        files[f"testing_data/{extra.name}"] = extra

    manifest = _manifest(cfg, started, files, complete=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    files["manifest"] = manifest_path
    return ExperimentRun(cells=cells, trajectories=trajectories, files=files, manifest=manifest)


def _manifest(cfg, started, files, complete, error=None):
    manifest = {
        "package_version": __version__,
        "config": cfg.raw,
        "seed": cfg.seed,
        "worker_seed_rule": "child(base_seed, purpose, indices...) via numpy SeedSequence spawn keys",
        "wallclock_sec": round(time.perf_counter() - started, 3),
        "complete": complete,
        "outputs": {name: _sha256(path) for name, path in sorted(files.items())},
    }
    if error:
        manifest["error"] = error
    return manifest
