"""Out-of-sample metrics and scenario comparison tables.

Costs are averaged across the (training set x testing path) grid of
trajectories, week by week, keeping the component split.  The cancellation
component keeps its refund sign convention (negative), so the total is
already the netted cost; "deployed transfers" counts nurses at deployment
initiation and "transferred miles" charges each deployment's arc distance
once (a longer secondment travels no farther).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .planner import Trajectory

__all__ = [
    "WeeklyMetrics",
    "CellResult",
    "weekly_cost",
    "count_transfers_and_miles",
    "evaluate_trajectories",
    "compare_scenarios",
    "write_metrics_csv",
    "write_summary_csv",
    "write_cost_curves_csv",
]

METRICS = ("cost", "deployed_transfers", "transferred_miles")
COMPONENTS = ("planned", "emergency", "cancellation", "shortage", "coordination")


@dataclass(frozen=True)
class WeeklyMetrics:
    planned: float
    emergency: float
    cancellation: float
    shortage: float
    coordination: float
    deployed_transfers: float
    transferred_miles: float

    @property
    def cost(self) -> float:
        return self.planned + self.emergency + self.cancellation + self.shortage + self.coordination

    def component(self, name: str) -> float:
        return getattr(self, name)


def count_transfers_and_miles(deployments: np.ndarray, distances: np.ndarray) -> tuple[float, float]:
    """Total deployments and deployment-weighted arc miles for one week.

    ``deployments`` is the (days, L, L) action stack; each deployment is
    counted once when it starts, independent of the secondment length.
    """
    transfers = float(deployments.sum())
    miles = float((deployments * distances[None, :, :]).sum())
    return transfers, miles


def _coordination_charge(deployments: np.ndarray, rate: float) -> float:
    """Per-week charge: each origin pays once per distinct away site it served."""
    if rate == 0.0:
        return 0.0
    used = deployments.sum(axis=0) > 0
    return rate * float(used.sum())


def weekly_cost(
    trajectories: list[Trajectory],
    week: int,
    distances: np.ndarray,
    coordination_rate: float = 0.0,
) -> WeeklyMetrics:
    """Average week-w cost components and flow statistics over all trajectories."""
    missing = [
        (t.set_index, t.path_index) for t in trajectories if len(t.weeks) < week
    ]
    if missing:
        raise ValueError(f"trajectories missing week {week} for (set, path): {missing}")
    if not trajectories:
        raise ValueError("no trajectories to evaluate")
    n = len(trajectories)
    sums = dict.fromkeys(COMPONENTS + ("transfers", "miles"), 0.0)
    for traj in trajectories:
        rec = traj.weeks[week - 1]
        stack = np.stack([d.deployed for d in rec.days])
        transfers, miles = count_transfers_and_miles(stack, distances)
        sums["transfers"] += transfers
        sums["miles"] += miles
        sums["coordination"] += _coordination_charge(stack, coordination_rate)
        for day in rec.days:
            sums["planned"] += day.planned_cost
            sums["emergency"] += day.costs.emergency
            sums["cancellation"] += day.costs.cancellation
            sums["shortage"] += day.costs.shortage
    return WeeklyMetrics(
        planned=sums["planned"] / n,
        emergency=sums["emergency"] / n,
        cancellation=sums["cancellation"] / n,
        shortage=sums["shortage"] / n,
        coordination=sums["coordination"] / n,
        deployed_transfers=sums["transfers"] / n,
        transferred_miles=sums["miles"] / n,
    )


@dataclass
class CellResult:
    """All weekly metrics for one (method, network, secondment, seed) cell."""

    method: str
    network: str
    secondment: str
    seed: int
    weekly: list[WeeklyMetrics]
    eps_by_trajectory: dict[tuple[int, int], list[float]] = field(default_factory=dict)

    @property
    def average_cost(self) -> float:
        return float(np.mean([w.cost for w in self.weekly]))

    def average(self, metric: str) -> float:
        if metric == "cost":
            return self.average_cost
        return float(np.mean([getattr(w, metric) for w in self.weekly]))


def evaluate_trajectories(
    trajectories: list[Trajectory],
    weeks: int,
    distances: np.ndarray,
    coordination_rate: float,
    method: str,
    network: str,
    secondment: str,
    seed: int,
) -> CellResult:
    weekly = [
        weekly_cost(trajectories, w, distances, coordination_rate) for w in range(1, weeks + 1)
    ]
    eps = {(t.set_index, t.path_index): t.eps_series for t in trajectories}
    return CellResult(
        method=method,
        network=network,
        secondment=secondment,
        seed=seed,
        weekly=weekly,
        eps_by_trajectory=eps,
    )


def compare_scenarios(cells: list[CellResult]) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Metric grid plus pairwise percentage deltas.

    Returns (summary, deltas).  The summary averages seeds within each
    (metric, network, secondment, method) cell; cells never run stay absent
    (NaN), they are not zeros.  Deltas compare network designs per method
    and methods per network, as percentage change of the second named
    option relative to the first.
    """
    rows = []
    for cell in cells:
        for metric in METRICS:
            rows.append(
                {
                    "metric": metric,
                    "network": cell.network,
                    "secondment": cell.secondment,
                    "method": cell.method,
                    "seed": cell.seed,
                    "value": cell.average(metric),
                }
            )
    frame = pd.DataFrame(rows)
    summary = (
        frame.groupby(["metric", "network", "secondment", "method"])["value"]
        .mean()
        .unstack(["secondment", "method"])
        .sort_index()
    )
    deltas = []
    means = frame.groupby(["metric", "network", "secondment", "method"])["value"].mean()
    for metric in METRICS:
        for (sec, method) in {(s, m) for (_, _, s, m) in means.index}:
            fc = means.get((metric, "fully_connected", sec, method), np.nan)
            hs = means.get((metric, "hub_and_spoke", sec, method), np.nan)
            if not (np.isnan(fc) or np.isnan(hs)):
                deltas.append(
                    {
                        "metric": metric,
                        "comparison": "fully_connected vs hub_and_spoke",
                        "secondment": sec,
                        "within": method,
                        "pct_change": 100.0 * (fc - hs) / hs if hs else np.nan,
                    }
                )
        for (net, sec) in {(n, s) for (_, n, s, _) in means.index}:
            saa = means.get((metric, net, sec, "saa"), np.nan)
            sro = means.get((metric, net, sec, "sro"), np.nan)
            if not (np.isnan(saa) or np.isnan(sro)):
                deltas.append(
                    {
                        "metric": metric,
                        "comparison": "sro vs saa",
                        "secondment": sec,
                        "within": net,
                        "pct_change": 100.0 * (sro - saa) / saa if saa else np.nan,
                    }
                )
    delta_frame = pd.DataFrame(deltas)
    if not delta_frame.empty:
        delta_frame = delta_frame.sort_values(["metric", "comparison", "secondment", "within"]).reset_index(
            drop=True
        )
    return summary, delta_frame


def _cell_rows(cells: list[CellResult]):
    for cell in cells:
        for w, metrics in enumerate(cell.weekly, start=1):
            yield cell, w, metrics


def write_metrics_csv(path: Path, cells: list[CellResult]) -> None:
    """Long-form weekly metrics: one row per (cell, week, metric)."""
    rows = []
    for cell, w, metrics in _cell_rows(cells):
        base = {
            "method": cell.method,
            "network": cell.network,
            "secondment": cell.secondment,
            "seed": cell.seed,
            "week": w,
        }
        for metric in METRICS:
            value = metrics.cost if metric == "cost" else getattr(metrics, metric)
            rows.append({**base, "metric": metric, "value": value})
        for comp in COMPONENTS:
            rows.append({**base, "metric": f"cost_{comp}", "value": getattr(metrics, comp)})
    pd.DataFrame(rows).to_csv(path, index=False)


def write_summary_csv(path: Path, cells: list[CellResult]) -> None:
    summary, _ = compare_scenarios(cells)
    flat = summary.copy()
    flat.columns = [f"{sec}|{method}" for sec, method in flat.columns]
    flat.reset_index().to_csv(path, index=False)


def write_cost_curves_csv(path: Path, cells: list[CellResult]) -> None:
    """Weekly total-cost curves (and the robust-parameter series) for plotting."""
    rows = []
    for cell, w, metrics in _cell_rows(cells):
        eps_vals = [s[w - 1] for s in cell.eps_by_trajectory.values() if len(s) >= w]
        rows.append(
            {
                "method": cell.method,
                "network": cell.network,
                "secondment": cell.secondment,
                "seed": cell.seed,
                "week": w,
                "cost": metrics.cost,
                "shortage": metrics.shortage,
                "emergency": metrics.emergency,
                "eps_mean": float(np.mean(eps_vals)) if eps_vals else np.nan,
            }
        )
    pd.DataFrame(rows).to_csv(path, index=False)
