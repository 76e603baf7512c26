"""Rolling-horizon planning and deployment.

Each week: pick the robust half-width, plan integer transfers for the whole
week from training sample paths, then every day re-optimize the remaining
sub-horizon S(t) = min(longest secondment, days left) against the observed
demand, implement only the first day's deployment (rounded and repaired to
integer feasibility) and discard the rest.  The robust half-width for week
w >= 2 is chosen by replaying week w-1 under every candidate against the
demand that actually materialized.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    CostParams,
    DeploymentCost,
    NetworkConfig,
    advance_state,
    deployment_cost,
    empty_state,
    imbalance,
    planned_cost,
)
from .ldr import build_sro_ldr_lp, evaluate_ldr, extract_solution
from .lp import solve
from .seeding import DAILY_TRAINING, DEPLOY_ROUNDING, PLAN_ROUNDING, WEEKLY_TRAINING, child_rng
from .simulator import TestingPath, estimate_rolling_params, generate_training_paths
from .uncertainty import SamplePathSet, build_uncertainty_sets, pin_day

__all__ = [
    "PlannerError",
    "RoundingPolicy",
    "PlannerSettings",
    "DayRecord",
    "WeekRecord",
    "Trajectory",
    "randomized_round",
    "repair_capacity",
    "candidate_grid",
    "plan_week",
    "deploy_day",
    "select_robust_param",
    "run_horizon",
]

EPS_GRID_STEP = 5.0


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class RoundingPolicy:
    """How fractional transfer counts become integers.

    randomized: floor + Bernoulli(fractional part), reproducible from the
    stream passed in; floor: always round down (trivially feasible); none:
    keep fractional values (diagnostics only).
    """

    mode: str = "randomized"

    def __post_init__(self):
        if self.mode not in ("randomized", "floor", "none"):
            raise ValueError(f"unknown rounding mode {self.mode!r}")

    def apply(self, values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "none":
            return np.asarray(values, dtype=float)
        if self.mode == "floor":
            return np.floor(np.asarray(values) + 1e-9).astype(int)
        return randomized_round(values, rng)


def randomized_round(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independently round each entry up with probability equal to its fraction."""
    arr = np.asarray(values, dtype=float)
    if np.any(arr < -1e-9):
        raise ValueError("randomized rounding requires nonnegative input")
    arr = np.maximum(arr, 0.0)
    floors = np.floor(arr + 1e-9)
    frac = np.clip(arr - floors, 0.0, 1.0)
    bump = rng.random(size=arr.shape) < frac
    return (floors + bump).astype(int)


def repair_capacity(
    rounded: np.ndarray,
    fractional: np.ndarray,
    omega: np.ndarray,
    slack: np.ndarray,
) -> np.ndarray:
    """Undo round-ups until every away-day window fits its staffing slack.

    Only entries that were rounded up are decremented, smallest fractional
    part first (cheapest distortion), with a fixed index tie-break; since
    the floor of a feasible fractional solution is always feasible, this
    terminates.  ``slack[t, i]`` is the window budget (capacity net of
    committed secondments).
    """
    out = np.array(rounded, dtype=int)
    floors = np.floor(np.asarray(fractional) + 1e-9).astype(int)
    T, L, _ = out.shape

    def first_violation():
        for t in range(1, T + 1):
            for i in range(L):
                total = 0
                for j in range(L):
                    if i == j:
                        continue
                    lo = max(t - int(omega[i, j]), 0)
                    total += int(out[lo:t, i, j].sum())
                if total > slack[t - 1, i] + 1e-9:
                    return t, i
        return None

    while True:
        hit = first_violation()
        if hit is None:
            return out
        t, i = hit
        candidates = []
        for j in range(L):
            if i == j:
                continue
            lo = max(t - int(omega[i, j]), 0)
            for k in range(lo, t):
                if out[k, i, j] > floors[k, i, j]:
                    fr = float(fractional[k, i, j] - floors[k, i, j])
                    candidates.append((fr, k, j))
        if not candidates:
            raise PlannerError(
                f"cannot repair capacity at location {i}, day {t}: no round-ups left"
            )
        _, k, j = min(candidates)
        out[k, i, j] -= 1


def candidate_grid(prev_eps: float, upsilon: float, step: float = EPS_GRID_STEP) -> list[float]:
    """ 5-spaced candidates from (prev - 5*upsilon)+ up to prev + 5*upsilon."""
    lo = max(prev_eps - step * upsilon, 0.0)
    hi = prev_eps + step * upsilon
    out = []
    v = lo
    while v <= hi + 1e-9:
        out.append(float(v))
        v += step
    return out


@dataclass
class PlanResult:
    plan: np.ndarray  # integer (T, L, L)
    fractional: np.ndarray
    objective: float


@dataclass
class DeployResult:
    action: np.ndarray  # integer (L, L)
    fractional: np.ndarray
    objective: float


def plan_week(
    network: NetworkConfig,
    costs: CostParams,
    training_set: SamplePathSet,
    eps: float,
    rng: np.random.Generator,
    rounding: RoundingPolicy = RoundingPolicy(),
    clip_support: bool = True,
) -> PlanResult:
    """Week-start integer plan from one training set.

    Solves the robust rule LP over the full week (empty carry-over state:
    every secondment resolves inside a week), rounds the planned decisions
    and repairs any capacity window the round-ups broke.
    """
    boxes = build_uncertainty_sets(training_set, eps, clip_support)
    lp, model = build_sro_ldr_lp(network, costs, boxes)
    x, report = solve(lp)
    if not report.ok:
        raise PlannerError(f"weekly plan LP ended {report.status}")
    sol = extract_solution(x, model, report.objective)
    frac = np.maximum(sol.a, 0.0) * network.arc_allowed
    rounded = rounding.apply(frac, rng)
    if rounding.mode != "none":
        slack = np.tile(network.capacity.astype(float), (model.S, 1))
        rounded = repair_capacity(rounded, frac, network.secondment, slack)
    return PlanResult(plan=rounded, fractional=frac, objective=report.objective)


def deploy_day(
    network: NetworkConfig,
    costs: CostParams,
    committed_plan: np.ndarray,
    state: np.ndarray,
    day: int,
    observed: np.ndarray,
    training_set: SamplePathSet,
    eps: float,
    rng: np.random.Generator,
    week_days: int = 7,
    rounding: RoundingPolicy = RoundingPolicy(),
    clip_support: bool = True,
) -> DeployResult:
    """One day's integer deployment via sub-horizon re-optimization.

    The sub-horizon runs S = min(longest secondment, days left) days; the
    committed plan is pinned, the carry-over state enters as constants, the
    observed demand collapses day one of every box, and only the first
    day's rule value is implemented.
    """
    S = min(network.omega_max, week_days - day + 1)
    if training_set.horizon < S:
        raise PlannerError(f"training paths cover {training_set.horizon} < {S} days")
    sliced = SamplePathSet(tuple(p[:, :S] for p in training_set.paths))
    boxes = [pin_day(b, 1, observed) for b in build_uncertainty_sets(sliced, eps, clip_support)]
    local_plan = committed_plan[day - 1 : day - 1 + S].astype(float)
    lp, model = build_sro_ldr_lp(
        network,
        costs,
        boxes,
        initial_state=state,
        fixed_plan=local_plan,
        start_day=day,
        horizon=week_days,
    )
    x, report = solve(lp)
    if not report.ok:
        raise PlannerError(f"daily deployment LP ended {report.status}")
    sol = extract_solution(x, model, report.objective)
    frac = evaluate_ldr(sol, observed[:, None], 1)
    frac = np.maximum(frac, 0.0) * network.arc_allowed
    rounded = rounding.apply(frac, rng)
    if rounding.mode != "none":
        committed_away = state.sum(axis=(1, 2)) if state.size else np.zeros(network.num_locations)
        slack = (network.capacity - committed_away)[None, :].astype(float)
        rounded = repair_capacity(
            rounded[None, :, :], frac[None, :, :], network.secondment, slack
        )[0]
    return DeployResult(action=rounded, fractional=frac, objective=report.objective)


# -- full-horizon rollout ----------------------------------------------------


@dataclass
class DayRecord:
    week: int
    day: int
    global_day: int
    demand: np.ndarray
    planned: np.ndarray  # committed plan row for the day
    deployed: np.ndarray
    delta: np.ndarray
    planned_cost: float
    costs: DeploymentCost

    @property
    def total_cost(self) -> float:
        return self.planned_cost + self.costs.total


@dataclass
class WeekRecord:
    week: int
    eps: float
    capacity: np.ndarray
    plan: np.ndarray
    days: list[DayRecord] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return float(sum(d.total_cost for d in self.days))


@dataclass
class Trajectory:
    path_index: int
    set_index: int
    method: str
    weeks: list[WeekRecord] = field(default_factory=list)

    @property
    def eps_series(self) -> list[float]:
        return [w.eps for w in self.weeks]


@dataclass(frozen=True)
class PlannerSettings:
    """Everything one trajectory worker needs besides the testing path."""

    network: NetworkConfig
    costs: CostParams
    weeks: int
    week_days: int = 7
    training_paths_per_day: int = 25  # generated fresh, then split into sets
    num_sets: int = 5
    method: str = "sro"  # "saa" pins eps at 0; "sro" adapts it
    eps_upsilon: float = 2.0
    eps_schedule: tuple[float, ...] | None = None  # overrides adaptation
    estimate_window_weeks: int = 3
    clip_support: bool = True
    rounding: RoundingPolicy = RoundingPolicy()
    base_seed: int = 0

    def __post_init__(self):
        if self.method not in ("saa", "sro"):
            raise ValueError("method must be 'saa' or 'sro'")
        if self.training_paths_per_day % self.num_sets:
            raise ValueError("training path count must split evenly into sets")


@dataclass
class _WeekContext:
    """What the robust-parameter selection needs to replay a finished week."""

    week: int
    path_index: int
    network: NetworkConfig
    weekly_set: SamplePathSet
    daily_sets: list[SamplePathSet]
    realized: np.ndarray  # (L, 7)
    realized_cost: float
    eps: float


def _week_cost_rollout(
    network: NetworkConfig,
    costs: CostParams,
    plan: np.ndarray,
    daily_sets: Sequence[SamplePathSet],
    realized: np.ndarray,
    eps: float,
    rng_for_day: Callable[[int], np.random.Generator],
    settings: PlannerSettings,
    collect: list[DayRecord] | None = None,
    week: int = 0,
) -> float:
    """Deploy a committed plan through one week of realized demand."""
    week_days = settings.week_days
    state = empty_state(network.num_locations, network.omega_max)
    total = 0.0
    for t in range(1, week_days + 1):
        xi = realized[:, t - 1]
        result = deploy_day(
            network,
            costs,
            plan,
            state,
            t,
            xi,
            daily_sets[t - 1],
            eps,
            rng_for_day(t),
            week_days=week_days,
            rounding=settings.rounding,
            clip_support=settings.clip_support,
        )
        b = result.action
        delta = imbalance(state, b, xi, network.capacity)
        pcost = planned_cost(plan[t - 1], t, network, costs, week_days)
        dcost = deployment_cost(plan[t - 1], b, delta, t, network, costs, week_days)
        total += pcost + dcost.total
        if collect is not None:
            collect.append(
                DayRecord(
                    week=week,
                    day=t,
                    global_day=(week - 1) * week_days + t,
                    demand=xi.copy(),
                    planned=plan[t - 1].copy(),
                    deployed=b,
                    delta=delta,
                    planned_cost=pcost,
                    costs=dcost,
                )
            )
        state = advance_state(state, b, t, network, week_days)
    if state.any():
        raise PlannerError("carry-over state not empty at week end")
    return total


def select_robust_param(
    prev_eps: float,
    upsilon: float,
    context: _WeekContext,
    costs: CostParams,
    settings: PlannerSettings,
    set_index: int,
) -> float:
    """Cheapest candidate half-width when replayed against last week's demand.

    Each candidate re-plans and re-deploys the finished week with the same
    training data and the same rounding streams the live run used, so the
    incumbent candidate reproduces the recorded cost exactly and the
    comparison is paired.  Ties go to the smaller (less conservative) value.
    """
    best_eps, best_cost = None, np.inf
    h, m, w = context.path_index, set_index, context.week
    for cand in candidate_grid(prev_eps, upsilon):
        if cand == context.eps:
            cost = context.realized_cost
        else:
            plan = plan_week(
                context.network,
                costs,
                context.weekly_set,
                cand,
                child_rng(settings.base_seed, PLAN_ROUNDING, h, m, w),
                rounding=settings.rounding,
                clip_support=settings.clip_support,
            ).plan
            cost = _week_cost_rollout(
                context.network,
                costs,
                plan,
                context.daily_sets,
                context.realized,
                cand,
                lambda t: child_rng(settings.base_seed, DEPLOY_ROUNDING, h, m, w, t),
                settings,
            )
        if cost < best_cost - 1e-12:
            best_eps, best_cost = cand, cost
    return float(best_eps)


def run_horizon(
    settings: PlannerSettings,
    testing_path: TestingPath,
    path_index: int,
    set_index: int,
    training_generator: Callable[..., SamplePathSet] | None = None,
) -> Trajectory:
    """Roll one (testing path, training set) trajectory across all weeks.

    ``training_generator(count, horizon, start_day, rng)`` may be injected
    for tests; the default estimates flow rates over the rolling window of
    the testing path and simulates forward from its current census.
    """
    week_days = settings.week_days
    h, m = path_index, set_index
    per_set = settings.training_paths_per_day // settings.num_sets
    estimates = None
    trajectory = Trajectory(path_index=h, set_index=m, method=settings.method)
    prev_context: _WeekContext | None = None
    prev_eps = 0.0

    def default_generator(count, horizon, start_day, rng):
        return generate_training_paths(
            estimates, testing_path.census_at(start_day), count, horizon, start_day, rng
        )

    make_paths = training_generator or default_generator

    for w in range(1, settings.weeks + 1):
        capacity = testing_path.capacity_for_week(w)
        net_w = settings.network.with_capacity(capacity)
        g0 = (w - 1) * week_days + 1

        if settings.method == "saa":
            eps_w = 0.0
        elif settings.eps_schedule is not None:
            eps_w = float(settings.eps_schedule[w - 1])
        elif w == 1 or prev_context is None:
            eps_w = 0.0
        else:
            eps_w = select_robust_param(
                prev_eps, settings.eps_upsilon, prev_context, settings.costs, settings, m
            )

        if training_generator is None:
            estimates = estimate_rolling_params(
                testing_path, g0, settings.estimate_window_weeks, previous=estimates
            )
        weekly_batch = make_paths(
            settings.training_paths_per_day, week_days, g0, child_rng(settings.base_seed, WEEKLY_TRAINING, h, w)
        )
        weekly_set = weekly_batch.subset(range(m * per_set, (m + 1) * per_set))
        try:
            plan = plan_week(
                net_w,
                settings.costs,
                weekly_set,
                eps_w,
                child_rng(settings.base_seed, PLAN_ROUNDING, h, m, w),
                rounding=settings.rounding,
                clip_support=settings.clip_support,
            ).plan
        except PlannerError as exc:
            raise PlannerError(f"week {w}, set {m}: {exc}") from exc

        daily_sets = []
        for t in range(1, week_days + 1):
            g = g0 + t - 1
            if training_generator is None and t > 1:
                estimates = estimate_rolling_params(
                    testing_path, g, settings.estimate_window_weeks, previous=estimates
                )
            S = min(settings.network.omega_max, week_days - t + 1)
            batch = make_paths(
                settings.training_paths_per_day, S, g, child_rng(settings.base_seed, DAILY_TRAINING, h, w, t)
            )
            daily_sets.append(batch.subset(range(m * per_set, (m + 1) * per_set)))

        realized = testing_path.demand_slice(g0, week_days)
        record = WeekRecord(week=w, eps=eps_w, capacity=capacity.copy(), plan=plan)
        try:
            realized_cost = _week_cost_rollout(
                net_w,
                settings.costs,
                plan,
                daily_sets,
                realized,
                eps_w,
                lambda t: child_rng(settings.base_seed, DEPLOY_ROUNDING, h, m, w, t),
                settings,
                collect=record.days,
                week=w,
            )
        except PlannerError as exc:
            raise PlannerError(f"week {w}, set {m}: {exc}") from exc
        trajectory.weeks.append(record)
        prev_context = _WeekContext(
            week=w,
            path_index=h,
            network=net_w,
            weekly_set=weekly_set,
            daily_sets=daily_sets,
            realized=realized,
            realized_cost=realized_cost,
            eps=eps_w,
        )
        prev_eps = eps_w
    return trajectory
