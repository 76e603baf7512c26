"""Patient-flow demand simulator and rolling parameter estimation.

Ground-truth ("testing") demand comes from a three-stage pipeline: daily
hospital arrivals from an autoregressive rate process with day-of-week
levels, a surge shape and delayed cross-hospital spread; a unit-level
census random walk (medical-surgical / progressive / intensive care) with
multinomial stay/transfer/discharge moves; and fixed nurse-to-patient
ratios turning census into nurse demand.  Decision-time ("training") paths
are re-simulated from parameters estimated over a rolling window of the
realized flows, deliberately mismatched from the truth (no spatial term,
day-of-week empirical rates).

Day indexing: experiment days are 1-based; the warm-up occupies days
<= 0 and exists so the first rolling window and the initial census are
well defined.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import NetworkConfig
from .uncertainty import SamplePathSet

__all__ = [
    "ArrivalModelParams",
    "TransitionModel",
    "FlowEstimates",
    "TestingPath",
    "surge_factor",
    "spatial_weights",
    "generate_arrival_rates",
    "simulate_census",
    "nurse_demand",
    "generate_capacity",
    "generate_testing_path",
    "estimate_rolling_params",
    "generate_training_paths",
    "save_paths_csv",
    "load_paths_csv",
    "save_capacity_csv",
    "load_capacity_csv",
]

UNITS = ("MS", "PCU", "ICU")
NURSE_RATIOS = np.array([1 / 5, 1 / 3, 1 / 2])  # nurses per patient by unit


def surge_factor(t: int, t_start: int, t_peak: int, t_end: int, c_peak: float) -> float:
    """Square-root ramp to c_peak at t_peak, square-root decay back to 1 at t_end."""
    if t < t_start or t > t_end:
        return 1.0
    if t < t_peak:
        return (c_peak - 1.0) * np.sqrt((t - t_start) / (t_peak - t_start)) + 1.0
    if t_end == t_peak:
        return c_peak
    return (c_peak - 1.0) * np.sqrt((t_end - t) / (t_end - t_peak)) + 1.0


@dataclass(frozen=True)
class ArrivalModelParams:
    """Knobs of the arrival-rate process.

    ``kappa[i, y]`` carries the absolute day-of-week arrival level;
    ``location_scale`` the relative hospital sizes; the surge shape
    multiplies the autoregressive part, the level and the noise variance.
    The delayed spread term feeds each hospital from the others' spread
    component ``spatial_lag + 1 .. spatial_lag + spatial_window`` days back,
    weighted by exp(-spatial_decay * distance / max distance).
    """

    phi: np.ndarray
    kappa: np.ndarray
    location_scale: np.ndarray
    t_start: int = 1
    t_peak: int = 49
    t_end: int = 119
    peak_factor: float = 1.5
    week_period: int = 7
    noise_scale: float = 1.0  # multiplies the level-proportional noise variance
    spatial_decay: float = 6.5
    spatial_lag: int = 7
    spatial_window: int = 7
    spatial_seed_frac: float = 0.1
    lam_history: np.ndarray | None = None  # (L, len(phi)), most recent last

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=float))
        object.__setattr__(self, "kappa", np.asarray(self.kappa, dtype=float))
        object.__setattr__(self, "location_scale", np.asarray(self.location_scale, dtype=float))
        if self.kappa.ndim != 2 or self.kappa.shape[1] != self.week_period:
            raise ValueError("kappa must be (L, week_period)")
        if not self.t_start <= self.t_peak <= self.t_end:
            raise ValueError("surge breakpoints must be ordered")
        if self.peak_factor < 1.0:
            raise ValueError("peak factor must be >= 1")

    @property
    def num_locations(self) -> int:
        return self.kappa.shape[0]

    def default_history(self) -> np.ndarray:
        """Near-stationary seed for the autoregressive component on days <= 0."""
        damp = max(1.0 - float(self.phi.sum()), 0.1)
        level = self.location_scale * self.kappa.mean(axis=1) / damp
        return np.tile(level[:, None], (1, len(self.phi)))


def spatial_weights(network: NetworkConfig, decay: float) -> np.ndarray:
    """exp(-decay * d / d_max) with a zero diagonal."""
    d = network.distances
    off = d[~np.eye(len(d), dtype=bool)]
    dmax = off.max() if off.size and off.max() > 0 else 1.0
    theta = np.exp(-decay * d / dmax)
    np.fill_diagonal(theta, 0.0)
    return theta


def generate_arrival_rates(
    params: ArrivalModelParams,
    network: NetworkConfig,
    first_day: int,
    num_days: int,
    rng: np.random.Generator,
):
    """Daily arrival rates and Poisson arrival counts for each hospital.

    Returns ``(rates, arrivals)`` of shape (L, num_days) covering days
    ``first_day .. first_day + num_days - 1``.  The autoregressive part is
    clamped at zero before sampling (the noise can push it negative).
    """
    L = params.num_locations
    p_ar = len(params.phi)
    theta = spatial_weights(network, params.spatial_decay)
    hist1 = np.array(params.lam_history if params.lam_history is not None else params.default_history())
    if hist1.shape != (L, p_ar):
        raise ValueError("lam_history must be (L, len(phi))")
    depth2 = params.spatial_lag + params.spatial_window
    hist2 = params.spatial_seed_frac * hist1.mean(axis=1)[:, None] * np.ones((1, depth2))
    phi_rev = params.phi[::-1]  # hist is most-recent-last

    rates = np.zeros((L, num_days))
    arrivals = np.zeros((L, num_days), dtype=int)
    for d in range(num_days):
        t = first_day + d
        y = (t - 1) % params.week_period
        f = surge_factor(t, params.t_start, params.t_peak, params.t_end, params.peak_factor)
        level = params.location_scale * f * params.kappa[:, y]
        var = params.noise_scale * np.maximum(level, 0.0)
        noise = rng.normal(0.0, np.sqrt(var))
        lam1 = np.maximum(f * (hist1 @ phi_rev) + level + noise, 0.0)
        spread = hist2[:, :params.spatial_window].sum(axis=1)  # lag+1 .. lag+window days back
        lam2 = f * (theta.T @ spread)
        lam = lam1 + lam2
        rates[:, d] = lam
        arrivals[:, d] = rng.poisson(lam)
        hist1 = np.roll(hist1, -1, axis=1)
        hist1[:, -1] = lam1
        hist2 = np.roll(hist2, -1, axis=1)
        hist2[:, -1] = lam2
    return rates, arrivals


@dataclass(frozen=True)
class TransitionModel:
    """Unit-level move probabilities and the arrival split across units.

    ``move_probs[i, u, v, y]``: probability that a patient in unit u at
    hospital i goes to v on a day with day-of-week y, where v indexes
    (MS, PCU, ICU, discharge); rows sum to one.  ``arrival_split[i, u]``
    allocates new arrivals across units.
    """

    move_probs: np.ndarray
    arrival_split: np.ndarray

    def __post_init__(self):
        mp = np.asarray(self.move_probs, dtype=float)
        q = np.asarray(self.arrival_split, dtype=float)
        if mp.ndim != 4 or mp.shape[1] != 3 or mp.shape[2] != 4:
            raise ValueError("move_probs must be (L, 3, 4, Y)")
        if np.any(mp < 0) or np.any(mp > 1) or np.any(q < 0) or np.any(q > 1):
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.allclose(mp.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("move probabilities must sum to 1 over targets")
        if not np.allclose(q.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("arrival split must sum to 1 over units")
        object.__setattr__(self, "move_probs", mp)
        object.__setattr__(self, "arrival_split", q)

    @classmethod
    def stationary(cls, probs: np.ndarray, split: np.ndarray, num_locations: int, week_period: int = 7):
        """Same 3x4 move matrix and split for every hospital and weekday."""
        probs = np.asarray(probs, dtype=float)
        mp = np.tile(probs[None, :, :, None], (num_locations, 1, 1, week_period))
        q = np.tile(np.asarray(split, dtype=float)[None, :], (num_locations, 1))
        return cls(move_probs=mp, arrival_split=q)

    @property
    def num_locations(self) -> int:
        return self.move_probs.shape[0]

    @property
    def week_period(self) -> int:
        return self.move_probs.shape[3]


def simulate_census(
    initial: np.ndarray,
    arrivals: np.ndarray,
    transitions: TransitionModel,
    first_day: int,
    rng: np.random.Generator,
):
    """Run the unit-level census walk over the arrival horizon.

    Returns ``(census, arrivals_by_unit, moves)``: census is (L, 3, D+1)
    with start-of-day headcounts, moves is (L, 3, 4, D) with realized
    stay/transfer/discharge counts.  Patient conservation holds exactly:
    tomorrow's total = today's total + arrivals - discharges.
    """
    L, D = arrivals.shape
    census = np.zeros((L, 3, D + 1), dtype=int)
    census[:, :, 0] = initial
    arrivals_by_unit = np.zeros((L, 3, D), dtype=int)
    moves = np.zeros((L, 3, 4, D), dtype=int)
    Y = transitions.week_period
    for d in range(D):
        y = (first_day + d - 1) % Y
        for i in range(L):
            arrivals_by_unit[i, :, d] = rng.multinomial(arrivals[i, d], transitions.arrival_split[i])
            for u in range(3):
                moves[i, u, :, d] = rng.multinomial(census[i, u, d], transitions.move_probs[i, u, :, y])
            census[i, :, d + 1] = (
                arrivals_by_unit[i, :, d] + moves[i, :, :3, d].sum(axis=0)
            )
    return census, arrivals_by_unit, moves


def nurse_demand(census: np.ndarray) -> np.ndarray:
    """Census to nurse demand at 5:1 (MS), 3:1 (PCU), 2:1 (ICU) ratios."""
    census = np.asarray(census, dtype=float)
    return np.tensordot(NURSE_RATIOS, np.moveaxis(census, 1, 0), axes=(0, 0))


def generate_capacity(
    demand: np.ndarray,
    initial: np.ndarray,
    adjust_scale: np.ndarray,
    weeks: int,
    step_up: float = 2.0,
    step_down: float = 0.8,
    week_period: int = 7,
) -> np.ndarray:
    """Weekly staffing levels chasing the realized demand trend.

    Weeks 1 and 2 stay at the given initial levels; afterwards the staff
    moves by scale * step * (difference of consecutive weekly mean demands),
    stepping up twice as aggressively as down, rounded to whole nurses.
    """
    L = len(initial)
    cap = np.zeros((L, weeks), dtype=int)
    cap[:, 0] = initial
    if weeks == 1:
        return cap
    cap[:, 1] = initial
    current = np.asarray(initial, dtype=float)
    for w in range(3, weeks + 1):
        lo2 = (w - 3) * week_period
        lo1 = (w - 2) * week_period
        d_prev = demand[:, lo2 : lo2 + week_period].mean(axis=1)
        d_last = demand[:, lo1 : lo1 + week_period].mean(axis=1)
        diff = d_last - d_prev
        step = np.where(diff >= 0, step_up, step_down)
        current = current + step * np.asarray(adjust_scale) * diff
        cap[:, w - 1] = np.maximum(np.rint(current), 0).astype(int)
        current = cap[:, w - 1].astype(float)
    return cap


@dataclass
class TestingPath:
    """One ground-truth realization: demand, flows and the staffing schedule.

    Arrays cover ``warmup_days + horizon_days`` days; experiment day g maps
    to array column ``warmup_days + g - 1`` (so day 0 and earlier are the
    warm-up used only for estimation).
    """

    demand: np.ndarray  # (L, total)
    census: np.ndarray  # (L, 3, total + 1)
    arrivals_by_unit: np.ndarray  # (L, 3, total)
    moves: np.ndarray  # (L, 3, 4, total)
    capacity: np.ndarray  # (L, weeks)
    warmup_days: int

    __test__ = False  # "testing path" is domain vocabulary, not a pytest case

    @property
    def num_locations(self) -> int:
        return self.demand.shape[0]

    @property
    def horizon_days(self) -> int:
        return self.demand.shape[1] - self.warmup_days

    def col(self, day: int) -> int:
        idx = self.warmup_days + day - 1
        if not 0 <= idx < self.demand.shape[1]:
            raise ValueError(f"day {day} outside the simulated range")
        return idx

    def demand_on(self, day: int) -> np.ndarray:
        return self.demand[:, self.col(day)]

    def demand_slice(self, day: int, length: int) -> np.ndarray:
        c = self.col(day)
        return self.demand[:, c : c + length]

    def census_at(self, day: int) -> np.ndarray:
        """Start-of-day census (the state training paths are grown from)."""
        return self.census[:, :, self.col(day)]

    def capacity_for_week(self, week: int) -> np.ndarray:
        return self.capacity[:, week - 1]


def generate_testing_path(
    network: NetworkConfig,
    arrival_params: ArrivalModelParams,
    transitions: TransitionModel,
    weeks: int,
    warmup_days: int,
    capacity_initial: np.ndarray,
    capacity_scale: np.ndarray,
    rng: np.random.Generator,
    capacity_step_up: float = 2.0,
    capacity_step_down: float = 0.8,
) -> TestingPath:
    """Simulate one full ground-truth path including the warm-up."""
    total = warmup_days + weeks * 7
    first_day = 1 - warmup_days
    rates, arrivals = generate_arrival_rates(arrival_params, network, first_day, total, rng)
    initial = _steady_state_census(arrival_params, transitions)
    census, by_unit, moves = simulate_census(initial, arrivals, transitions, first_day, rng)
    demand = nurse_demand(census[:, :, :total])
    capacity = generate_capacity(
        demand[:, warmup_days:],
        capacity_initial,
        capacity_scale,
        weeks,
        capacity_step_up,
        capacity_step_down,
    )
    return TestingPath(
        demand=demand,
        census=census,
        arrivals_by_unit=by_unit,
        moves=moves,
        capacity=capacity,
        warmup_days=warmup_days,
    )


def _steady_state_census(params: ArrivalModelParams, transitions: TransitionModel) -> np.ndarray:
    """Deterministic fixed point of the expected census flow, per hospital."""
    L = params.num_locations
    damp = max(1.0 - float(params.phi.sum()), 0.1)
    lam = params.location_scale * params.kappa.mean(axis=1) / damp
    out = np.zeros((L, 3), dtype=int)
    for i in range(L):
        P = transitions.move_probs[i, :, :3, :].mean(axis=2)
        q = transitions.arrival_split[i]
        steady = lam[i] * q @ np.linalg.inv(np.eye(3) - P)
        out[i] = np.maximum(np.rint(steady), 0)
    return out


@dataclass
class FlowEstimates:
    """Day-of-week arrival means, arrival split and move fractions."""

    lam_hat: np.ndarray  # (L, Y)
    q_hat: np.ndarray  # (L, 3)
    move_hat: np.ndarray  # (L, 3, 4, Y)

    def as_transition_model(self) -> TransitionModel:
        return TransitionModel(move_probs=self.move_hat, arrival_split=self.q_hat)


def estimate_rolling_params(
    path: TestingPath,
    day: int,
    window_weeks: int,
    previous: FlowEstimates | None = None,
    week_period: int = 7,
) -> FlowEstimates:
    """Empirical flow rates over the ``window_weeks`` before ``day``.

    Arrival means are day-of-week specific; move probabilities are flow
    fractions conditioned on day-of-week.  Cells with no observed patients
    keep the previous estimate, or a uniform split on first use, so a quiet
    unit never causes a division error.
    """
    win = window_weeks * week_period
    start = path.col(day - win)
    stop = path.col(day - 1) + 1
    if stop - start != win:
        raise ValueError("insufficient history for the estimation window")
    L = path.num_locations
    Y = week_period
    days = np.arange(day - win, day)
    dows = (days - 1) % Y

    totals = path.arrivals_by_unit[:, :, start:stop].sum(axis=1)  # (L, win)
    lam_hat = np.zeros((L, Y))
    for y in range(Y):
        cols = np.nonzero(dows == y)[0]
        if cols.size:
            lam_hat[:, y] = totals[:, cols].mean(axis=1)
        elif previous is not None:
            lam_hat[:, y] = previous.lam_hat[:, y]

    unit_sums = path.arrivals_by_unit[:, :, start:stop].sum(axis=2)  # (L, 3)
    q_hat = np.zeros((L, 3))
    for i in range(L):
        total = unit_sums[i].sum()
        if total > 0:
            q_hat[i] = unit_sums[i] / total
        elif previous is not None:
            q_hat[i] = previous.q_hat[i]
        else:
            q_hat[i] = 1.0 / 3.0

    move_hat = np.zeros((L, 3, 4, Y))
    for y in range(Y):
        cols = np.nonzero(dows == y)[0]
        flows = path.moves[:, :, :, start:stop][:, :, :, cols].sum(axis=3)  # (L, 3, 4)
        heads = path.census[:, :, start:stop][:, :, cols].sum(axis=2)  # (L, 3)
        for i in range(L):
            for u in range(3):
                if heads[i, u] > 0:
                    move_hat[i, u, :, y] = flows[i, u] / heads[i, u]
                elif previous is not None:
                    move_hat[i, u, :, y] = previous.move_hat[i, u, :, y]
                else:
                    move_hat[i, u, :, y] = 0.25
        # guard against accumulated float drift off the simplex
        move_hat[:, :, :, y] /= move_hat[:, :, :, y].sum(axis=2, keepdims=True)
    return FlowEstimates(lam_hat=lam_hat, q_hat=q_hat, move_hat=move_hat)


def generate_training_paths(
    estimates: FlowEstimates,
    initial_census: np.ndarray,
    count: int,
    horizon: int,
    start_day: int,
    rng: np.random.Generator,
    week_period: int = 7,
) -> SamplePathSet:
    """Forward-simulate demand predictions from the current census state.

    Uses the estimated per-location day-of-week arrival rates and move
    fractions only (no cross-hospital spread term: the estimates cannot see
    it, which is the intended model mismatch).
    """
    if count == 0:
        return SamplePathSet(())
    L = initial_census.shape[0]
    paths = []
    for _ in range(count):
        census = np.array(initial_census, dtype=int)
        demand = np.zeros((L, horizon))
        for tau in range(horizon):
            day = start_day + tau
            y = (day - 1) % week_period
            demand[:, tau] = nurse_demand(census)
            nxt = np.zeros_like(census)
            for i in range(L):
                lam = max(float(estimates.lam_hat[i, y]), 0.0)
                total = rng.poisson(lam)
                arr = rng.multinomial(total, estimates.q_hat[i])
                stay = np.zeros(3, dtype=int)
                for u in range(3):
                    moved = rng.multinomial(census[i, u], estimates.move_hat[i, u, :, y])
                    stay += moved[:3]
                nxt[i] = arr + stay
            census = nxt
        paths.append(demand)
    return SamplePathSet(tuple(paths))


# -- CSV interchange ---------------------------------------------------------


def save_paths_csv(path: Path, demands: dict[int, np.ndarray], first_day: int = 1) -> None:
    """Demand paths as (path_id, location, day, value) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "location", "day", "value"])
        for pid in sorted(demands):
            arr = demands[pid]
            for i in range(arr.shape[0]):
                for d in range(arr.shape[1]):
                    writer.writerow([pid, i, first_day + d, repr(float(arr[i, d]))])


def load_paths_csv(path: Path) -> tuple[dict[int, np.ndarray], int]:
    """Inverse of :func:`save_paths_csv`; returns (paths, first_day)."""
    cells: dict[int, dict[tuple[int, int], float]] = {}
    first_day = None
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pid = int(row["path_id"])
            day = int(row["day"])
            first_day = day if first_day is None else min(first_day, day)
            cells.setdefault(pid, {})[(int(row["location"]), day)] = float(row["value"])
    out = {}
    for pid, entries in cells.items():
        locs = 1 + max(k[0] for k in entries)
        days = sorted({k[1] for k in entries})
        arr = np.zeros((locs, len(days)))
        for (i, d), v in entries.items():
            arr[i, d - days[0]] = v
        out[pid] = arr
    return out, (first_day if first_day is not None else 1)


def save_capacity_csv(path: Path, capacities: dict[int, np.ndarray]) -> None:
    """Weekly staffing as (path_id, location, week, value) rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "location", "week", "value"])
        for pid in sorted(capacities):
            arr = capacities[pid]
            for i in range(arr.shape[0]):
                for w in range(arr.shape[1]):
                    writer.writerow([pid, i, w + 1, int(arr[i, w])])


def load_capacity_csv(path: Path) -> dict[int, np.ndarray]:
    cells: dict[int, dict[tuple[int, int], int]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pid = int(row["path_id"])
            cells.setdefault(pid, {})[(int(row["location"]), int(row["week"]))] = int(row["value"])
    out = {}
    for pid, entries in cells.items():
        locs = 1 + max(k[0] for k in entries)
        weeks = 1 + max(k[1] for k in entries) - 1
        arr = np.zeros((locs, weeks), dtype=int)
        for (i, w), v in entries.items():
            arr[i, w - 1] = v
        out[pid] = arr
    return out
