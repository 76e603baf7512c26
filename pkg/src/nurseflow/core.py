"""Domain model for the multi-hospital nurse transfer problem.

Conventions used throughout the package:

* Locations are indexed ``0..L-1``; days within a planning horizon are
  1-based (``t = 1..T``) to match the convention that a transfer on day t
  occupies days ``t .. t + mu - 1``.
* A *planned* decision ``a[t, i, j]`` is the number of nurses tentatively
  committed at horizon start to move i -> j on day t.  A *deployment*
  ``b[i, j]`` is the realized daily transfer.  Deploying above plan is an
  emergency transfer, below plan a cancellation.
* A transferred nurse stays at the destination for the secondment length
  ``mu = min(omega[i, j], T - t + 1)`` days and then returns home, so the
  carry-over state is always empty at day T + 1.

All arrays are plain numpy; every function here is pure and the config
objects are frozen, so everything can be shared freely across worker
processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "NetworkConfig",
    "CostParams",
    "HorizonConfig",
    "DeploymentCost",
    "secondment_length",
    "secondment_matrix",
    "planned_cost",
    "deployment_cost",
    "on_site_staff",
    "imbalance",
    "imbalance_from_history",
    "advance_state",
    "empty_state",
    "validate_capacity",
    "validate_plan",
    "validate_action",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of the hospital network.

    distances are symmetric with a zero diagonal; ``transfer_bonus`` is the
    one-time compensation per transferred nurse; ``secondment`` holds the
    minimum stay (days, >= 1) per directed arc; ``arc_allowed`` masks which
    arcs exist (hub-and-spoke vs. fully connected are both just masks);
    ``capacity`` is the home-staff count per location for one horizon (the
    planner swaps in the active week's vector).
    """

    distances: np.ndarray
    transfer_bonus: np.ndarray
    secondment: np.ndarray
    arc_allowed: np.ndarray
    capacity: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        tau = np.asarray(self.transfer_bonus, dtype=float)
        omega = np.asarray(self.secondment, dtype=int)
        mask = np.asarray(self.arc_allowed, dtype=bool).copy()
        cap = np.asarray(self.capacity, dtype=int)
        L = d.shape[0]
        if d.shape != (L, L) or tau.shape != (L, L) or omega.shape != (L, L) or mask.shape != (L, L):
            raise ValueError("network matrices must all be L x L")
        if cap.shape != (L,):
            raise ValueError("capacity must have one entry per location")
        if np.any(np.diag(d) != 0) or not np.allclose(d, d.T):
            raise ValueError("distances must be symmetric with zero diagonal")
        if np.any(d < 0) or np.any(tau < 0) or np.any(cap < 0):
            raise ValueError("distances, bonuses and capacities must be nonnegative")
        np.fill_diagonal(mask, False)
        if np.any(omega[mask] < 1):
            raise ValueError("secondment must be >= 1 on every allowed arc")
        object.__setattr__(self, "distances", _freeze(d))
        object.__setattr__(self, "transfer_bonus", _freeze(tau))
        object.__setattr__(self, "secondment", _freeze(omega))
        object.__setattr__(self, "arc_allowed", _freeze(mask))
        object.__setattr__(self, "capacity", _freeze(cap))
        if not self.names:
            object.__setattr__(self, "names", tuple(f"loc{i}" for i in range(L)))

    @property
    def num_locations(self) -> int:
        return self.distances.shape[0]

    @property
    def arcs(self) -> list[tuple[int, int]]:
        """Allowed (origin, destination) pairs in row-major order."""
        ii, jj = np.nonzero(self.arc_allowed)
        return list(zip(ii.tolist(), jj.tolist()))

    @property
    def omega_max(self) -> int:
        if not np.any(self.arc_allowed):
            return 1
        return int(self.secondment[self.arc_allowed].max())

    def with_capacity(self, capacity: Sequence[int]) -> "NetworkConfig":
        """Same network with a different staffing vector (weekly schedule)."""
        return NetworkConfig(
            distances=self.distances,
            transfer_bonus=self.transfer_bonus,
            secondment=self.secondment,
            arc_allowed=self.arc_allowed,
            capacity=np.asarray(capacity, dtype=int),
            names=self.names,
        )


@dataclass(frozen=True)
class CostParams:
    """Money parameters of one planning horizon.

    ``premium`` is the daily away-from-home pay, ``emergency_multiplier[t]``
    scales the daily pay for unplanned transfers, ``cancellation_pct`` is the
    fee fraction kept when a planned transfer is scrapped, and
    ``shortage[t, i]`` prices one nurse-day of unmet demand.  The
    cancellation *component* of the deployment cost uses the (eta - 1)
    factor, i.e. it is a negative refund; together with the planned cost the
    net effect of cancelling is paying the eta fee (see
    :func:`deployment_cost`).  ``coordination_cost`` is an optional per-week
    charge per (origin, distinct away site) pair served, default 0.
    """

    premium: float
    emergency_multiplier: np.ndarray
    cancellation_pct: float
    shortage: np.ndarray
    coordination_cost: float = 0.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.emergency_multiplier, dtype=float))
        s = np.asarray(self.shortage, dtype=float)
        if s.ndim == 1:
            s = s[:, None] * np.ones((1, 1))
        if self.premium <= 0:
            raise ValueError("premium must be positive")
        if np.any(theta < 1):
            raise ValueError("emergency multiplier must be >= 1")
        if not 0.0 <= self.cancellation_pct <= 1.0:
            raise ValueError("cancellation_pct must lie in [0, 1]")
        if np.any(s < 0):
            raise ValueError("shortage cost must be nonnegative")
        object.__setattr__(self, "emergency_multiplier", _freeze(theta))
        object.__setattr__(self, "shortage", _freeze(s))

    @classmethod
    def constant(
        cls,
        premium: float,
        emergency_multiplier: float,
        cancellation_pct: float,
        shortage: float,
        horizon: int,
        num_locations: int,
        coordination_cost: float = 0.0,
    ) -> "CostParams":
        """Time/location-invariant parameters expanded to per-day arrays."""
        return cls(
            premium=premium,
            emergency_multiplier=np.full(horizon, float(emergency_multiplier)),
            cancellation_pct=cancellation_pct,
            shortage=np.full((horizon, num_locations), float(shortage)),
            coordination_cost=coordination_cost,
        )

    def theta(self, t: int) -> float:
        """Emergency multiplier on (1-based) day t, clamped to the array end."""
        idx = min(t, len(self.emergency_multiplier)) - 1
        return float(self.emergency_multiplier[idx])

    def shortage_at(self, t: int, i: int) -> float:
        idx = min(t, self.shortage.shape[0]) - 1
        return float(self.shortage[idx, i])

    def emergency_dominates_shortage(self, network: NetworkConfig, horizon: int) -> bool:
        """True when every shortage price exceeds the dearest emergency transfer.

        This is the incentive that makes hospitals prefer pulling idle nurses
        from elsewhere over running short.
        """
        worst = 0.0
        for i, j in network.arcs:
            for t in range(1, horizon + 1):
                cost = self.theta(t) * self.premium * network.secondment[i, j] + network.transfer_bonus[i, j]
                worst = max(worst, cost)
        return bool(np.all(self.shortage > worst))


@dataclass(frozen=True)
class HorizonConfig:
    """Length bookkeeping for one planning horizon of T days, W horizons total."""

    days: int
    weeks: int = 1
    omega_max: int = 1

    def __post_init__(self):
        if self.days < 1 or self.weeks < 1:
            raise ValueError("horizon must have at least one day and one week")
        if self.omega_max > self.days:
            raise ValueError("longest secondment cannot exceed the horizon")


def secondment_length(network: NetworkConfig, horizon: int, i: int, j: int, t: int) -> int:
    """Days a nurse sent i -> j on day t stays away: min(omega, T - t + 1)."""
    if not 1 <= t <= horizon:
        raise ValueError(f"day {t} outside horizon 1..{horizon}")
    if i == j or not network.arc_allowed[i, j]:
        raise ValueError(f"arc {i}->{j} is not allowed")
    return int(min(network.secondment[i, j], horizon - t + 1))


def secondment_matrix(network: NetworkConfig, horizon: int, start_day: int = 1) -> np.ndarray:
    """Per-day secondment lengths, shape (S, L, L) with zeros off the arc mask.

    ``start_day`` offsets the truncation clock: entry [k] is the length for a
    transfer on day start_day + k of a horizon that ends on day ``horizon``.
    Used by mid-horizon re-solves that only model the remaining days.
    """
    L = network.num_locations
    span = horizon - start_day + 1
    if span < 1:
        raise ValueError("start_day beyond horizon end")
    mu = np.zeros((span, L, L), dtype=int)
    remaining = horizon - (start_day + np.arange(span)) + 1
    omega = np.where(network.arc_allowed, network.secondment, 0)
    mu[:] = np.minimum(omega[None, :, :], remaining[:, None, None])
    mu *= network.arc_allowed[None, :, :]
    return mu


def planned_cost(
    a_t: np.ndarray, t: int, network: NetworkConfig, costs: CostParams, horizon: int
) -> float:
    """Premium pay over the secondment plus the one-time bonus, per planned nurse."""
    mu = secondment_matrix(network, horizon)[t - 1]
    coeff = (costs.premium * mu + network.transfer_bonus) * network.arc_allowed
    return float(np.sum(coeff * a_t))


@dataclass(frozen=True)
class DeploymentCost:
    """Per-day deployment cost split into its three components.

    ``cancellation`` keeps the (eta - 1) sign convention and is therefore a
    negative refund; adding it to the day's planned cost leaves exactly the
    eta fee for every cancelled transfer.  ``total`` is the signed sum.
    """

    emergency: float
    cancellation: float
    shortage: float

    @property
    def total(self) -> float:
        return self.emergency + self.cancellation + self.shortage

    def net_with_plan(self, planned: float) -> float:
        """Day cost after netting cancelled plans against their refunds."""
        return planned + self.total


def deployment_cost(
    a_t: np.ndarray,
    b_t: np.ndarray,
    delta_t: np.ndarray,
    t: int,
    network: NetworkConfig,
    costs: CostParams,
    horizon: int,
) -> DeploymentCost:
    """Emergency + cancellation + shortage cost for one day's action."""
    mu = secondment_matrix(network, horizon)[t - 1]
    mask = network.arc_allowed
    base = (costs.premium * mu + network.transfer_bonus) * mask
    emer_coeff = (costs.theta(t) * costs.premium * mu + network.transfer_bonus) * mask
    over = np.maximum(b_t - a_t, 0.0) * mask
    under = np.maximum(a_t - b_t, 0.0) * mask
    s_row = np.array([costs.shortage_at(t, i) for i in range(network.num_locations)])
    return DeploymentCost(
        emergency=float(np.sum(emer_coeff * over)),
        cancellation=float((costs.cancellation_pct - 1.0) * np.sum(base * under)),
        shortage=float(np.sum(s_row * np.maximum(delta_t, 0.0))),
    )


def empty_state(num_locations: int, omega_max: int) -> np.ndarray:
    """All-home carry-over state, shape (L, L, omega_max - 1)."""
    return np.zeros((num_locations, num_locations, max(omega_max - 1, 0)), dtype=int)


def on_site_staff(state: np.ndarray, b_t: np.ndarray, capacity: np.ndarray) -> np.ndarray:
    """Nurses physically present at each location after today's transfers.

    Home staff minus everyone away (carry-over plus today's departures) plus
    everyone seconded in.  Summing this over locations always returns the
    total capacity: transfers only move people around.
    """
    away_out = state.sum(axis=(1, 2)) + b_t.sum(axis=1)
    away_in = state.sum(axis=(0, 2)) + b_t.sum(axis=0)
    return capacity - away_out + away_in


def imbalance(
    state: np.ndarray, b_t: np.ndarray, xi_t: np.ndarray, capacity: np.ndarray
) -> np.ndarray:
    """Demand minus available staff; positive entries are nurse shortages."""
    return np.asarray(xi_t, dtype=float) - on_site_staff(state, b_t, capacity)


def imbalance_from_history(
    b_hist: np.ndarray,
    xi_t: np.ndarray,
    capacity: np.ndarray,
    omega: np.ndarray,
    t: int,
) -> np.ndarray:
    """Imbalance on day t recomputed from the raw deployment history.

    Counts a nurse sent i -> j on day k as away on day t iff k lies in the
    window [t - omega_ij + 1, t].  Independent route used to cross-check the
    carry-over state bookkeeping.
    """
    L = len(capacity)
    away_out = np.zeros(L)
    away_in = np.zeros(L)
    for i in range(L):
        for j in range(L):
            if i == j:
                continue
            lo = max(t - int(omega[i, j]), 0)  # 0-based slice start for day (t-omega+1)
            away_out[i] += b_hist[lo:t, i, j].sum()
            away_in[j] += b_hist[lo:t, i, j].sum()
    return np.asarray(xi_t, dtype=float) - (capacity - away_out + away_in)


def advance_state(
    state: np.ndarray, b_t: np.ndarray, t: int, network: NetworkConfig, horizon: int
) -> np.ndarray:
    """Carry-over state for day t+1: shift remaining days down, add today's transfers.

    A transfer with secondment length mu enters the slot with mu - 1 remaining
    days (one-day secondments leave no carry-over).  Applying this over any
    feasible horizon empties the state by day T + 1.
    """
    L = network.num_locations
    kmax = state.shape[2]
    mu = secondment_matrix(network, horizon)[t - 1]
    nxt = np.zeros_like(state)
    if kmax == 0:
        return nxt
    nxt[:, :, : kmax - 1] = state[:, :, 1:]
    for k in range(1, kmax + 1):
        nxt[:, :, k - 1] += np.where(mu == k + 1, b_t, 0).astype(state.dtype)
    return nxt


def validate_capacity(
    decisions: np.ndarray, capacity: np.ndarray, omega: np.ndarray
) -> list[tuple[int, int]]:
    """Away-day window check: at no point may more nurses be away than exist.

    ``decisions`` is a (T, L, L) plan or action history.  Returns every
    (location, day) pair whose window sum exceeds capacity; empty means ok.
    Never raises.
    """
    T, L, _ = decisions.shape
    violations = []
    for t in range(1, T + 1):
        for i in range(L):
            total = 0.0
            for j in range(L):
                if i == j:
                    continue
                lo = max(t - int(omega[i, j]), 0)
                total += decisions[lo:t, i, j].sum()
            if total > capacity[i] + 1e-9:
                violations.append((i, t))
    return violations


def validate_plan(a: np.ndarray, network: NetworkConfig) -> None:
    """Raise unless the plan is nonnegative, diagonal-free and on allowed arcs."""
    _validate_decisions(a, network, "plan")
    viol = validate_capacity(a, network.capacity, network.secondment)
    if viol:
        raise ValueError(f"plan exceeds capacity at (location, day) {viol}")


def validate_action(b: np.ndarray, network: NetworkConfig) -> None:
    """Raise unless a single-day action is nonnegative and on allowed arcs."""
    _validate_decisions(b[None, :, :], network, "action")


def _validate_decisions(arr: np.ndarray, network: NetworkConfig, what: str) -> None:
    if np.any(arr < 0):
        raise ValueError(f"{what} has negative entries")
    if np.any(arr * ~network.arc_allowed[None, :, :] != 0):
        raise ValueError(f"{what} uses a disallowed arc")
