import numpy as np
import pytest

from nurseflow.core import CostParams, NetworkConfig

# Four-hospital fixture: West, East, South, Central (hub last).
DIST4 = np.array(
    [
        [0, 88, 110, 62],
        [88, 0, 112, 56],
        [110, 112, 0, 52],
        [62, 56, 52, 0],
    ],
    dtype=float,
)
BONUS4 = np.array(
    [
        [0, 1.46, 1.68, 1.20],
        [1.46, 0, 1.70, 1.14],
        [1.68, 1.70, 0, 1.10],
        [1.20, 1.14, 1.10, 0],
    ]
)
SECOND4 = np.array(
    [
        [1, 2, 2, 1],
        [2, 1, 2, 1],
        [2, 2, 1, 1],
        [1, 1, 1, 1],
    ],
    dtype=int,
)
CAP4 = np.array([40, 120, 110, 130])
WEST, EAST, SOUTH, CENTRAL = 0, 1, 2, 3


def full_mask(L):
    m = np.ones((L, L), dtype=bool)
    np.fill_diagonal(m, False)
    return m


def hub_mask(L, hub):
    m = np.zeros((L, L), dtype=bool)
    m[hub, :] = True
    m[:, hub] = True
    np.fill_diagonal(m, False)
    return m


@pytest.fixture
def network4():
    return NetworkConfig(
        distances=DIST4,
        transfer_bonus=BONUS4,
        secondment=SECOND4,
        arc_allowed=full_mask(4),
        capacity=CAP4,
        names=("West", "East", "South", "Central"),
    )


@pytest.fixture
def network4_hub():
    return NetworkConfig(
        distances=DIST4,
        transfer_bonus=BONUS4,
        secondment=SECOND4,
        arc_allowed=hub_mask(4, CENTRAL),
        capacity=CAP4,
        names=("West", "East", "South", "Central"),
    )


@pytest.fixture
def costs7():
    return CostParams.constant(
        premium=1.0,
        emergency_multiplier=1.6,
        cancellation_pct=0.05,
        shortage=15.0,
        horizon=7,
        num_locations=4,
    )


def tiny_network(L=2, omega=1, cap=5, dist=60.0, bonus=1.2):
    """Small fully connected test network with uniform parameters."""
    d = np.full((L, L), dist)
    np.fill_diagonal(d, 0.0)
    tau = np.full((L, L), bonus)
    np.fill_diagonal(tau, 0.0)
    om = np.full((L, L), omega, dtype=int)
    return NetworkConfig(
        distances=d,
        transfer_bonus=tau,
        secondment=om,
        arc_allowed=full_mask(L),
        capacity=np.full(L, cap, dtype=int),
    )


def random_network(rng, L, omega_hi=3, cap_hi=6):
    """Random fully connected network for property tests."""
    pts = rng.uniform(0, 100, size=(L, 2))
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    tau = 0.1 + 0.01 * d
    np.fill_diagonal(tau, 0.0)
    om = rng.integers(1, omega_hi + 1, size=(L, L))
    om = np.maximum(om, om.T)  # keep it plausible, not required
    return NetworkConfig(
        distances=d,
        transfer_bonus=tau,
        secondment=om,
        arc_allowed=full_mask(L),
        capacity=rng.integers(1, cap_hi + 1, size=L),
    )


def random_feasible_actions(rng, network, T):
    """Random integer action history that respects the away-day windows."""
    from nurseflow.core import advance_state, empty_state

    L = network.num_locations
    state = empty_state(L, max(network.omega_max, 1))
    history = np.zeros((T, L, L), dtype=int)
    states = [state]
    for t in range(1, T + 1):
        b = np.zeros((L, L), dtype=int)
        for i in range(L):
            avail = int(network.capacity[i] - state[i].sum())
            outs = [j for j in range(L) if network.arc_allowed[i, j]]
            rng.shuffle(outs)
            for j in outs:
                if avail <= 0:
                    break
                take = int(rng.integers(0, avail + 1))
                b[i, j] = take
                avail -= take
        history[t - 1] = b
        state = advance_state(state, b, t, network, T)
        states.append(state)
    return history, states
