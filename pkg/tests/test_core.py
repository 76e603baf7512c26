import numpy as np
import pytest

from nurseflow.core import (
    CostParams,
    advance_state,
    deployment_cost,
    empty_state,
    imbalance,
    imbalance_from_history,
    on_site_staff,
    planned_cost,
    secondment_length,
    secondment_matrix,
    validate_capacity,
    validate_plan,
)

from conftest import CENTRAL, EAST, WEST, random_feasible_actions, random_network, tiny_network


class TestSecondmentLength:
    def test_full_stay_when_time_remains(self, network4):
        assert secondment_length(network4, 7, WEST, EAST, 1) == 2

    def test_last_day_forces_one(self, network4):
        assert secondment_length(network4, 7, WEST, CENTRAL, 7) == 1

    def test_truncated_by_horizon_end(self, network4):
        net = tiny_network(L=2, omega=3)
        assert secondment_length(net, 7, 0, 1, 6) == 2  # min(3, 7-6+1)

    def test_rejects_disallowed_arc(self, network4_hub):
        with pytest.raises(ValueError):
            secondment_length(network4_hub, 7, WEST, EAST, 1)

    def test_rejects_day_outside_horizon(self, network4):
        with pytest.raises(ValueError):
            secondment_length(network4, 7, WEST, EAST, 8)

    def test_matrix_matches_scalar(self, network4):
        mu = secondment_matrix(network4, 7)
        for t in range(1, 8):
            for i, j in network4.arcs:
                assert mu[t - 1, i, j] == secondment_length(network4, 7, i, j, t)

    def test_matrix_offset_view(self, network4):
        full = secondment_matrix(network4, 7)
        tail = secondment_matrix(network4, 7, start_day=5)
        assert np.array_equal(tail, full[4:])


class TestPlannedCost:
    def test_single_nurse_short_hop(self, network4, costs7):
        a = np.zeros((4, 4))
        a[WEST, CENTRAL] = 1
        assert planned_cost(a, 1, network4, costs7, 7) == pytest.approx(2.20)

    def test_zero_plan_costs_nothing(self, network4, costs7):
        assert planned_cost(np.zeros((4, 4)), 3, network4, costs7, 7) == 0.0

    def test_secondment_truncates_at_horizon_end(self, network4, costs7):
        a = np.zeros((4, 4))
        a[WEST, EAST] = 1
        assert planned_cost(a, 7, network4, costs7, 7) == pytest.approx(1 * 1 + 1.46)


class TestDeploymentCost:
    def test_plan_followed_no_shortage_is_free(self, network4, costs7):
        a = np.zeros((4, 4))
        a[WEST, CENTRAL] = 2
        c = deployment_cost(a, a.copy(), np.full(4, -1.0), 1, network4, costs7, 7)
        assert c.total == 0.0

    def test_emergency_component(self, network4, costs7):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        b[WEST, CENTRAL] = 1
        c = deployment_cost(a, b, np.zeros(4), 1, network4, costs7, 7)
        assert c.emergency == pytest.approx(1.6 * 1 * 1 + 1.20)
        assert c.cancellation == 0.0 and c.shortage == 0.0

    def test_cancellation_nets_to_fee(self, network4, costs7):
        a = np.zeros((4, 4))
        a[WEST, CENTRAL] = 1
        c = deployment_cost(a, np.zeros((4, 4)), np.zeros(4), 1, network4, costs7, 7)
        assert c.cancellation == pytest.approx((0.05 - 1.0) * 2.20)
        planned = planned_cost(a, 1, network4, costs7, 7)
        assert c.net_with_plan(planned) == pytest.approx(0.05 * 2.20)

    def test_cancel_fee_identity_random_plans(self, network4, costs7):
        rng = np.random.default_rng(7)
        for _ in range(50):
            t = int(rng.integers(1, 8))
            a = rng.integers(0, 4, size=(4, 4)) * network4.arc_allowed
            planned = planned_cost(a, t, network4, costs7, 7)
            c = deployment_cost(a, np.zeros((4, 4)), np.zeros(4), t, network4, costs7, 7)
            assert planned + c.cancellation == pytest.approx(0.05 * planned)

    def test_components_finite_and_signed(self, network4, costs7):
        rng = np.random.default_rng(11)
        for _ in range(50):
            t = int(rng.integers(1, 8))
            a = rng.integers(0, 3, size=(4, 4)) * network4.arc_allowed
            b = rng.integers(0, 3, size=(4, 4)) * network4.arc_allowed
            delta = rng.normal(size=4) * 5
            c = deployment_cost(a, b, delta, t, network4, costs7, 7)
            assert np.isfinite([c.emergency, c.cancellation, c.shortage]).all()
            assert c.emergency >= 0.0 and c.shortage >= 0.0


class TestImbalance:
    def test_idle_network(self):
        net = tiny_network(L=3, cap=4)
        state = empty_state(3, net.omega_max)
        xi = np.array([1.0, 6.0, 4.0])
        delta = imbalance(state, np.zeros((3, 3)), xi, net.capacity)
        assert np.allclose(delta, xi - 4)

    def test_transfer_moves_the_imbalance(self):
        net = tiny_network(L=2, cap=5)
        b = np.zeros((2, 2))
        b[1, 0] = 2
        delta = imbalance(empty_state(2, 1), b, np.array([7.0, 2.0]), net.capacity)
        assert np.allclose(delta, [0.0, -1.0])

    def test_window_form_equals_state_form(self):
        # the two imbalance formulas must agree on random feasible histories
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 1000:
            L = int(rng.integers(2, 5))
            T = int(rng.integers(1, 8))
            net = random_network(rng, L)
            hist, states = random_feasible_actions(rng, net, T)
            for t in range(1, T + 1):
                xi = rng.uniform(0, 10, size=L)
                via_state = imbalance(states[t - 1], hist[t - 1], xi, net.capacity)
                via_window = imbalance_from_history(hist, xi, net.capacity, net.secondment, t)
                assert np.allclose(via_state, via_window, atol=1e-12)
                checked += 1

    def test_nurse_conservation(self):
        rng = np.random.default_rng(99)
        for _ in range(30):
            L = int(rng.integers(2, 5))
            net = random_network(rng, L)
            hist, states = random_feasible_actions(rng, net, 7)
            for t in range(1, 8):
                staff = on_site_staff(states[t - 1], hist[t - 1], net.capacity)
                assert staff.sum() == net.capacity.sum()


class TestAdvanceState:
    def test_one_day_secondments_leave_nothing(self):
        net = tiny_network(L=2, omega=1)
        state = empty_state(2, net.omega_max)
        b = np.array([[0, 3], [1, 0]])
        nxt = advance_state(state, b, 1, net, 7)
        assert nxt.size == 0 or not nxt.any()

    def test_two_day_secondment_carries_once(self):
        net = tiny_network(L=2, omega=2)
        state = empty_state(2, 2)
        b = np.zeros((2, 2), dtype=int)
        b[0, 1] = 3
        nxt = advance_state(state, b, 1, net, 7)
        assert nxt[0, 1, 0] == 3
        again = advance_state(nxt, np.zeros((2, 2), dtype=int), 2, net, 7)
        assert not again.any()

    def test_terminal_state_is_empty(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            L = int(rng.integers(2, 5))
            T = int(rng.integers(1, 8))
            net = random_network(rng, L)
            _, states = random_feasible_actions(rng, net, T)
            assert not states[-1].any()


class TestValidateCapacity:
    def test_empty_plan_ok(self):
        net = tiny_network(L=2, cap=1)
        assert validate_capacity(np.zeros((3, 2, 2)), net.capacity, net.secondment) == []

    def test_overlapping_secondments_flagged(self):
        net = tiny_network(L=2, omega=2, cap=1)
        plan = np.zeros((3, 2, 2), dtype=int)
        plan[0, 0, 1] = 1
        plan[1, 0, 1] = 1  # still away from the day-1 transfer
        assert validate_capacity(plan, net.capacity, net.secondment) == [(0, 2)]

    def test_exact_capacity_each_day_ok(self):
        net = tiny_network(L=2, omega=1, cap=2)
        plan = np.zeros((4, 2, 2), dtype=int)
        plan[:, 0, 1] = 2
        assert validate_capacity(plan, net.capacity, net.secondment) == []

    def test_validate_plan_raises_on_violation(self):
        net = tiny_network(L=2, omega=2, cap=1)
        plan = np.zeros((2, 2, 2), dtype=int)
        plan[0, 0, 1] = 1
        plan[1, 0, 1] = 1
        with pytest.raises(ValueError):
            validate_plan(plan, net)


class TestConfigValidation:
    def test_rejects_asymmetric_distances(self):
        from nurseflow.core import NetworkConfig

        with pytest.raises(ValueError):
            NetworkConfig(
                distances=np.array([[0.0, 1.0], [2.0, 0.0]]),
                transfer_bonus=np.zeros((2, 2)),
                secondment=np.ones((2, 2), dtype=int),
                arc_allowed=np.array([[False, True], [True, False]]),
                capacity=np.array([1, 1]),
            )

    def test_rejects_bad_cost_params(self):
        with pytest.raises(ValueError):
            CostParams.constant(1.0, 0.5, 0.05, 15.0, 7, 2)  # theta < 1
        with pytest.raises(ValueError):
            CostParams.constant(1.0, 1.6, 1.5, 15.0, 7, 2)  # eta out of range
        with pytest.raises(ValueError):
            CostParams.constant(0.0, 1.6, 0.05, 15.0, 7, 2)  # premium must be > 0

    def test_emergency_incentive_check(self, network4, costs7):
        assert costs7.emergency_dominates_shortage(network4, 7)
        cheap = CostParams.constant(1.0, 1.6, 0.05, 2.0, 7, 4)
        assert not cheap.emergency_dominates_shortage(network4, 7)
