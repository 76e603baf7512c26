import numpy as np
import pytest

from nurseflow.simulator import (
    ArrivalModelParams,
    FlowEstimates,
    TransitionModel,
    estimate_rolling_params,
    generate_arrival_rates,
    generate_capacity,
    generate_testing_path,
    generate_training_paths,
    load_capacity_csv,
    load_paths_csv,
    nurse_demand,
    save_capacity_csv,
    save_paths_csv,
    simulate_census,
    spatial_weights,
    surge_factor,
)

from conftest import tiny_network

TABLE_PROBS = np.array(
    [
        [0.05, 0.2, 0.1, 0.65],
        [0.25, 0.05, 0.1, 0.6],
        [0.5, 0.4, 0.05, 0.05],
    ]
)
SPLIT = np.array([0.7659, 0.153, 0.0811])


def arrival_params(L=2, kappa0=20.0, c_peak=1.5, **kw):
    defaults = dict(
        phi=np.array([0.061, -0.165, -0.042, -0.072, -0.148, 0.035, 0.588]),
        kappa=np.full((L, 7), kappa0),
        location_scale=np.linspace(0.5, 1.0, L),
        t_start=1,
        t_peak=21,
        t_end=49,
        peak_factor=c_peak,
    )
    defaults.update(kw)
    return ArrivalModelParams(**defaults)


class TestSurgeFactor:
    def test_start_is_one(self):
        assert surge_factor(1, 1, 49, 119, 1.5) == pytest.approx(1.0)

    def test_peak_value(self):
        assert surge_factor(49, 1, 49, 119, 1.5) == pytest.approx(1.5)

    def test_after_end_is_one(self):
        assert surge_factor(120, 1, 49, 119, 1.5) == 1.0
        assert surge_factor(500, 1, 49, 119, 1.5) == 1.0

    def test_monotone_up_then_down(self):
        vals = [surge_factor(t, 1, 49, 119, 1.5) for t in range(1, 120)]
        assert all(b >= a - 1e-12 for a, b in zip(vals[:48], vals[1:49]))
        assert all(b <= a + 1e-12 for a, b in zip(vals[48:-1], vals[49:]))


class TestArrivals:
    def test_collapses_to_level_without_ar_and_noise(self):
        # zero lag coefficients, zero noise, no spread: rate == level, exactly
        net = tiny_network(L=2)
        params = arrival_params(
            L=2,
            phi=np.zeros(7),
            kappa=np.tile(np.arange(1.0, 8.0), (2, 1)),
            location_scale=np.array([1.0, 2.0]),
            peak_factor=1.0,
            noise_scale=0.0,
            spatial_seed_frac=0.0,
        )
        rates, _ = generate_arrival_rates(params, net, 1, 14, np.random.default_rng(0))
        expected = params.location_scale[:, None] * np.tile(np.arange(1.0, 8.0), (1, 2))
        assert np.allclose(rates, expected)

    def test_spatial_weight_farthest_pair(self):
        net = tiny_network(L=2, dist=100.0)
        theta = spatial_weights(net, 6.5)
        assert theta[0, 1] == pytest.approx(np.exp(-6.5), abs=1e-12)
        assert theta[0, 0] == 0.0

    def test_poisson_moments(self):
        net = tiny_network(L=2)
        params = arrival_params(L=2, kappa0=12.0)
        rng = np.random.default_rng(42)
        rates, arrivals = generate_arrival_rates(params, net, 1, 300, rng)
        # conditional on the rate, arrivals are Poisson; check aggregate mean
        assert arrivals.mean() == pytest.approx(rates.mean(), rel=0.05)
        assert np.all(rates >= 0)
        assert np.all(arrivals >= 0)

    def test_same_seed_same_paths(self):
        net = tiny_network(L=3)
        params = arrival_params(L=3)
        r1, a1 = generate_arrival_rates(params, net, 1, 50, np.random.default_rng(9))
        r2, a2 = generate_arrival_rates(params, net, 1, 50, np.random.default_rng(9))
        assert np.array_equal(r1, r2) and np.array_equal(a1, a2)


class TestCensus:
    def trans(self, L=2, probs=TABLE_PROBS):
        return TransitionModel.stationary(probs, SPLIT, L)

    def test_discharge_everything_in_one_step(self):
        probs = np.zeros((3, 4))
        probs[:, 3] = 1.0
        tm = TransitionModel.stationary(probs, SPLIT, 1)
        census, _, _ = simulate_census(
            np.array([[10, 5, 3]]), np.zeros((1, 4), dtype=int), tm, 1, np.random.default_rng(0)
        )
        assert census[0, :, 1].sum() == 0

    def test_identity_transitions_keep_census(self):
        probs = np.eye(3, 4)
        tm = TransitionModel.stationary(probs, SPLIT, 1)
        census, _, _ = simulate_census(
            np.array([[7, 2, 1]]), np.zeros((1, 5), dtype=int), tm, 1, np.random.default_rng(0)
        )
        assert np.all(census[0, :, -1] == [7, 2, 1])

    def test_exact_patient_conservation(self):
        rng = np.random.default_rng(11)
        tm = self.trans()
        arrivals = rng.poisson(20, size=(2, 500))
        census, by_unit, moves = simulate_census(np.array([[30, 9, 4], [40, 12, 6]]), arrivals, tm, 1, rng)
        for d in range(500):
            for i in range(2):
                inflow = by_unit[i, :, d].sum()
                discharged = moves[i, :, 3, d].sum()
                assert census[i, :, d + 1].sum() == census[i, :, d].sum() + inflow - discharged
        assert by_unit.sum() == arrivals.sum()

    def test_multinomial_split_proportions(self):
        # 3-sigma check on the arrival split over many replications
        rng = np.random.default_rng(5)
        tm = self.trans(L=1)
        n_rep, lam = 10000, 50
        arrivals = np.full((1, n_rep), lam)
        _, by_unit, _ = simulate_census(np.array([[0, 0, 0]]), arrivals, tm, 1, rng)
        counts = by_unit[0].sum(axis=1)
        total = counts.sum()
        for u in range(3):
            p = SPLIT[u]
            sigma = np.sqrt(total * p * (1 - p))
            assert abs(counts[u] - total * p) < 3 * sigma

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            TransitionModel.stationary(np.full((3, 4), 0.3), SPLIT, 2)


class TestDemandAndCapacity:
    def test_demand_zero_census(self):
        assert nurse_demand(np.zeros((3, 3))).sum() == 0.0

    def test_demand_ratio_arithmetic(self):
        assert nurse_demand(np.array([[30, 9, 4]]))[0] == pytest.approx(6 + 3 + 2)

    def test_demand_one_nurse_per_unit(self):
        assert nurse_demand(np.array([[5, 3, 2]]))[0] == pytest.approx(3.0)

    def test_flat_demand_keeps_capacity(self):
        demand = np.full((2, 35), 10.0)
        cap = generate_capacity(demand, np.array([12, 20]), np.array([0.11, 0.17]), 5)
        assert np.all(cap == np.array([[12] * 5, [20] * 5]))

    def test_upward_step_scaling(self):
        # weekly mean jumps by 10 between weeks 1 and 2: week 3 moves 2*scale*10
        demand = np.concatenate([np.full((1, 7), 10.0), np.full((1, 14), 20.0)], axis=1)
        cap = generate_capacity(demand, np.array([40]), np.array([0.11]), 3)
        assert cap[0, 2] == round(40 + 2 * 0.11 * 10)

    def test_asymmetric_down_step(self):
        demand = np.concatenate([np.full((1, 7), 20.0), np.full((1, 14), 10.0)], axis=1)
        cap = generate_capacity(demand, np.array([40]), np.array([0.5]), 3)
        assert cap[0, 2] == round(40 - 0.8 * 0.5 * 10)

    def test_capacity_never_negative(self):
        demand = np.concatenate([np.full((1, 7), 100.0), np.full((1, 28), 0.0)], axis=1)
        cap = generate_capacity(demand, np.array([5]), np.array([1.0]), 5)
        assert np.all(cap >= 0)


def small_testing_path(seed=0, weeks=4, L=2, kappa0=25.0, c_peak=1.4):
    net = tiny_network(L=L)
    params = arrival_params(L=L, kappa0=kappa0, c_peak=c_peak, t_peak=14, t_end=21)
    tm = TransitionModel.stationary(TABLE_PROBS, SPLIT, L)
    return generate_testing_path(
        network=net,
        arrival_params=params,
        transitions=tm,
        weeks=weeks,
        warmup_days=21,
        capacity_initial=np.array([15] * L),
        capacity_scale=np.array([0.12] * L),
        rng=np.random.default_rng(seed),
    )


class TestTestingPath:
    def test_shapes_and_nonnegativity(self):
        path = small_testing_path()
        assert path.demand.shape == (2, 21 + 28)
        assert path.capacity.shape == (2, 4)
        assert np.all(path.demand >= 0) and np.all(path.capacity >= 0)

    def test_day_indexing(self):
        path = small_testing_path()
        assert path.col(1) == 21
        assert path.col(1 - 21) == 0
        with pytest.raises(ValueError):
            path.col(29 * 7)

    def test_deterministic_in_seed(self):
        p1 = small_testing_path(seed=3)
        p2 = small_testing_path(seed=3)
        assert np.array_equal(p1.demand, p2.demand)
        assert np.array_equal(p1.capacity, p2.capacity)

    def test_stationary_config_has_stable_weekly_means(self):
        # no surge, no spread: weekly demand means should drift < 5%
        net = tiny_network(L=2)
        params = arrival_params(L=2, kappa0=30.0, c_peak=1.0, spatial_seed_frac=0.0)
        tm = TransitionModel.stationary(TABLE_PROBS, SPLIT, 2)
        acc = np.zeros(4)
        n = 60
        for s in range(n):
            path = generate_testing_path(
                network=net,
                arrival_params=params,
                transitions=tm,
                weeks=4,
                warmup_days=21,
                capacity_initial=np.array([15, 15]),
                capacity_scale=np.array([0.1, 0.1]),
                rng=np.random.default_rng(1000 + s),
            )
            horizon = path.demand[:, path.warmup_days :]
            acc += horizon.reshape(2, 4, 7).mean(axis=(0, 2))
        acc /= n
        assert acc.max() / acc.min() - 1 < 0.05


class TestEstimation:
    def test_exact_repeats_recovered(self):
        # a window of identical weeks gives back that week's empirical rates
        path = small_testing_path(seed=7)
        week = slice(path.col(1), path.col(1) + 7)
        for rep in range(3):
            lo = path.col(1 - 21) + rep * 7
            path.arrivals_by_unit[:, :, lo : lo + 7] = path.arrivals_by_unit[:, :, week]
            path.moves[:, :, :, lo : lo + 7] = path.moves[:, :, :, week]
            path.census[:, :, lo : lo + 7] = path.census[:, :, week]
        est = estimate_rolling_params(path, 1, 3)
        days = np.arange(1, 8)
        for y in range(7):
            col = path.col(int(days[(days - 1) % 7 == y][0]))
            expect = path.arrivals_by_unit[:, :, col].sum(axis=1)
            assert np.allclose(est.lam_hat[:, y], expect)

    def test_estimates_converge_to_truth(self):
        # long stationary window: empirical rates land within 5% / 3 sigma
        net = tiny_network(L=1)
        params = arrival_params(L=1, kappa0=40.0, c_peak=1.0, spatial_seed_frac=0.0)
        tm = TransitionModel.stationary(TABLE_PROBS, SPLIT, 1)
        path = generate_testing_path(
            network=net,
            arrival_params=params,
            transitions=tm,
            weeks=30,
            warmup_days=21,
            capacity_initial=np.array([15]),
            capacity_scale=np.array([0.0]),
            rng=np.random.default_rng(123),
        )
        est = estimate_rolling_params(path, 30 * 7 + 1, 30, week_period=7)
        assert np.allclose(est.q_hat[0], SPLIT, atol=0.05)
        for u in range(3):
            assert np.allclose(est.move_hat[0, u, :, :].mean(axis=1), TABLE_PROBS[u], atol=0.05)

    def test_zero_denominator_falls_back(self):
        path = small_testing_path(seed=5)
        path.census[:, 2, :] = 0  # empty every ICU in the window
        path.moves[:, 2, :, :] = 0
        prev = FlowEstimates(
            lam_hat=np.full((2, 7), 9.0),
            q_hat=np.tile(SPLIT, (2, 1)),
            move_hat=np.tile(np.array([0.1, 0.2, 0.3, 0.4])[None, None, :, None], (2, 3, 1, 7)),
        )
        est = estimate_rolling_params(path, 8, 3, previous=prev)
        assert np.allclose(est.move_hat[:, 2, :, :], prev.move_hat[:, 2, :, :])
        est2 = estimate_rolling_params(path, 8, 3, previous=None)
        assert np.allclose(est2.move_hat[:, 2, :, :], 0.25)

    def test_insufficient_history_raises(self):
        path = small_testing_path()
        with pytest.raises(ValueError):
            estimate_rolling_params(path, 1, 4)  # only 3 warm-up weeks exist


class TestTrainingPaths:
    def estimates(self, L=2):
        return FlowEstimates(
            lam_hat=np.full((L, 7), 20.0),
            q_hat=np.tile(SPLIT, (L, 1)),
            move_hat=np.tile(TABLE_PROBS[None, :, :, None], (L, 1, 1, 7)),
        )

    def test_empty_request(self):
        out = generate_training_paths(
            self.estimates(), np.zeros((2, 3), dtype=int), 0, 7, 1, np.random.default_rng(0)
        )
        assert len(out) == 0

    def test_deterministic_estimates_give_identical_paths(self):
        est = self.estimates()
        est.lam_hat[:] = 0.0  # no arrivals
        probs = np.eye(3, 4)  # nobody moves
        est.move_hat = np.tile(probs[None, :, :, None], (2, 1, 1, 7))
        start = np.array([[10, 3, 2], [5, 1, 1]])
        out = generate_training_paths(est, start, 4, 5, 1, np.random.default_rng(0))
        for p in out.paths[1:]:
            assert np.array_equal(p, out.paths[0])

    def test_first_day_demand_equals_current_state(self):
        est = self.estimates()
        start = np.array([[30, 9, 4], [10, 3, 2]])
        out = generate_training_paths(est, start, 3, 4, 5, np.random.default_rng(1))
        for p in out.paths:
            assert p[0, 0] == pytest.approx(11.0)

    def test_mean_tracks_estimates(self):
        # one-unit system: stationary census mean ~ lam * q / discharge rate
        est = self.estimates(L=1)
        start = np.array([[21, 10, 5]])
        rng = np.random.default_rng(3)
        out = generate_training_paths(est, start, 3000, 2, 1, rng)
        second_day = np.array([p[0, 1] for p in out.paths])
        expected_census = (
            est.lam_hat[0, 0] * est.q_hat[0]
            + np.array([21, 10, 5]) @ est.move_hat[0, :, :3, 0]
        )
        expected_demand = expected_census @ np.array([1 / 5, 1 / 3, 1 / 2])
        assert second_day.mean() == pytest.approx(expected_demand, rel=0.02)


class TestCsvRoundTrip:
    def test_demand_paths(self, tmp_path):
        rng = np.random.default_rng(0)
        demands = {0: rng.uniform(0, 9, (2, 5)), 1: rng.uniform(0, 9, (2, 5))}
        f = tmp_path / "demand.csv"
        save_paths_csv(f, demands, first_day=-1)
        loaded, first = load_paths_csv(f)
        assert first == -1
        for k in demands:
            assert np.array_equal(loaded[k], demands[k])

    def test_capacity(self, tmp_path):
        caps = {0: np.array([[3, 4], [5, 6]])}
        f = tmp_path / "capacity.csv"
        save_capacity_csv(f, caps)
        loaded = load_capacity_csv(f)
        assert np.array_equal(loaded[0], caps[0])
