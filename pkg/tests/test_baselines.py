import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import covariance_energy, random_energy
from oracles import bit_tuples, tuple_to_mask
from sensorgibbs.baselines import (
    greedy1,
    greedy2,
    greedy2_cardinality,
    opt_exhaustive,
    opt_scalar_mse,
    opt_shell,
)
from sensorgibbs.errors import TooLarge
from sensorgibbs.model import SensorNoise, y_b_scalar

HAND = np.array([2.0, 1.0, 1.0, 2.0])


class TestGreedy1:
    def test_expensive_sensors_stay_off(self):
        e, _ = covariance_energy(5, 0)
        r = greedy1(e, 1e6, 5)
        assert r.configuration.weight == 0 and r.cost == e.f(0)

    def test_free_sensors_all_on(self):
        e, _ = covariance_energy(5, 1)
        assert greedy1(e, 0.0, 5).configuration.weight == 5

    @pytest.mark.parametrize("n", [3, 6, 8])
    def test_evaluation_count(self, n):
        e, _ = covariance_energy(n, n)
        assert greedy1(e, 0.5, n).evaluations == n + 1

    def test_serial_order_can_be_suboptimal(self):
        # sensor 0 helps a little and then blocks the much better sensor 1
        f = np.array([3.0, 2.5, 1.0, 0.95, 2.4, 2.3, 2.2, 0.9])
        r = greedy1(f, 0.5, 3)
        best = opt_exhaustive(f, 0.5, 3)
        assert r.configuration.index == 0b100 and r.cost == pytest.approx(2.9)
        assert best.configuration.index == 0b010 and r.cost > best.cost

    def test_ties_do_not_add_under_strict_rule(self):
        f = np.array([1.0, 1.0, 1.0, 1.0])
        assert greedy1(f, 0.0, 2).configuration.weight == 0
        assert greedy1(f, 0.0, 2, weak=True).configuration.weight == 2


class TestGreedy2:
    def test_hand_instance(self):
        r = greedy2(HAND, 0.25, 2)
        assert r.configuration.index == 0b10  # sensor 0 is tried first and wins the tie
        assert r.cost == pytest.approx(1.25)

    def test_expensive_sensors_stay_off(self):
        e, _ = covariance_energy(6, 2)
        assert greedy2(e, 1e6, 6).configuration.weight == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_evaluation_bound_and_early_stop(self, seed):
        n = 7
        e, _ = covariance_energy(n, seed)
        full = greedy2(e, 1.5, n)
        short = greedy2(e, 1.5, n, stop_early=True)
        assert full.evaluations <= n * (n + 1) // 2 + 1
        assert (full.configuration, full.cost) == (short.configuration, short.cost)

    def test_all_rounds_with_free_sensors(self):
        e, _ = covariance_energy(6, 4)
        r = greedy2(e, 0.0, 6)
        assert r.configuration.weight == 6 and r.evaluations == 6 * 7 // 2 + 1

    @pytest.mark.parametrize("seed", range(20))
    def test_never_beats_exhaustive(self, seed):
        e, _ = covariance_energy(6, seed)
        best = opt_exhaustive(e, 2.0, 6).cost
        assert greedy2(e, 2.0, 6).cost >= best - 1e-12
        assert greedy1(e, 2.0, 6).cost >= best - 1e-12

    def test_cost_is_reproducible(self):
        e, _ = covariance_energy(6, 9)
        r = greedy2(e, 0.7, 6)
        assert r.cost == pytest.approx(e.f(r.configuration.index) + 0.7 * r.configuration.weight)


class TestCardinality:
    def test_full_budget(self):
        e, _ = covariance_energy(5, 0)
        assert greedy2_cardinality(e, 5, 5).configuration.weight == 5

    def test_single_sensor(self):
        e, _ = covariance_energy(6, 3)
        r = greedy2_cardinality(e, 1, 6)
        singles = [e.f(1 << (5 - k)) for k in range(6)]
        assert r.cost == min(singles)
        assert r.configuration.active == (int(np.argmin(singles)),)

    @pytest.mark.parametrize("seed", range(20))
    def test_never_beats_shell_optimum(self, seed):
        e, _ = covariance_energy(6, seed)
        assert greedy2_cardinality(e, 3, 6).cost >= opt_shell(e, 3, 6).cost - 1e-12

    def test_rejects_impossible_budget(self):
        with pytest.raises(ValueError):
            greedy2_cardinality(HAND, 3, 2)


class TestExhaustive:
    def test_flat_zero_mse(self):
        r = opt_exhaustive(np.zeros(8), 0.3, 3)
        assert r.configuration.index == 0 and r.cost == 0.0 and r.evaluations == 8

    def test_hand_instance_lexicographic_tie(self):
        r = opt_exhaustive(HAND, 0.25, 2)
        assert str(r.configuration) == "01" and r.cost == pytest.approx(1.25)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
    def test_matches_tuple_enumeration(self, n, seed, lam):
        e = random_energy(n, seed % 1000)
        f = e.dense_f()
        best = min(bit_tuples(n), key=lambda b: (f[tuple_to_mask(b)] + lam * sum(b), b))
        r = opt_exhaustive(e, lam, n)
        assert r.configuration.index == tuple_to_mask(best)
        assert r.cost == pytest.approx(e.f(r.configuration.index) + lam * r.configuration.weight)

    def test_shell_matches_combinations(self):
        e = random_energy(6, 5)
        f = e.dense_f()
        masks = [sum(1 << (5 - j) for j in c) for c in itertools.combinations(range(6), 3)]
        r = opt_shell(e, 3, 6)
        assert r.cost == min(f[m] for m in masks) and r.evaluations == 20
        assert r.configuration.weight == 3

    def test_enumeration_cap(self):
        with pytest.raises(TooLarge):
            opt_exhaustive(lambda m: 0.0, 0.0, 21)
        with pytest.raises(TooLarge):
            opt_shell(lambda m: 0.0, 2, 21)


class TestScalarOpt:
    def test_picks_least_noisy(self):
        noise = SensorNoise(np.array([0.3, 0.1, 0.4, 0.05, 0.2]))
        r = opt_scalar_mse(0.5, noise, 2)
        assert r.configuration.active == (1, 3)
        assert r.cost == pytest.approx(y_b_scalar(0.5, noise, r.configuration))

    def test_matches_shell_enumeration(self):
        noise = SensorNoise(np.random.default_rng(0).uniform(0, 0.5, 8))
        shell = opt_shell(lambda m: y_b_scalar(0.5, noise, m), 4, 8)
        assert opt_scalar_mse(0.5, noise, 4).cost == pytest.approx(shell.cost, rel=1e-12)

    def test_large_network(self):
        noise = SensorNoise(np.linspace(0.5, 0.01, 30))
        r = opt_scalar_mse(0.5, noise, 3)
        assert r.configuration.active == (27, 28, 29)
