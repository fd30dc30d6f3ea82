import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_energy
from oracles import bg_kernel, bit_tuples, gibbs_probs, mean_weight_bruteforce
from sensorgibbs.analysis import (
    ExactDistribution,
    argmin_configurations,
    bg_transition_matrix,
    dobrushin_coefficient,
    empirical_distribution,
    energy_gap,
    exact_gibbs_distribution,
    mean_weight,
    mixing_bound,
    mode_mass_bound,
    tv_distance,
)
from sensorgibbs.errors import DimensionMismatch, EmptyWindow, NotStochastic, TooLarge
from sensorgibbs.gibbs import EnergyTable, bg_run, energy_range
from sensorgibbs.model import popcounts


class TestExactDistribution:
    def test_zero_beta_is_uniform(self):
        d = exact_gibbs_distribution(random_energy(4, 0), 0.0)
        np.testing.assert_allclose(d.probs, 1 / 16, rtol=1e-14)

    def test_product_form_for_flat_mse(self):
        beta, lam, n = 1.3, 0.7, 4
        d = exact_gibbs_distribution(EnergyTable.constant(n, 0.0, lam), beta)
        q = math.exp(-beta * lam) / (1 + math.exp(-beta * lam))
        w = popcounts(n)
        np.testing.assert_allclose(d.probs, q**w * (1 - q) ** (n - w), rtol=1e-12)

    def test_two_sensor_hand_values(self):
        d = exact_gibbs_distribution(EnergyTable(2, np.array([0.0, 1.0, 1.0, 2.0])), math.log(2))
        np.testing.assert_allclose(d.probs, [4 / 9, 2 / 9, 2 / 9, 1 / 9], rtol=1e-14)

    def test_large_beta_is_stable(self):
        d = exact_gibbs_distribution(random_energy(6, 3), 1000.0)
        assert np.isfinite(d.probs).all() and d.probs.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_direct_normalisation(self, seed):
        e = random_energy(5, seed, lam=0.3)
        np.testing.assert_allclose(exact_gibbs_distribution(e, 2.5).probs, gibbs_probs(e.dense_h().tolist(), 2.5))

    def test_enumeration_cap(self):
        with pytest.raises(TooLarge):
            exact_gibbs_distribution(EnergyTable(21, lambda m: 0.0), 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ExactDistribution(np.array([0.5, 0.6]), 1)
        with pytest.raises(DimensionMismatch):
            ExactDistribution(np.array([1.0]), 1)


class TestTransitionMatrix:
    @pytest.mark.parametrize("seed", range(3))
    def test_rows_sum_to_one(self, seed):
        P = bg_transition_matrix(random_energy(5, seed), 1.0)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_stationary(self, seed):
        e = random_energy(6, seed, lam=0.4)
        pi = exact_gibbs_distribution(e, 3.0).probs
        assert np.max(np.abs(pi @ bg_transition_matrix(e, 3.0) - pi)) <= 1e-10

    def test_zero_beta_fair_flips(self):
        n = 3
        P = bg_transition_matrix(random_energy(n, 1), 0.0)
        for m in range(2**n):
            assert P[m, m] == pytest.approx(0.5)
            for j in range(n):
                assert P[m, m ^ (1 << j)] == pytest.approx(1 / (2 * n))

    def test_matches_tuple_oracle(self):
        e = random_energy(4, 7, lam=0.2)
        ref = bg_kernel(lambda bits: e.h(int("".join(map(str, bits)), 2)), 4, 1.9)
        np.testing.assert_allclose(bg_transition_matrix(e, 1.9), ref, atol=1e-14)

    def test_matrix_cap(self):
        with pytest.raises(TooLarge):
            bg_transition_matrix(EnergyTable.constant(13), 1.0)

    def test_detailed_balance(self):
        e = random_energy(6, 11)
        pi = exact_gibbs_distribution(e, 2.0).probs
        flow = pi[:, None] * bg_transition_matrix(e, 2.0)
        assert np.max(np.abs(flow - flow.T)) <= 1e-12


class TestDobrushin:
    def test_identity(self):
        assert dobrushin_coefficient(np.eye(3)) == 1.0

    def test_identical_rows(self):
        assert dobrushin_coefficient(np.tile([0.2, 0.3, 0.5], (3, 1))) == pytest.approx(0.0, abs=1e-15)

    def test_two_state_arithmetic(self):
        assert dobrushin_coefficient(np.array([[0.9, 0.1], [0.2, 0.8]])) == pytest.approx(0.7)

    def test_not_stochastic(self):
        with pytest.raises(NotStochastic):
            dobrushin_coefficient(np.array([[0.5, 0.4], [0.5, 0.5]]))
        with pytest.raises(NotStochastic):
            dobrushin_coefficient(np.ones((2, 3)) / 3)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_in_unit_interval_and_contracts(self, k, seed):
        rng = np.random.default_rng(seed)
        P = rng.random((k, k))
        P /= P.sum(axis=1, keepdims=True)
        d = dobrushin_coefficient(P)
        assert 0.0 <= d <= 1.0
        p, q = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        assert tv_distance(p @ P, q @ P) <= d * tv_distance(p, q) + 1e-12

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_n_step_block_bound(self, n):
        e = random_energy(n, n)
        beta = 0.7
        block = np.linalg.matrix_power(bg_transition_matrix(e, beta), n)
        delta = energy_range(e)
        assert dobrushin_coefficient(block) <= 1 - math.exp(-beta * n * delta) / n**n + 1e-12


class TestDistancesAndBounds:
    def test_tv_examples(self):
        assert tv_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
        assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
        assert tv_distance([0.75, 0.25], [0.5, 0.5]) == pytest.approx(0.25)
        with pytest.raises(DimensionMismatch):
            tv_distance([1.0], [0.5, 0.5])

    def test_mixing_bound_examples(self):
        assert mixing_bound(1.0, 3, 2.0, 0) == 1.0
        assert mixing_bound(0.0, 1, 5.0, 4) == 0.0
        assert mixing_bound(1.0, 2, 1.0, 3) == pytest.approx((1 - math.exp(-2) / 4) ** 3)
        assert mixing_bound(1.0, 2, 1.0, 3) == pytest.approx(0.90189, abs=5e-6)

    def test_mode_mass_examples(self):
        assert mode_mass_bound(math.inf, 3, 0.1) == 1.0
        assert mode_mass_bound(0.0, 3, 0.1) == pytest.approx(1 / 8)
        assert mode_mass_bound(math.log(3), 2, 1.0) == pytest.approx(0.5)

    def test_gap_and_argmin(self):
        e = EnergyTable(2, np.array([2.0, 1.0, 1.0, 2.0]), lam=0.25)
        assert argmin_configurations(e).tolist() == [1, 2]
        assert energy_gap(e) == pytest.approx(0.75)


class TestEmpirical:
    def test_point_mass(self):
        d = empirical_distribution([3, 3, 3], 0, 2)
        assert d[3] == 1.0

    def test_burn_in_window(self):
        with pytest.raises(EmptyWindow):
            empirical_distribution([1, 2], 2, 2)
        assert empirical_distribution([0, 1, 1, 1], 1, 1).probs.tolist() == [0.0, 1.0]

    def test_long_bg_run(self):
        e = random_energy(4, 5)
        traj = bg_run(e, 2.0, 1_000_000, np.random.default_rng(0))
        assert tv_distance(empirical_distribution(traj, 1000, 4), exact_gibbs_distribution(e, 2.0)) <= 0.01


def test_mean_weight_matches_bruteforce():
    e = random_energy(5, 2)
    assert mean_weight(e.with_lambda(0.8), 2.0) == pytest.approx(mean_weight_bruteforce(e.dense_f(), 0.8, 2.0, 5))


def test_bit_tuples_follow_mask_order():
    assert [int("".join(map(str, b)), 2) for b in bit_tuples(3)] == list(range(8))
