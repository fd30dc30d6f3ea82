import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import covariance_energy, random_energy
from sensorgibbs.analysis import exact_gibbs_distribution, mean_weight
from sensorgibbs.constrained import (
    GlConfig,
    GlState,
    PowerSchedule,
    budget_certificate,
    check_projection_bounds,
    gl_step,
    run_gl,
    solve_lambda_star,
)
from sensorgibbs.errors import Infeasible, TooLarge
from sensorgibbs.gibbs import EnergyTable, flip_probability
from sensorgibbs.model import sensor_bit


class TestSchedules:
    def test_indexing_starts_at_one(self):
        with pytest.raises(ValueError):
            PowerSchedule(1.0, 1.0)(0)
        assert PowerSchedule(0.5, 1.0)(4) == 0.125

    @pytest.mark.parametrize("p, ok", [(0.5, False), (0.51, True), (1.0, True), (1.2, False)])
    def test_robbins_monro_exponents(self, p, ok):
        assert PowerSchedule(1.0, p).is_robbins_monro() is ok

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GlConfig(beta=1.0, nbar=2.0, step=PowerSchedule(1.0, 0.5))
        with pytest.raises(ValueError):
            GlConfig(beta=1.0, nbar=2.0, lower=3.0, upper=2.0)
        with pytest.raises(ValueError):
            GlConfig(beta=1.0, nbar=2.0, lambda0=5.0, upper=4.0)


class TestGlStep:
    def test_zero_innovation(self):
        cfg = GlConfig(beta=1.0, nbar=3.0, lambda0=1.0, upper=4.0)
        state = GlState.initial(cfg, 6, 0b111000)
        new = gl_step(state, random_energy(6, 0), cfg, np.random.default_rng(0))
        assert new.lam == 1.0
        assert new.prev_weight == 3

    def test_update_arithmetic(self):
        cfg = GlConfig(beta=1.0, nbar=6.5, step=PowerSchedule(0.1, 1.0), upper=4.0, lambda0=2.0)
        state = GlState.initial(cfg, 10, 0b1111111100)
        new = gl_step(state, random_energy(10, 1), cfg, np.random.default_rng(0))
        assert new.lam == pytest.approx(2.15, abs=1e-15)

    def test_projection_binds(self):
        cfg = GlConfig(beta=1.0, nbar=2.0, upper=4.0, lambda0=4.0)
        state = GlState.initial(cfg, 5, 0b11111)
        assert gl_step(state, random_energy(5, 2), cfg, np.random.default_rng(0)).lam == 4.0

    def test_uses_weight_before_the_step(self):
        # a cold chain empties the configuration in one step, but lambda reacts to the old weight
        cfg = GlConfig(beta=100.0, nbar=0.0, lambda0=0.0, upper=10.0)
        state = GlState.initial(cfg, 1, 1)
        new = gl_step(state, np.array([0.0, 5.0]), cfg, np.random.default_rng(0))
        assert new.chain.mask == 0
        assert new.lam == 1.0

    def test_run_matches_reference_loop(self):
        n, horizon = 5, 400
        e = random_energy(n, 3)
        cfg = GlConfig(beta=2.0, nbar=2.2, step=PowerSchedule(0.8, 0.7), upper=3.0, lambda0=1.5)
        trace = run_gl(e, n, cfg, np.random.default_rng(77), horizon=horizon)

        rng = np.random.default_rng(77)
        mask = int(rng.integers(2**n))
        js = rng.integers(n, size=horizon)
        us = rng.random(horizon)
        lam = cfg.lambda0
        f = e.dense_f()
        for t in range(1, horizon + 1):
            prev = bin(mask).count("1")
            b = sensor_bit(int(js[t - 1]), n)
            on, off = mask | b, mask & ~b
            p = flip_probability(f[on] + lam * bin(on).count("1"), f[off] + lam * bin(off).count("1"), cfg.beta)
            mask = on if us[t - 1] < p else off
            lam = min(max(lam + 0.8 / t**0.7 * (prev - cfg.nbar), 0.0), 3.0)
            assert trace.masks[t] == mask
            assert trace.lambdas[t] == pytest.approx(lam, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 6.0), st.floats(0.1, 5.0))
    def test_lambda_stays_in_bounds(self, seed, nbar, upper):
        cfg = GlConfig(beta=1.0, nbar=nbar, upper=upper, lower=0.0, lambda0=upper / 2, horizon=300)
        trace = run_gl(random_energy(6, seed % 100), 6, cfg, np.random.default_rng(seed))
        assert trace.lambdas.min() >= 0.0 and trace.lambdas.max() <= upper

    def test_weight_average_tracks_budget(self):
        e, _ = covariance_energy(6, 4)
        nbar = mean_weight(e.with_lambda(1.0), 3.0)
        cfg = GlConfig(beta=3.0, nbar=nbar, upper=e.f(0), lambda0=2.0, horizon=50_000)
        means = [run_gl(e, 6, cfg, np.random.default_rng(r)).weights[25_000:].mean() for r in range(10)]
        assert np.mean(means) == pytest.approx(nbar, abs=0.2)


class TestLambdaStar:
    def test_flat_half_budget(self):
        assert solve_lambda_star(EnergyTable.constant(6), 2.0, 3.0, 6).value == 0.0

    @pytest.mark.parametrize("nbar", [1.0, 2.0, 2.9])
    def test_flat_closed_form(self, nbar):
        n, beta = 6, 2.0
        got = solve_lambda_star(EnergyTable.constant(n), beta, nbar, n, tol=1e-12).value
        assert got == pytest.approx(math.log(n / nbar - 1) / beta, abs=1e-9)

    def test_self_consistent_on_covariance_instance(self):
        e, _ = covariance_energy(8, 8)
        ls = solve_lambda_star(e, 5.0, 4.0, 8, tol=1e-8)
        assert abs(mean_weight(e.with_lambda(ls.value), 5.0) - 4.0) <= 1e-8
        assert ls.bracket_width >= 0

    def test_infeasible_budget(self):
        with pytest.raises(Infeasible):
            solve_lambda_star(EnergyTable.constant(4), 1.0, 3.0, 4)

    def test_enumeration_cap(self):
        with pytest.raises(TooLarge):
            solve_lambda_star(EnergyTable(21, lambda m: 0.0), 1.0, 3.0, 21)

    def test_projection_warning(self):
        with pytest.warns(UserWarning):
            assert not check_projection_bounds(5.0, 0.0, 4.0)
        assert check_projection_bounds(2.0, 0.0, 4.0)


class TestBudgetCertificate:
    def test_unique_minimiser_at_budget(self):
        f = np.array([4.0, 1.0, 1.5, 0.5])  # h(11) = 0.5 + 2 lam is the unique minimum at lam = 0.1
        cert = budget_certificate(f, 0.1, 2, 2)
        assert cert.certified and cert.pmf == (1.0,)
        assert cert.configurations[0].index == 0b11

    def test_two_minimisers_mixed(self):
        n = 5
        f = np.full(2**n, 10.0)
        f[0b11100] = 3.0  # weight 3
        f[0b11111] = 1.0  # weight 5
        cert = budget_certificate(f, 1.0, 4.0, n)
        assert cert.certified
        assert [c.weight for c in cert.configurations] == [3, 5]
        assert cert.pmf == pytest.approx((0.5, 0.5))

    def test_budget_outside_minimiser_weights(self):
        f = np.array([4.0, 1.0, 1.5, 0.5])
        cert = budget_certificate(f, 0.1, 1, 2)
        assert not cert.certified and cert.reason


def test_gibbs_mean_weight_decreases_with_price():
    e, _ = covariance_energy(6, 1)
    g = [exact_gibbs_distribution(e.with_lambda(lam), 4.0).mean_weight() for lam in np.linspace(0, 5, 30)]
    assert all(a >= b - 1e-12 for a, b in zip(g, g[1:]))
