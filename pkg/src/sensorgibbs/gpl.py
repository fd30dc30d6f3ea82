"""Gibbs sampling with parameter learning for an unknown prior parameter.

Four coupled iterates run on separate timescales: the configuration chain
(fastest), the per-configuration MSE table ``f``, the multiplier ``lambda``,
and the prior parameter ``theta`` (slowest, updated by SPSA from a full
sensor read once every ``T`` slots).

Step-size indexing: ``a``, ``c`` and ``d`` are evaluated at the full-read
counter ``nu >= 1`` (the low-complexity variant evaluates ``a`` at the
per-configuration counter instead), ``b`` at ``t + 1`` for slot ``t >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constrained import PowerSchedule
from .errors import ScheduleViolation
from .model import (
    SensorNoise,
    _posterior_from_terms,
    bit_matrix,
    loglik_full_many,
    loglik_subset,
    precision_table,
    sensor_bit,
    y_b_table,
)

VARIANTS = ("full", "low")


@dataclass(frozen=True)
class ScheduleQuadruple:
    a: PowerSchedule
    b: PowerSchedule
    c: PowerSchedule
    d: PowerSchedule
    T: int


def validate_schedules(s: ScheduleQuadruple) -> list[str]:
    """Names of the violated step-size conditions (empty list means valid).

    Condition names:
    ``positive:<seq>``  coefficient must be positive;
    ``i:<seq>``         sum diverges (exponent <= 1) for a, b, c;
    ``ii:<seq>``        squares summable (exponent > 1/2) for a, b, c;
    ``iii``             d(t) -> 0 (exponent > 0);
    ``iv``              sum c^2/d^2 < inf, i.e. 2 (p_c - p_d) > 1;
    ``v:b/a``           b(t)/a(t) -> 0;
    ``v:c/b``           c(floor(t/T))/b(t) -> 0;
    ``T``               T is a positive integer.
    """
    bad = []
    for name in "abcd":
        if not getattr(s, name).coef > 0:
            bad.append(f"positive:{name}")
    for name in "abc":
        if getattr(s, name).exponent > 1.0:
            bad.append(f"i:{name}")
    for name in "abc":
        if getattr(s, name).exponent <= 0.5:
            bad.append(f"ii:{name}")
    if s.d.exponent <= 0.0:
        bad.append("iii")
    if not 2.0 * (s.c.exponent - s.d.exponent) > 1.0:
        bad.append("iv")
    # ratios of power laws vanish iff the numerator decays strictly faster
    if not s.b.exponent > s.a.exponent:
        bad.append("v:b/a")
    if not s.c.exponent > s.b.exponent:
        bad.append("v:c/b")
    if not (isinstance(s.T, (int, np.integer)) and s.T >= 1):
        bad.append("T")
    return bad


@dataclass(frozen=True)
class GplConfig:
    schedules: ScheduleQuadruple
    beta: float
    nbar: float
    A0: float = 2.0
    theta_lo: tuple = (0.0,)
    theta_hi: tuple = (0.8,)
    theta_init: tuple = (0.2,)
    lambda0: float = 0.05
    sweeps_per_slot: int = 10
    horizon: int = 200_000
    variant: str = "full"
    update_theta: bool = True

    def __post_init__(self):
        bad = validate_schedules(self.schedules)
        if bad:
            raise ScheduleViolation("step sizes violate: " + ", ".join(bad))
        lo, hi, init = (np.asarray(v, dtype=float) for v in (self.theta_lo, self.theta_hi, self.theta_init))
        if not (lo.shape == hi.shape == init.shape) or np.any(lo >= hi):
            raise ValueError("parameter box needs matching shapes and lo < hi")
        if np.any(init < lo) or np.any(init > hi):
            raise ValueError("initial parameter must lie in the parameter box")
        if np.any(hi >= 1.0):
            raise ValueError("parameter upper bound must stay below 1")
        # every posterior variance is at most the prior variance (1 - theta)^2
        if not self.A0 > float(np.max((1.0 - lo) ** 2)):
            raise ValueError(f"A0={self.A0} must exceed the largest prior variance {(1.0 - lo.min()) ** 2}")
        if not 0.0 <= self.lambda0 <= self.A0:
            raise ValueError("lambda0 must lie in [0, A0]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.sweeps_per_slot < 1:
            raise ValueError("sweeps_per_slot must be positive")

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.theta_lo, dtype=float), np.asarray(self.theta_hi, dtype=float)


@dataclass(frozen=True)
class ScalarTruth:
    """Hidden data generator: ``X ~ N(theta0, (1-theta0)^2)``, ``z_k = X + w_k``."""

    theta0: float
    noise: SensorNoise

    def draw(self, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        x = self.theta0 + (1.0 - self.theta0) * rng.standard_normal()
        z = x + self.noise.sigmas * rng.standard_normal(self.noise.n)
        return float(x), z


@dataclass
class GplState:
    mask: int
    lam: float
    theta: np.ndarray
    f_table: np.ndarray
    nu: int
    nu_b: np.ndarray
    t: int
    n: int

    @classmethod
    def initial(cls, cfg: GplConfig, n: int) -> "GplState":
        theta = np.asarray(cfg.theta_init, dtype=float).copy()
        prior_var = float((1.0 - theta[0]) ** 2)
        return cls(
            mask=0,
            lam=cfg.lambda0,
            theta=theta,
            f_table=np.full(2**n, prior_var),
            nu=0,
            nu_b=np.zeros(2**n, dtype=np.int64),
            t=0,
            n=n,
        )

    def copy(self) -> "GplState":
        return GplState(
            self.mask, self.lam, self.theta.copy(), self.f_table.copy(), self.nu, self.nu_b.copy(), self.t, self.n
        )


@dataclass(frozen=True)
class SlotRecord:
    t: int
    mask: int
    weight: int
    squared_error: float
    lam: float
    theta: float
    full_read: bool


def _scalar_loglik(z, theta, sigmas) -> float:
    return loglik_subset(z, float(theta[0]), sigmas)


def spsa_update(
    theta,
    z,
    sched: ScheduleQuadruple,
    nu: int,
    rng: np.random.Generator,
    noise: SensorNoise,
    bounds: tuple,
    loglik: Optional[Callable] = None,
    sigmas=None,
) -> np.ndarray:
    """One projected SPSA ascent step on the log-likelihood of the read ``z``.

    ``loglik(z, theta, sigmas)`` defaults to the scalar Gaussian model;
    ``sigmas`` defaults to all sensors (a full read).  Both perturbed points
    are clipped into the parameter box before evaluation.
    """
    theta = np.asarray(theta, dtype=float)
    lo, hi = (np.asarray(b, dtype=float) for b in bounds)
    loglik = _scalar_loglik if loglik is None else loglik
    sigmas = noise.sigmas if sigmas is None else sigmas
    delta = 2.0 * rng.integers(0, 2, size=theta.shape[0]) - 1.0
    dn = sched.d(nu)
    cn = sched.c(nu)
    plus = np.clip(theta + dn * delta, lo, hi)
    minus = np.clip(theta - dn * delta, lo, hi)
    diff = loglik(z, plus, sigmas) - loglik(z, minus, sigmas)
    grad = diff / (2.0 * dn * delta)
    return np.clip(theta + cn * grad, lo, hi)


def fb_update_full(f_table, theta, noise: SensorNoise, sched: ScheduleQuadruple, nu: int, A0: float,
                   precisions=None) -> np.ndarray:
    """Move every entry toward its closed-form posterior variance under ``theta``."""
    y = y_b_table(float(np.asarray(theta).reshape(-1)[0]), noise, precisions)
    f = np.asarray(f_table, dtype=float)
    return np.clip(f + sched.a(nu) * (y - f), 0.0, A0)


def fb_update_low(f_table, mask: int, theta, noise: SensorNoise, nu_b, sched: ScheduleQuadruple, A0: float,
                  precisions=None) -> tuple[np.ndarray, np.ndarray]:
    """Update only the visited configuration, with its own visit counter.

    Returns new ``(f_table, nu_b)`` arrays.
    """
    if precisions is None:
        precisions = precision_table(noise)
    th = float(np.asarray(theta).reshape(-1)[0])
    nu_b = np.array(nu_b, dtype=np.int64, copy=True)
    f = np.array(f_table, dtype=float, copy=True)
    nu_b[mask] += 1
    y = 1.0 / (1.0 / (1.0 - th) ** 2 + precisions[mask])
    f[mask] = min(max(f[mask] + sched.a(int(nu_b[mask])) * (y - f[mask]), 0.0), A0)
    return f, nu_b


def lambda_update_gpl(lam: float, weight: int, sched: ScheduleQuadruple, t: int, nbar: float, A0: float) -> float:
    """``clip(lam + b(t) (weight - nbar), 0, A0)``."""
    return min(max(lam + sched.b(t) * (weight - nbar), 0.0), A0)


class _Workspace:
    """Per-run constants shared by the slot updates."""

    def __init__(self, cfg: GplConfig, truth: ScalarTruth, n: int):
        self.cfg = cfg
        self.truth = truth
        self.n = n
        self.precisions = precision_table(truth.noise)
        self.bitrows = bit_matrix(n)
        self.bits = [sensor_bit(j, n) for j in range(n)]
        sig = truth.noise.sigmas
        with np.errstate(divide="ignore"):
            self.inv = 1.0 / (sig * sig)
        self.any_perfect = bool(np.any(sig == 0.0))
        self.bounds = cfg.bounds


def _advance(state: GplState, ws: _Workspace, rng: np.random.Generator) -> SlotRecord:
    """Execute one slot in place."""
    cfg = ws.cfg
    sched = cfg.schedules
    noise = ws.truth.noise
    t = state.t
    full_read = t % sched.T == 0

    # 1. Gibbs sweeps against h(B) = f(B) + lam |B|, then estimate X
    js = rng.integers(ws.n, size=cfg.sweeps_per_slot).tolist()
    us = rng.random(cfg.sweeps_per_slot).tolist()
    f = state.f_table
    lam = state.lam
    beta = cfg.beta
    mask = state.mask
    for j, u in zip(js, us):
        b = ws.bits[j]
        on, off = mask | b, mask & ~b
        d = beta * (f[off] - f[on] - lam)
        if d >= 0:
            p = 1.0 / (1.0 + math.exp(-d))
        else:
            e = math.exp(d) if d > -745 else 0.0
            p = e / (1.0 + e)
        mask = on if u < p else off
    state.mask = mask

    x, z = ws.truth.draw(rng)
    row = ws.bitrows[mask]
    theta_t = float(state.theta[0])
    if ws.any_perfect:
        x_hat, _ = _posterior_from_terms(theta_t, noise.sigmas[row], z[row])
    else:
        prior_prec = 1.0 / (1.0 - theta_t) ** 2
        var = 1.0 / (prior_prec + ws.precisions[mask])
        x_hat = var * (theta_t * prior_prec + float(np.dot(ws.inv[row], z[row])))
    sq_err = (x - x_hat) ** 2
    weight = mask.bit_count()

    if full_read:
        state.nu += 1
        # 2. MSE table
        if cfg.variant == "full":
            state.f_table = fb_update_full(state.f_table, state.theta, noise, sched, state.nu, cfg.A0, ws.precisions)
        else:
            state.f_table, state.nu_b = fb_update_low(
                state.f_table, mask, state.theta, noise, state.nu_b, sched, cfg.A0, ws.precisions
            )
        # 3. parameter
        if cfg.update_theta:
            if cfg.variant == "full":
                state.theta = spsa_update(state.theta, z, sched, state.nu, rng, noise, ws.bounds)
            elif weight > 0:
                state.theta = spsa_update(
                    state.theta, z[row], sched, state.nu, rng, noise, ws.bounds, sigmas=noise.sigmas[row]
                )

    # 4. multiplier, driven by the current weight
    state.lam = lambda_update_gpl(state.lam, weight, sched, t + 1, cfg.nbar, cfg.A0)
    state.t = t + 1
    return SlotRecord(t, mask, weight, sq_err, state.lam, float(state.theta[0]), full_read)


def gpl_slot(
    state: GplState, cfg: GplConfig, truth: ScalarTruth, rng: np.random.Generator
) -> tuple[GplState, SlotRecord]:
    """Run one slot and return the new state with the slot record; ``state`` is left untouched."""
    new = state.copy()
    rec = _advance(new, _Workspace(cfg, truth, state.n), rng)
    return new, rec


@dataclass
class GplTrace:
    weights: np.ndarray
    squared_errors: np.ndarray
    lambdas: np.ndarray
    thetas: np.ndarray
    full_reads: np.ndarray
    masks: np.ndarray
    final: GplState = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.weights.shape[0]

    @property
    def full_read_fraction(self) -> float:
        return float(self.full_reads.mean())


def run_gpl(
    cfg: GplConfig,
    truth: ScalarTruth,
    rng: np.random.Generator,
    horizon: int | None = None,
    state: GplState | None = None,
) -> GplTrace:
    """Run the slot loop; identical to iterating :func:`gpl_slot` with the same generator."""
    horizon = cfg.horizon if horizon is None else horizon
    n = truth.noise.n
    state = GplState.initial(cfg, n) if state is None else state.copy()
    ws = _Workspace(cfg, truth, n)
    weights = np.empty(horizon, dtype=np.int64)
    masks = np.empty(horizon, dtype=np.int64)
    errs = np.empty(horizon)
    lams = np.empty(horizon)
    thetas = np.empty(horizon)
    full = np.empty(horizon, dtype=bool)
    for i in range(horizon):
        rec = _advance(state, ws, rng)
        weights[i] = rec.weight
        masks[i] = rec.mask
        errs[i] = rec.squared_error
        lams[i] = rec.lam
        thetas[i] = rec.theta
        full[i] = rec.full_read
    return GplTrace(weights, errs, lams, thetas, full, masks, state)


def g_theta_oracle(theta: float, theta0: float, noise: SensorNoise, samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo expected full-read log-likelihood at ``theta`` when data come from ``theta0``."""
    if samples < 1:
        raise ValueError("samples must be positive")
    x = theta0 + (1.0 - theta0) * rng.standard_normal(samples)
    zs = x[:, None] + noise.sigmas[None, :] * rng.standard_normal((samples, noise.n))
    return float(loglik_full_many(zs, theta, noise).mean())
