"""Gibbs sampling coupled with a projected multiplier update (the GL loop).

The multiplier update at iteration ``t = 1, 2, ...`` is

    lambda <- clip(lambda + a(t) * (|B(t-1)| - nbar), lower, upper)

i.e. it reacts to the weight of the configuration *before* the Gibbs step of
the same iteration.  The GPL loop in :mod:`sensorgibbs.gpl` uses the weight
after the step instead; both follow their own listings.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

from .analysis import exact_gibbs_distribution
from .errors import Infeasible, TooLarge
from .gibbs import EnergyTable, GibbsChainState, bg_step
from .model import ENUM_LIMIT, Configuration, popcounts, sensor_bit

MseFunction = Union[np.ndarray, Callable[[int], float], EnergyTable]


@dataclass(frozen=True)
class PowerSchedule:
    """Step sequence ``coef / t**exponent`` for ``t >= 1``."""

    coef: float
    exponent: float

    def __call__(self, t) -> float:
        if t < 1:
            raise ValueError("step sequences are indexed from t = 1")
        return self.coef / t**self.exponent

    def is_robbins_monro(self) -> bool:
        """Non-summable and square-summable (``0.5 < exponent <= 1``)."""
        return self.coef > 0 and 0.5 < self.exponent <= 1.0


def as_energy(f: MseFunction, n: int, lam: float = 0.0) -> EnergyTable:
    if isinstance(f, EnergyTable):
        return f.with_lambda(lam)
    return EnergyTable(n, f, lam)


@dataclass(frozen=True)
class GlConfig:
    beta: float
    nbar: float
    step: PowerSchedule = field(default_factory=lambda: PowerSchedule(1.0, 1.0))
    lower: float = 0.0
    upper: float = math.inf
    lambda0: float = 0.0
    horizon: int = 1000

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.step.is_robbins_monro():
            raise ValueError("step sequence must satisfy sum a = inf, sum a^2 < inf (exponent in (0.5, 1])")
        if not 0 <= self.lower < self.upper:
            raise ValueError("projection bounds need 0 <= lower < upper")
        if not self.lower <= self.lambda0 <= self.upper:
            raise ValueError("lambda0 must lie inside the projection bounds")


@dataclass(frozen=True)
class GlState:
    chain: GibbsChainState
    lam: float
    prev_weight: int

    @classmethod
    def initial(cls, cfg: GlConfig, n: int, mask: int = 0) -> "GlState":
        chain = GibbsChainState(mask=mask, n=n, beta=cfg.beta)
        return cls(chain=chain, lam=cfg.lambda0, prev_weight=chain.weight)


def gl_step(state: GlState, f: MseFunction, cfg: GlConfig, rng: np.random.Generator) -> GlState:
    """One GL iteration: a Gibbs update under ``h_lambda(t)``, then the multiplier update."""
    n = state.chain.n
    energy = as_energy(f, n, state.lam)
    prev = state.chain.weight
    chain = bg_step(state.chain, energy, rng)
    t = chain.step_count
    lam = min(max(state.lam + cfg.step(t) * (prev - cfg.nbar), cfg.lower), cfg.upper)
    return GlState(chain=chain, lam=lam, prev_weight=prev)


@dataclass
class GlTrace:
    masks: np.ndarray  # B(0..horizon)
    lambdas: np.ndarray  # lambda(0..horizon)

    @property
    def weights(self) -> np.ndarray:
        return popcounts_of(self.masks)


def popcounts_of(masks: np.ndarray) -> np.ndarray:
    return np.array([int(m).bit_count() for m in masks.tolist()], dtype=np.int64)


def run_gl(
    f: MseFunction,
    n: int,
    cfg: GlConfig,
    rng: np.random.Generator,
    start: int | None = None,
    horizon: int | None = None,
) -> GlTrace:
    """Run GL for ``horizon`` iterations; ``start`` defaults to a uniform random configuration."""
    horizon = cfg.horizon if horizon is None else horizon
    if start is None:
        start = int(rng.integers(2**n))
    energy = as_energy(f, n)
    if n <= ENUM_LIMIT:
        ftab = energy.dense_f().tolist()
        fv = ftab.__getitem__
    else:
        fv = energy.f
    js = rng.integers(n, size=horizon).tolist()
    us = rng.random(horizon).tolist()
    bits = [sensor_bit(j, n) for j in range(n)]
    beta, nbar, lo, hi = cfg.beta, cfg.nbar, cfg.lower, cfg.upper
    a0, p = cfg.step.coef, cfg.step.exponent
    lam = cfg.lambda0
    mask = start
    masks = [mask]
    lams = [lam]
    exp = math.exp
    for t in range(1, horizon + 1):
        prev = mask.bit_count()
        b = bits[js[t - 1]]
        on, off = mask | b, mask & ~b
        # beta * (h(off) - h(on)); the lambda term contributes -lambda per extra bit
        d = beta * (fv(off) - fv(on) - lam)
        if d >= 0:
            pr = 1.0 / (1.0 + exp(-d))
        else:
            e = exp(d) if d > -745 else 0.0
            pr = e / (1.0 + e)
        mask = on if us[t - 1] < pr else off
        lam = lam + a0 / t**p * (prev - nbar)
        lam = lo if lam < lo else (hi if lam > hi else lam)
        masks.append(mask)
        lams.append(lam)
    return GlTrace(np.array(masks, dtype=np.int64), np.array(lams))


class LambdaStar(NamedTuple):
    value: float
    bracket_width: float
    mean_weight: float


def _g(energy: EnergyTable, beta: float, lam: float) -> float:
    return exact_gibbs_distribution(energy.with_lambda(lam), beta).mean_weight()


def solve_lambda_star(
    f: MseFunction, beta: float, nbar: float, n: int, tol: float = 1e-6, max_lambda: float = 1e12
) -> LambdaStar:
    """Bisection for the multiplier at which the Gibbs mean weight equals ``nbar``.

    The mean weight is continuous and non-increasing in the multiplier, so
    bisection on an upper bracket found by doubling is sound.
    """
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    energy = as_energy(f, n)
    g0 = _g(energy, beta, 0.0)
    if abs(g0 - nbar) <= tol:
        return LambdaStar(0.0, 0.0, g0)
    if g0 < nbar:
        raise Infeasible(f"mean weight at lambda=0 is {g0:.6g} < nbar={nbar}")
    lo, hi = 0.0, 1.0
    g_hi = _g(energy, beta, hi)
    while g_hi > nbar:
        lo, hi = hi, 2.0 * hi
        if hi > max_lambda:
            raise Infeasible(f"no multiplier up to {max_lambda:g} brings the mean weight down to {nbar}")
        g_hi = _g(energy, beta, hi)
    while True:
        mid = 0.5 * (lo + hi)
        g_mid = _g(energy, beta, mid)
        if abs(g_mid - nbar) <= tol or hi - lo <= 4 * np.finfo(float).eps * max(1.0, hi):
            return LambdaStar(mid, hi - lo, g_mid)
        if g_mid > nbar:
            lo = mid
        else:
            hi = mid


def check_projection_bounds(lam_star: float, lower: float, upper: float) -> bool:
    """Warn when the target multiplier is not strictly inside the projection interval."""
    inside = lower < lam_star < upper
    if not inside:
        warnings.warn(
            f"lambda*={lam_star:.6g} is not inside ({lower}, {upper}); the projected iterate cannot reach it",
            stacklevel=2,
        )
    return inside


@dataclass(frozen=True)
class Certificate:
    """Outcome of checking that a multiplier meets the activation budget exactly."""

    certified: bool
    configurations: tuple[Configuration, ...] = ()
    pmf: tuple[float, ...] = ()
    reason: str = ""


def budget_certificate(
    f: MseFunction, lambda_star: float, nbar: float, n: int, atol: float = 1e-9
) -> Certificate:
    """Find minimisers of ``h_lambda*`` whose (randomised) weight equals ``nbar``.

    Either one minimiser has weight ``nbar`` exactly, or two minimisers with
    weights on either side of ``nbar`` are mixed with the pmf that hits it.
    """
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    h = as_energy(f, n, lambda_star).dense_h()
    argmin = np.flatnonzero(h <= h.min() + atol)
    weights = popcounts(n)[argmin]
    exact = argmin[np.isclose(weights, nbar, atol=1e-12, rtol=0)]
    if exact.size:
        return Certificate(True, (Configuration.from_index(int(exact[0]), n),), (1.0,))
    below = argmin[weights < nbar]
    above = argmin[weights > nbar]
    if below.size == 0 or above.size == 0:
        return Certificate(
            False,
            tuple(Configuration.from_index(int(m), n) for m in argmin),
            reason=f"budget {nbar} outside the minimiser weights [{weights.min()}, {weights.max()}]",
        )
    lo_m = int(below[np.argmax(popcounts(n)[below])])
    hi_m = int(above[np.argmin(popcounts(n)[above])])
    w_lo, w_hi = lo_m.bit_count(), hi_m.bit_count()
    p_lo = (w_hi - nbar) / (w_hi - w_lo)
    return Certificate(
        True,
        (Configuration.from_index(lo_m, n), Configuration.from_index(hi_m, n)),
        (p_lo, 1.0 - p_lo),
    )
