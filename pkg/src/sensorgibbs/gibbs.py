"""Gibbs kernels over sensor configurations.

All chains work on integer configuration masks (see :mod:`sensorgibbs.model`
for the bit convention).  The single-step functions are the reference
kernels; the ``*_run`` functions execute many steps with pre-drawn randomness
and are what the long simulations use.  They realise the same transition
law but consume the random stream in a different order, so a run and a loop
of single steps give different (equally distributed) paths for one seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.special import expit

from .errors import InvalidEnergy, ScheduleViolation, TooLarge, WeightViolation
from .model import ENUM_LIMIT, Configuration, popcounts, sensor_bit

INF = math.inf


def flip_probability(h_on: float, h_off: float, beta: float) -> float:
    """Probability of setting the chosen bit: ``1 / (1 + exp(-beta (h_off - h_on)))``."""
    on_inf = math.isinf(h_on)
    off_inf = math.isinf(h_off)
    if on_inf and off_inf:
        raise InvalidEnergy("both candidate configurations have infinite energy")
    if off_inf:
        return 1.0
    if on_inf:
        return 0.0
    d = beta * (h_off - h_on)
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


class EnergyTable:
    """Energy ``h(B) = f(B) + lam * |B|`` over ``n``-sensor configurations.

    ``f`` is either a dense array indexed by configuration mask or a callable
    ``mask -> float``; callables are memoised with a cache bounded at
    ``2**min(n, 20)`` entries.  ``+inf`` entries are allowed and mark
    forbidden configurations.
    """

    def __init__(self, n: int, f: Union[np.ndarray, Callable[[int], float]], lam: float = 0.0):
        self.n = int(n)
        self.lam = float(lam)
        if callable(f) and not isinstance(f, np.ndarray):
            self._f_func = lru_cache(maxsize=2 ** min(self.n, ENUM_LIMIT))(f)
            self._dense = None
        else:
            arr = np.asarray(f, dtype=float)
            if arr.shape != (2**self.n,):
                raise ValueError(f"dense energy must have length 2**{self.n}")
            if np.any(arr < 0) or np.any(np.isnan(arr)):
                raise InvalidEnergy("MSE terms must be nonnegative numbers")
            arr = arr.copy()
            arr.setflags(write=False)
            self._dense = arr
            self._f_func = None

    def f(self, mask: int) -> float:
        if self._dense is not None:
            return float(self._dense[mask])
        return float(self._f_func(mask))

    def h(self, mask: int) -> float:
        return self.f(mask) + self.lam * int(mask).bit_count()

    def dense_f(self) -> np.ndarray:
        if self._dense is None:
            if self.n > ENUM_LIMIT:
                raise TooLarge(f"cannot tabulate 2**{self.n} energies")
            arr = np.array([self._f_func(m) for m in range(2**self.n)], dtype=float)
            arr.setflags(write=False)
            self._dense = arr
        return self._dense

    def dense_h(self) -> np.ndarray:
        f = self.dense_f()
        if self.lam == 0.0:
            return f.copy()
        return f + self.lam * popcounts(self.n)

    def with_lambda(self, lam: float) -> "EnergyTable":
        other = EnergyTable.__new__(EnergyTable)
        other.n = self.n
        other.lam = float(lam)
        other._dense = self._dense
        other._f_func = self._f_func
        return other

    @classmethod
    def constant(cls, n: int, value: float = 0.0, lam: float = 0.0) -> "EnergyTable":
        return cls(n, np.full(2**n, float(value)), lam)

    @classmethod
    def shell(cls, n: int, f, nbar: int) -> "EnergyTable":
        """``f`` on the weight-``nbar`` shell, ``+inf`` elsewhere."""
        base = np.array(f if not callable(f) else [f(m) for m in range(2**n)], dtype=float)
        out = np.where(popcounts(n) == nbar, base, INF)
        return cls(n, out, 0.0)


def energy_range(energy: EnergyTable) -> float:
    """``max |h(B) - h(A)|`` over finite energies."""
    h = energy.dense_h()
    finite = h[np.isfinite(h)]
    return float(finite.max() - finite.min())


@dataclass(frozen=True)
class GibbsChainState:
    mask: int
    n: int
    beta: float
    step_count: int = 0

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise ValueError("beta must be nonnegative")

    @property
    def current(self) -> Configuration:
        return Configuration.from_index(self.mask, self.n)

    @property
    def weight(self) -> int:
        return self.mask.bit_count()


@dataclass(frozen=True)
class AnnealingSchedule:
    """Logarithmic inverse-temperature schedule ``beta(t) = beta0 * log(1 + t)``."""

    beta0: float

    def __post_init__(self):
        if not self.beta0 > 0.0:
            raise ValueError("beta0 must be positive")

    def beta(self, t: int) -> float:
        return self.beta0 * math.log1p(t)

    def check(self, energy: EnergyTable) -> None:
        spread = energy_range(energy)
        if self.beta0 * energy.n * spread >= 1.0:
            raise ScheduleViolation(
                f"beta0 * N * Delta = {self.beta0 * energy.n * spread:.4g} must be < 1"
            )


def bg_step(state: GibbsChainState, energy: EnergyTable, rng: np.random.Generator) -> GibbsChainState:
    """One single-site update at a uniformly chosen sensor."""
    n = state.n
    j = int(rng.integers(n))
    u = rng.random()
    bit = sensor_bit(j, n)
    on = state.mask | bit
    off = state.mask & ~bit
    p = flip_probability(energy.h(on), energy.h(off), state.beta)
    mask = on if u < p else off
    return replace(state, mask=mask, step_count=state.step_count + 1)


def _flip_table(h: np.ndarray, n: int, beta: float) -> list:
    """Per-mask, per-sensor probability of setting the sensor's bit."""
    masks = np.arange(2**n)
    table = np.empty((2**n, n))
    for j in range(n):
        bit = sensor_bit(j, n)
        h_on = h[masks | bit]
        h_off = h[masks & ~bit]
        with np.errstate(invalid="ignore"):
            col = expit(beta * (h_off - h_on))
        col[np.isinf(h_off) & np.isfinite(h_on)] = 1.0
        col[np.isinf(h_on) & np.isfinite(h_off)] = 0.0
        table[:, j] = col
    return table.tolist()


def bg_run(
    energy: EnergyTable,
    beta: float,
    n_steps: int,
    rng: np.random.Generator,
    start: int = 0,
) -> np.ndarray:
    """Run ``n_steps`` single-site updates at fixed ``beta``.

    Returns the visited masks, ``start`` included (length ``n_steps + 1``).
    """
    n = energy.n
    js = rng.integers(n, size=n_steps).tolist()
    us = rng.random(n_steps).tolist()
    bits = [sensor_bit(j, n) for j in range(n)]
    out = np.empty(n_steps + 1, dtype=np.int64)
    out[0] = start
    mask = start
    if n <= 16:
        probs = _flip_table(energy.dense_h(), n, beta)
        for t in range(n_steps):
            j = js[t]
            b = bits[j]
            mask = (mask | b) if us[t] < probs[mask][j] else (mask & ~b)
            out[t + 1] = mask
    else:
        h = energy.h
        for t in range(n_steps):
            b = bits[js[t]]
            on, off = mask | b, mask & ~b
            mask = on if us[t] < flip_probability(h(on), h(off), beta) else off
            out[t + 1] = mask
    return out


def abg_run(
    energy: EnergyTable,
    schedule: AnnealingSchedule,
    horizon: int,
    rng: np.random.Generator,
    start: int = 0,
) -> np.ndarray:
    """Annealed Gibbs: step ``t = 1..horizon`` uses ``beta(t) = beta0 log(1 + t)``."""
    schedule.check(energy)
    n = energy.n
    js = rng.integers(n, size=horizon).tolist()
    us = rng.random(horizon).tolist()
    bits = [sensor_bit(j, n) for j in range(n)]
    h = energy.dense_h().tolist() if n <= ENUM_LIMIT else None
    hf = (lambda m: h[m]) if h is not None else energy.h
    out = np.empty(horizon + 1, dtype=np.int64)
    out[0] = start
    mask = start
    for t in range(1, horizon + 1):
        b = bits[js[t - 1]]
        on, off = mask | b, mask & ~b
        p = flip_probability(hf(on), hf(off), schedule.beta(t))
        mask = on if us[t - 1] < p else off
        out[t] = mask
    return out


def _shell_members(mask: int, n: int):
    active = [j for j in range(n) if (mask >> (n - 1 - j)) & 1]
    inactive = [j for j in range(n) if not (mask >> (n - 1 - j)) & 1]
    return active, inactive


def swap_step_hard(
    state: GibbsChainState, energy: EnergyTable, nbar: int, rng: np.random.Generator
) -> GibbsChainState:
    """Pair-swap update on the weight-``nbar`` shell.

    One active and one inactive sensor are picked uniformly and swapped with
    Gibbs acceptance ``e^{-beta h(B')} / (e^{-beta h(B')} + e^{-beta h(B)})``.
    Single-bit flips would leave the shell, so they are never proposed.
    """
    n = state.n
    if state.weight != nbar:
        raise WeightViolation(f"configuration has weight {state.weight}, expected {nbar}")
    if nbar == 0 or nbar == n:
        return replace(state, step_count=state.step_count + 1)
    active, inactive = _shell_members(state.mask, n)
    i = active[int(rng.integers(len(active)))]
    j = inactive[int(rng.integers(len(inactive)))]
    u = rng.random()
    proposal = (state.mask & ~sensor_bit(i, n)) | sensor_bit(j, n)
    p = flip_probability(energy.h(proposal), energy.h(state.mask), state.beta)
    mask = proposal if u < p else state.mask
    return replace(state, mask=mask, step_count=state.step_count + 1)


def swap_run(
    energy: EnergyTable,
    beta: float,
    nbar: int,
    n_steps: int,
    rng: np.random.Generator,
    start: int | None = None,
) -> np.ndarray:
    """Many :func:`swap_step_hard` updates; ``start`` defaults to the first ``nbar`` sensors."""
    n = energy.n
    if start is None:
        start = sum(sensor_bit(j, n) for j in range(nbar))
    if bin(start).count("1") != nbar:
        raise WeightViolation(f"start configuration must have weight {nbar}")
    out = np.empty(n_steps + 1, dtype=np.int64)
    out[0] = start
    if nbar == 0 or nbar == n:
        out[:] = start
        return out
    ii = rng.integers(nbar, size=n_steps).tolist()
    jj = rng.integers(n - nbar, size=n_steps).tolist()
    us = rng.random(n_steps).tolist()
    h = energy.dense_h().tolist() if n <= ENUM_LIMIT else None
    hf = (lambda m: h[m]) if h is not None else energy.h
    mask = start
    active, inactive = _shell_members(mask, n)
    for t in range(n_steps):
        a = active[ii[t]]
        b = inactive[jj[t]]
        proposal = (mask & ~sensor_bit(a, n)) | sensor_bit(b, n)
        if us[t] < flip_probability(hf(proposal), hf(mask), beta):
            mask = proposal
            active[ii[t]] = b
            inactive[jj[t]] = a
        out[t + 1] = mask
    return out
