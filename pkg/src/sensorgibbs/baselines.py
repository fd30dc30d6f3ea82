"""Greedy and exhaustive sensor-subset baselines.

Every function takes the MSE function ``f`` as a dense table, a callable on
masks, or an :class:`~sensorgibbs.gibbs.EnergyTable`, and counts distinct
``f`` evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .constrained import MseFunction
from .errors import TooLarge
from .gibbs import EnergyTable
from .model import ENUM_LIMIT, Configuration, SensorNoise, popcounts, sensor_bit, y_b_scalar


@dataclass(frozen=True)
class BaselineResult:
    configuration: Configuration
    cost: float
    evaluations: int


class _CountingF:
    """Memoised view of ``f`` that counts distinct configurations evaluated."""

    def __init__(self, f: MseFunction):
        if isinstance(f, EnergyTable):
            self._f = f.f
        elif callable(f) and not isinstance(f, np.ndarray):
            self._f = f
        else:
            arr = np.asarray(f, dtype=float)
            self._f = lambda m: float(arr[m])
        self.seen: dict[int, float] = {}

    def __call__(self, mask: int) -> float:
        v = self.seen.get(mask)
        if v is None:
            v = float(self._f(mask))
            self.seen[mask] = v
        return v

    @property
    def count(self) -> int:
        return len(self.seen)


def _improves(new: float, old: float, weak: bool) -> bool:
    return new <= old if weak else new < old


def greedy1(f: MseFunction, lam: float, n: int, weak: bool = False) -> BaselineResult:
    """Single serial pass: keep sensor ``k`` iff adding it reduces ``f + lam |S|``."""
    fc = _CountingF(f)
    mask = 0
    cost = fc(0)
    for k in range(n):
        cand = mask | sensor_bit(k, n)
        c = fc(cand) + lam * cand.bit_count()
        if _improves(c, cost, weak):
            mask, cost = cand, c
    return BaselineResult(Configuration.from_index(mask, n), cost, fc.count)


def greedy2(f: MseFunction, lam: float, n: int, weak: bool = False, stop_early: bool = False) -> BaselineResult:
    """``N`` rounds, each adding the single sensor with the best cost if it improves.

    Once a round finds no improvement the set cannot change again, so
    ``stop_early`` only skips work; the result is the same.  Within a round,
    ties between equally good sensors go to the lowest index.
    """
    fc = _CountingF(f)
    mask = 0
    cost = fc(0)
    for _ in range(n):
        best, best_cost = None, None
        for k in range(n):
            bit = sensor_bit(k, n)
            if mask & bit:
                continue
            cand = mask | bit
            c = fc(cand) + lam * cand.bit_count()
            if best_cost is None or c < best_cost:
                best, best_cost = cand, c
        if best is not None and _improves(best_cost, cost, weak):
            mask, cost = best, best_cost
        elif stop_early:
            break
    return BaselineResult(Configuration.from_index(mask, n), cost, fc.count)


def greedy2_cardinality(f: MseFunction, nbar: int, n: int) -> BaselineResult:
    """Add the MSE-minimising sensor each round until ``nbar`` sensors are active."""
    if not 0 <= nbar <= n:
        raise ValueError(f"nbar must lie in [0, {n}]")
    fc = _CountingF(f)
    mask = 0
    cost = fc(0)
    for _ in range(nbar):
        best, best_cost = None, None
        for k in range(n):
            bit = sensor_bit(k, n)
            if mask & bit:
                continue
            c = fc(mask | bit)
            if best_cost is None or c < best_cost:
                best, best_cost = mask | bit, c
        mask, cost = best, best_cost
    return BaselineResult(Configuration.from_index(mask, n), cost, fc.count)


def _dense(f: MseFunction, n: int) -> np.ndarray:
    if isinstance(f, EnergyTable):
        return f.dense_f()
    if callable(f) and not isinstance(f, np.ndarray):
        return np.array([f(m) for m in range(2**n)], dtype=float)
    return np.asarray(f, dtype=float)


def opt_exhaustive(f: MseFunction, lam: float, n: int) -> BaselineResult:
    """Minimum of ``f + lam |B|`` over all ``2**n`` configurations.

    Ties go to the lexicographically smallest bit string, which is the
    smallest mask.
    """
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    h = _dense(f, n) + lam * popcounts(n)
    m = int(np.argmin(h))
    return BaselineResult(Configuration.from_index(m, n), float(h[m]), 2**n)


def opt_shell(f: MseFunction, nbar: int, n: int) -> BaselineResult:
    """Minimum MSE over configurations with exactly ``nbar`` active sensors."""
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    if not 0 <= nbar <= n:
        raise ValueError(f"nbar must lie in [0, {n}]")
    fc = _CountingF(f)
    masks = sorted(sum(sensor_bit(j, n) for j in c) for c in combinations(range(n), nbar))
    best = min(masks, key=lambda m: (fc(m), m))
    return BaselineResult(Configuration.from_index(best, n), fc(best), fc.count)


def opt_scalar_mse(theta: float, noise: SensorNoise, nbar: int) -> BaselineResult:
    """Best ``nbar``-sensor posterior variance in the scalar model with ``theta`` known.

    The posterior variance only depends on the summed precision, so the
    optimum takes the ``nbar`` least noisy sensors (lowest index on ties).
    """
    n = noise.n
    order = np.argsort(noise.sigmas, kind="stable")[:nbar]
    mask = sum(sensor_bit(int(j), n) for j in order)
    return BaselineResult(Configuration.from_index(mask, n), y_b_scalar(theta, noise, mask), 1)
