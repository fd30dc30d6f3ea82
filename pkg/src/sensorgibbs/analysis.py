"""Exact and brute-force tools for checking the samplers.

Everything here enumerates the configuration space, so it is capped at desk
scale: distributions at ``N <= 20`` and transition matrices at ``N <= 12``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, EmptyWindow, NotStochastic, TooLarge
from .gibbs import EnergyTable, energy_range, flip_probability
from .model import ENUM_LIMIT, popcounts, sensor_bit

MATRIX_LIMIT = 12


@dataclass(frozen=True)
class ExactDistribution:
    """Probability vector over configuration masks ``0 .. 2**n - 1``."""

    probs: np.ndarray
    n: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (2**self.n,):
            raise DimensionMismatch(f"expected {2**self.n} probabilities, got {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    def __getitem__(self, mask: int) -> float:
        return float(self.probs[mask])

    def expectation(self, values) -> float:
        values = np.asarray(values, dtype=float)
        support = self.probs > 0
        return float(np.dot(self.probs[support], values[support]))

    def mean_weight(self) -> float:
        return self.expectation(popcounts(self.n))


def _gibbs_probs(h: np.ndarray, beta: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        logw = np.where(np.isinf(h), -np.inf, -beta * h)
    return np.exp(logw - logsumexp(logw))


def exact_gibbs_distribution(energy: EnergyTable, beta: float, n: int | None = None) -> ExactDistribution:
    """``pi_beta(B) = exp(-beta h(B)) / Z_beta`` by full enumeration."""
    n = energy.n if n is None else n
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    return ExactDistribution(_gibbs_probs(energy.dense_h(), beta), n)


def exact_shell_distribution(energy: EnergyTable, beta: float, nbar: int) -> ExactDistribution:
    """Gibbs distribution restricted to configurations with exactly ``nbar`` active sensors."""
    n = energy.n
    if n > ENUM_LIMIT:
        raise TooLarge(f"N={n} exceeds the enumeration cap {ENUM_LIMIT}")
    h = np.where(popcounts(n) == nbar, energy.dense_h(), np.inf)
    return ExactDistribution(_gibbs_probs(h, beta), n)


def mean_weight(energy: EnergyTable, beta: float) -> float:
    """``g(lambda) = sum_B pi_beta(B) |B|`` at the energy's own multiplier."""
    return exact_gibbs_distribution(energy, beta).mean_weight()


def bg_transition_matrix(energy: EnergyTable, beta: float, n: int | None = None) -> np.ndarray:
    """Exact one-step kernel of the single-site sampler."""
    n = energy.n if n is None else n
    if n > MATRIX_LIMIT:
        raise TooLarge(f"N={n} exceeds the transition-matrix cap {MATRIX_LIMIT}")
    h = energy.dense_h()
    size = 2**n
    P = np.zeros((size, size))
    for m in range(size):
        for j in range(n):
            bit = sensor_bit(j, n)
            on, off = m | bit, m & ~bit
            p = flip_probability(h[on], h[off], beta)
            P[m, on] += p / n
            P[m, off] += (1.0 - p) / n
    return P


def swap_transition_matrix(energy: EnergyTable, beta: float, nbar: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact kernel of the pair-swap sampler on the weight-``nbar`` shell.

    Returns ``(states, P)`` where ``states`` lists the shell masks in
    increasing order and ``P`` is indexed accordingly.
    """
    n = energy.n
    if n > MATRIX_LIMIT:
        raise TooLarge(f"N={n} exceeds the transition-matrix cap {MATRIX_LIMIT}")
    states = np.array(
        sorted(sum(sensor_bit(j, n) for j in c) for c in combinations(range(n), nbar)), dtype=np.int64
    )
    pos = {int(m): i for i, m in enumerate(states)}
    h = energy.dense_h()
    P = np.zeros((len(states), len(states)))
    pairs = nbar * (n - nbar)
    for i, m in enumerate(states.tolist()):
        if pairs == 0:
            P[i, i] = 1.0
            continue
        active = [j for j in range(n) if m & sensor_bit(j, n)]
        inactive = [j for j in range(n) if not m & sensor_bit(j, n)]
        for a in active:
            for b in inactive:
                prop = (m & ~sensor_bit(a, n)) | sensor_bit(b, n)
                p = flip_probability(h[prop], h[m], beta)
                P[i, pos[prop]] += p / pairs
                P[i, i] += (1.0 - p) / pairs
    return states, P


def dobrushin_coefficient(P) -> float:
    """``1 - min_{i,j} sum_k min(P_ik, P_jk)``."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise NotStochastic("transition matrix must be square")
    if np.any(P < -1e-12) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-9:
        raise NotStochastic("rows must be probability vectors")
    overlap = np.inf
    for i in range(P.shape[0]):
        overlap = min(overlap, float(np.minimum(P[i], P[i:]).sum(axis=1).min()))
    return float(min(max(1.0 - overlap, 0.0), 1.0))


def tv_distance(p, q) -> float:
    p = p.probs if isinstance(p, ExactDistribution) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, ExactDistribution) else np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"supports differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def mixing_bound(beta: float, n: int, delta: float, l: int) -> float:
    """``(1 - exp(-beta N Delta) / N^N) ** l``: contraction after ``l`` blocks of ``N`` steps."""
    if delta < 0 or l < 0:
        raise ValueError("Delta and l must be nonnegative")
    if l == 0:
        return 1.0
    rate = math.exp(-beta * n * delta - n * math.log(n))
    return (1.0 - rate) ** l


def mode_mass_bound(beta: float, n: int, delta1: float) -> float:
    """Lower bound ``1 / (1 + (2^N - 1) exp(-beta Delta_1))`` on the mass of a unique minimiser."""
    if math.isinf(beta):
        return 1.0
    return 1.0 / (1.0 + (2**n - 1) * math.exp(-beta * delta1))


def energy_gap(energy: EnergyTable, atol: float = 0.0) -> float:
    """``Delta_1``: distance from the minimum energy to the next distinct level."""
    h = energy.dense_h()
    h = h[np.isfinite(h)]
    hmin = h.min()
    above = h[h > hmin + atol]
    return float(above.min() - hmin) if above.size else math.inf


def argmin_configurations(energy: EnergyTable, atol: float = 1e-12) -> np.ndarray:
    h = energy.dense_h()
    return np.flatnonzero(h <= h.min() + atol)


def empirical_distribution(trajectory, burn_in: int, n: int) -> ExactDistribution:
    """Normalised visit counts of ``trajectory[burn_in:]``."""
    traj = np.asarray(trajectory, dtype=np.int64)
    if burn_in >= traj.shape[0]:
        raise EmptyWindow(f"burn-in {burn_in} leaves no samples from {traj.shape[0]}")
    counts = np.bincount(traj[burn_in:], minlength=2**n).astype(float)
    return ExactDistribution(counts / counts.sum(), n)


__all__ = [
    "ExactDistribution",
    "argmin_configurations",
    "bg_transition_matrix",
    "dobrushin_coefficient",
    "empirical_distribution",
    "energy_gap",
    "energy_range",
    "exact_gibbs_distribution",
    "exact_shell_distribution",
    "mean_weight",
    "mixing_bound",
    "mode_mass_bound",
    "swap_transition_matrix",
    "tv_distance",
]
