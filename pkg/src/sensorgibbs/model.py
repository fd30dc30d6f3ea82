"""Process priors, sensor observation models and exact MMSE quantities.

Two observation models are supported:

* a zero-noise coordinate-selection model, where ``X ~ N(mean, M)`` is a
  ``q = N`` dimensional Gaussian vector and sensor ``k`` reads ``X_k`` exactly;
* a scalar parametric model, ``X ~ N(theta, (1 - theta)^2)``, where sensor
  ``k`` reads ``X + w_k`` with ``w_k ~ N(0, sigma_k^2)``.

Configurations are indexed by integers: the bit string ``B_1 B_2 ... B_N``
read as a binary number with ``B_1`` as the most significant bit.  Integer
order therefore coincides with lexicographic order of the bit vectors, which
is what the exhaustive baselines use to break ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy import linalg

from .errors import DegenerateNoise, SingularSubmatrix, TooLarge

COND_LIMIT = 1e12
ENUM_LIMIT = 20

LOG_2PI = math.log(2.0 * math.pi)


def sensor_bit(j: int, n: int) -> int:
    """Integer mask of sensor ``j`` (0-based) in an ``n``-sensor network."""
    return 1 << (n - 1 - j)


@lru_cache(maxsize=None)
def bit_matrix(n: int) -> np.ndarray:
    """Boolean ``(2**n, n)`` table; row ``m`` is the bit vector of mask ``m``."""
    if n > ENUM_LIMIT:
        raise TooLarge(f"cannot enumerate 2**{n} configurations")
    masks = np.arange(2**n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    table = ((masks[:, None] >> shifts) & 1).astype(bool)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def popcounts(n: int) -> np.ndarray:
    counts = bit_matrix(n).sum(axis=1).astype(np.int64)
    counts.setflags(write=False)
    return counts


@dataclass(frozen=True)
class Configuration:
    """A sensor activation vector ``B`` in ``{0,1}^N``."""

    bits: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @property
    def n(self) -> int:
        return len(self.bits)

    @property
    def weight(self) -> int:
        return sum(self.bits)

    @property
    def index(self) -> int:
        m = 0
        for b in self.bits:
            m = (m << 1) | int(b)
        return m

    @property
    def active(self) -> tuple[int, ...]:
        return tuple(k for k, b in enumerate(self.bits) if b)

    @classmethod
    def from_index(cls, index: int, n: int) -> "Configuration":
        if not 0 <= index < 2**n:
            raise ValueError(f"index {index} out of range for n={n}")
        return cls(tuple(bool((index >> (n - 1 - j)) & 1) for j in range(n)))

    @classmethod
    def from_active(cls, active: Sequence[int], n: int) -> "Configuration":
        chosen = set(active)
        return cls(tuple(j in chosen for j in range(n)))

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls((False,) * n)

    @classmethod
    def full(cls, n: int) -> "Configuration":
        return cls((True,) * n)

    def with_bit(self, j: int, value: bool) -> "Configuration":
        bits = list(self.bits)
        bits[j] = bool(value)
        return Configuration(tuple(bits))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)


Selection = Union[Configuration, Sequence[bool], np.ndarray, int]


def as_mask_array(selection: Selection, n: int) -> np.ndarray:
    """Boolean length-``n`` array for a Configuration, integer mask or boolean sequence."""
    if isinstance(selection, Configuration):
        arr = np.array(selection.bits, dtype=bool)
    elif isinstance(selection, (int, np.integer)) and not isinstance(selection, bool):
        if not 0 <= selection < 2**n:
            raise ValueError(f"mask {selection} out of range for N={n}")
        return np.array([(int(selection) >> (n - 1 - j)) & 1 for j in range(n)], dtype=bool)
    else:
        arr = np.asarray(selection, dtype=bool)
    if arr.shape != (n,):
        raise ValueError(f"selection has shape {arr.shape}, expected ({n},)")
    return arr


@dataclass(frozen=True)
class VectorGaussianPrior:
    """``X ~ N(mean, cov)``; one coordinate per sensor."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        mean = np.array(self.mean, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be square")
        if mean.shape != (cov.shape[0],):
            raise ValueError("mean length must match covariance size")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0.0):
            raise ValueError("covariance is not symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError("covariance is not positive semidefinite")
        cov.setflags(write=False)
        mean.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    @classmethod
    def centered(cls, cov) -> "VectorGaussianPrior":
        cov = np.asarray(cov, dtype=float)
        return cls(np.zeros(cov.shape[0]), cov)


@dataclass(frozen=True)
class ScalarParametricPrior:
    """``X ~ N(theta, (1 - theta)^2)`` with ``theta`` in ``[lo, hi]``, ``hi < 1``."""

    theta: float
    lo: float = 0.0
    hi: float = 0.8

    def __post_init__(self):
        if not self.hi < 1.0:
            raise ValueError("upper end of the parameter set must be below 1")
        if not self.lo <= self.theta <= self.hi:
            raise ValueError(f"theta={self.theta} outside [{self.lo}, {self.hi}]")

    @property
    def variance(self) -> float:
        return (1.0 - self.theta) ** 2


@dataclass(frozen=True)
class SensorNoise:
    """Per-sensor observation noise standard deviations (0 = perfect sensing)."""

    sigmas: np.ndarray = field()

    def __post_init__(self):
        s = np.array(self.sigmas, dtype=float).reshape(-1)
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("noise standard deviations must be finite and >= 0")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    @property
    def n(self) -> int:
        return self.sigmas.shape[0]

    @classmethod
    def perfect(cls, n: int) -> "SensorNoise":
        return cls(np.zeros(n))

    @classmethod
    def uniform(cls, n: int, rng: np.random.Generator, low=0.0, high=0.5) -> "SensorNoise":
        return cls(rng.uniform(low, high, size=n))


def generate_covariance(n: int, rng: np.random.Generator, a: np.ndarray | None = None) -> np.ndarray:
    """Return ``A.T @ A`` with ``A`` an ``n x n`` matrix of i.i.d. U[-1, 1] entries.

    ``a`` may be passed explicitly to bypass the random draw.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if a is None:
        a = rng.uniform(-1.0, 1.0, size=(n, n))
    a = np.asarray(a, dtype=float)
    m = a.T @ a
    return 0.5 * (m + m.T)


def _chol_guarded(block: np.ndarray) -> np.ndarray:
    eig = np.linalg.eigvalsh(block)
    if eig[0] <= 0 or eig[-1] / eig[0] > COND_LIMIT:
        raise SingularSubmatrix(
            f"observed covariance block is numerically singular (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})"
        )
    return linalg.cholesky(block, lower=True)


def mse_subset_vector(prior: VectorGaussianPrior, selection: Selection) -> float:
    """Trace of ``M(Sc,Sc) - M(Sc,S) M(S,S)^-1 M(S,Sc)``: the MMSE under perfect reads of ``S``."""
    s = as_mask_array(selection, prior.dim)
    return _mse_bool(prior.cov, s)


def _mse_bool(cov: np.ndarray, s: np.ndarray) -> float:
    sc = ~s
    if not s.any():
        return float(np.trace(cov))
    if not sc.any():
        return 0.0
    chol = _chol_guarded(cov[np.ix_(s, s)])
    w = linalg.solve_triangular(chol, cov[np.ix_(s, sc)], lower=True)
    val = float(np.trace(cov[np.ix_(sc, sc)]) - np.sum(w * w))
    return max(val, 0.0)


def mse_table_vector(prior: VectorGaussianPrior) -> np.ndarray:
    """MMSE for every configuration, indexed by configuration mask."""
    bits = bit_matrix(prior.dim)
    return np.array([_mse_bool(prior.cov, row) for row in bits])


class ConditionalMean:
    """Cached conditional-mean estimators ``E[X | X_S]`` for the vector model."""

    def __init__(self, prior: VectorGaussianPrior):
        self.prior = prior
        self._gain = {}

    def _gain_for(self, mask: int):
        if mask not in self._gain:
            n = self.prior.dim
            s = np.array([(mask >> (n - 1 - j)) & 1 for j in range(n)], dtype=bool)
            if s.any():
                chol = _chol_guarded(self.prior.cov[np.ix_(s, s)])
                # gain = M(:,S) M(S,S)^-1
                gain = linalg.cho_solve((chol, True), self.prior.cov[s, :]).T
            else:
                gain = np.zeros((n, 0))
            self._gain[mask] = (s, gain)
        return self._gain[mask]

    def estimate(self, mask: int, x_s: np.ndarray) -> np.ndarray:
        s, gain = self._gain_for(mask)
        mean = self.prior.mean
        if not s.any():
            return mean.copy()
        return mean + gain @ (np.asarray(x_s) - mean[s])


def _posterior_from_terms(theta: float, sig: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    prior_prec = 1.0 / (1.0 - theta) ** 2
    exact = sig == 0.0
    if exact.any():
        vals = z[exact]
        if np.ptp(vals) > 0.0:
            raise DegenerateNoise("perfect sensors disagree on the observed value")
        return float(vals[0]), 0.0
    inv = 1.0 / (sig * sig)
    prec = prior_prec + inv.sum()
    var = 1.0 / prec
    mean = var * (theta * prior_prec + float(np.dot(inv, z)))
    return mean, var


def posterior_scalar(theta: float, noise: SensorNoise, selection: Selection, z_s) -> tuple[float, float]:
    """Posterior mean and variance of ``X`` given readings ``z_s`` of the selected sensors.

    ``z_s`` lists readings in increasing sensor order.  Perfect sensors
    (``sigma = 0``) condition exactly: the posterior collapses onto their
    reading, and contradicting perfect readings raise :class:`DegenerateNoise`.
    """
    s = as_mask_array(selection, noise.n)
    z = np.asarray(z_s, dtype=float).reshape(-1)
    if z.shape[0] != int(s.sum()):
        raise ValueError("one reading per selected sensor is required")
    return _posterior_from_terms(theta, noise.sigmas[s], z)


def y_b_scalar(theta: float, noise: SensorNoise, selection: Selection) -> float:
    """Posterior variance under ``selection``; independent of the readings."""
    s = as_mask_array(selection, noise.n)
    sig = noise.sigmas[s]
    if np.any(sig == 0.0):
        return 0.0
    return 1.0 / (1.0 / (1.0 - theta) ** 2 + float(np.sum(1.0 / (sig * sig))))


def precision_table(noise: SensorNoise) -> np.ndarray:
    """Sum of sensor precisions ``1/sigma_k^2`` for every configuration (``inf`` if a perfect sensor is in)."""
    with np.errstate(divide="ignore"):
        inv = 1.0 / (noise.sigmas * noise.sigmas)
    bits = bit_matrix(noise.n)
    finite = np.where(np.isinf(inv), 0.0, inv)
    table = bits.astype(float) @ finite
    has_exact = bits[:, np.isinf(inv)].any(axis=1)
    table[has_exact] = np.inf
    return table


def y_b_table(theta: float, noise: SensorNoise, precisions: np.ndarray | None = None) -> np.ndarray:
    """:func:`y_b_scalar` for every configuration mask."""
    if precisions is None:
        precisions = precision_table(noise)
    return 1.0 / (1.0 / (1.0 - theta) ** 2 + precisions)


def sample_slot(prior, noise: SensorNoise, selection: Selection, rng: np.random.Generator):
    """Draw ``X`` from the prior and the readings of the selected sensors.

    Returns ``(x, z_s)``; ``z_s`` is ordered by sensor index.
    """
    s = as_mask_array(selection, noise.n)
    if isinstance(prior, VectorGaussianPrior):
        x = rng.multivariate_normal(prior.mean, prior.cov, method="eigh")
        z = x + noise.sigmas * rng.standard_normal(noise.n)
        return x, z[s]
    if isinstance(prior, ScalarParametricPrior):
        x = prior.theta + (1.0 - prior.theta) * rng.standard_normal()
        z = x + noise.sigmas * rng.standard_normal(noise.n)
        return float(x), z[s]
    raise TypeError(f"unsupported prior {type(prior).__name__}")


def loglik_subset(z, theta: float, sigmas) -> float:
    """Log density of readings ``z`` under ``N(theta 1, (1-theta)^2 11^T + diag(sigmas^2))``.

    The covariance is rank-one plus diagonal, so the determinant and the
    quadratic form come from the matrix determinant lemma and
    Sherman-Morrison without forming the matrix.
    """
    z = np.asarray(z, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    if z.size == 0:
        return 0.0
    if np.any(sig <= 0.0):
        raise DegenerateNoise("readings from a perfect sensor have no density")
    v = (1.0 - theta) ** 2
    inv = 1.0 / (sig * sig)
    r = z - theta
    s_inv = inv.sum()
    denom = 1.0 + v * s_inv
    quad = float(np.dot(inv, r * r)) - v * float(np.dot(inv, r)) ** 2 / denom
    logdet = float(np.sum(np.log(sig * sig))) + math.log(denom)
    return -0.5 * (z.size * LOG_2PI + logdet + quad)


def loglik_full(z, theta: float, noise: SensorNoise) -> float:
    """Log-likelihood of a full read of all ``N`` sensors at parameter ``theta``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (noise.n,):
        raise ValueError("a full read needs one reading per sensor")
    return loglik_subset(z, theta, noise.sigmas)


def loglik_full_many(zs: np.ndarray, theta: float, noise: SensorNoise) -> np.ndarray:
    """Row-wise :func:`loglik_full` for a ``(samples, N)`` array."""
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    sig = noise.sigmas
    if np.any(sig <= 0.0):
        raise DegenerateNoise("readings from a perfect sensor have no density")
    v = (1.0 - theta) ** 2
    inv = 1.0 / (sig * sig)
    r = zs - theta
    denom = 1.0 + v * inv.sum()
    quad = (r * r) @ inv - v * (r @ inv) ** 2 / denom
    logdet = float(np.sum(np.log(sig * sig))) + math.log(denom)
    return -0.5 * (zs.shape[1] * LOG_2PI + logdet + quad)
