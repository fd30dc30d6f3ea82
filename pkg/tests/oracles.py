"""Reference computations written independently of the package.

These use dense linear algebra, tuple-based enumeration and scipy's
distributions so the package code is checked against a second route.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.stats import multivariate_normal


def bit_tuples(n):
    """All configurations as 0/1 tuples in lexicographic order."""
    return list(itertools.product((0, 1), repeat=n))


def schur_mse(M, bits):
    """Trace of the conditional covariance of the unobserved coordinates, via an explicit inverse."""
    M = np.asarray(M, dtype=float)
    s = [i for i, b in enumerate(bits) if b]
    u = [i for i, b in enumerate(bits) if not b]
    if not u:
        return 0.0
    if not s:
        return float(np.trace(M))
    Muu = M[np.ix_(u, u)]
    Mus = M[np.ix_(u, s)]
    Mss_inv = np.linalg.inv(M[np.ix_(s, s)])
    return float(np.trace(Muu - Mus @ Mss_inv @ Mus.T))


def joint_gaussian_posterior(theta, sigmas, z):
    """Condition X on readings z = X 1 + noise through the dense joint covariance."""
    sigmas = np.asarray(sigmas, dtype=float)
    z = np.asarray(z, dtype=float)
    v = (1.0 - theta) ** 2
    k = len(z)
    if k == 0:
        return theta, v
    czz = v * np.ones((k, k)) + np.diag(sigmas**2)
    cxz = v * np.ones(k)
    w = np.linalg.solve(czz, cxz)
    mean = theta + w @ (z - theta)
    var = v - w @ cxz
    return float(mean), float(var)


def dense_loglik(z, theta, sigmas):
    z = np.asarray(z, dtype=float)
    k = len(z)
    cov = (1.0 - theta) ** 2 * np.ones((k, k)) + np.diag(np.asarray(sigmas, dtype=float) ** 2)
    return float(multivariate_normal(mean=np.full(k, theta), cov=cov).logpdf(z))


def gibbs_probs(h_values, beta):
    """Normalised exp(-beta h) with a min shift, plain Python floats."""
    finite = [h for h in h_values if math.isfinite(h)]
    hmin = min(finite)
    w = [math.exp(-beta * (h - hmin)) if math.isfinite(h) else 0.0 for h in h_values]
    z = sum(w)
    return np.array([x / z for x in w])


def bg_kernel(h_of_bits, n, beta):
    """Single-site kernel built on bit tuples rather than integer masks."""
    states = bit_tuples(n)
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        for j in range(n):
            on = s[:j] + (1,) + s[j + 1:]
            off = s[:j] + (0,) + s[j + 1:]
            e_on = math.exp(-beta * h_of_bits(on))
            e_off = math.exp(-beta * h_of_bits(off))
            p = e_on / (e_on + e_off)
            P[index[s], index[on]] += p / n
            P[index[s], index[off]] += (1 - p) / n
    return P


def swap_kernel(h_of_bits, n, nbar, beta):
    states = [s for s in bit_tuples(n) if sum(s) == nbar]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        act = [i for i in range(n) if s[i]]
        ina = [i for i in range(n) if not s[i]]
        pairs = len(act) * len(ina)
        if pairs == 0:
            P[index[s], index[s]] = 1.0
            continue
        for a in act:
            for b in ina:
                t = list(s)
                t[a], t[b] = 0, 1
                t = tuple(t)
                e_new = math.exp(-beta * h_of_bits(t))
                e_old = math.exp(-beta * h_of_bits(s))
                p = e_new / (e_new + e_old)
                P[index[s], index[t]] += p / pairs
                P[index[s], index[s]] += (1 - p) / pairs
    return states, P


def tuple_to_mask(bits):
    m = 0
    for b in bits:
        m = (m << 1) | int(b)
    return m


def mean_weight_bruteforce(f_table, lam, beta, n):
    states = bit_tuples(n)
    h = [f_table[tuple_to_mask(s)] + lam * sum(s) for s in states]
    p = gibbs_probs(h, beta)
    return float(sum(pi * sum(s) for pi, s in zip(p, states)))
