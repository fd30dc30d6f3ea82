import numpy as np

from sensorgibbs.gibbs import EnergyTable
from sensorgibbs.model import VectorGaussianPrior, generate_covariance, mse_table_vector


def random_energy(n, seed, lam=0.0, scale=1.0):
    """Seeded random nonnegative energy table."""
    rng = np.random.default_rng(seed)
    return EnergyTable(n, scale * rng.random(2**n), lam)


def covariance_energy(n, seed, lam=0.0):
    """MSE table of a seeded A^T A covariance, as in the unconstrained experiments."""
    M = generate_covariance(n, np.random.default_rng(seed))
    return EnergyTable(n, mse_table_vector(VectorGaussianPrior.centered(M)), lam), M
