"""Named experiment setups for the four numerical studies."""

from __future__ import annotations

from typing import Callable

from ..errors import UnknownPreset
from .config import ExperimentConfig, ModelSection, OutputSection, ParamsSection

DEFAULT_SEED = 0
FIG2_BETAS = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)


def _fig2(seed: int) -> ExperimentConfig:
    # unconstrained cost f + 2|B|, finite runs of 100 iterations scored at the terminal state
    return ExperimentConfig(
        algorithm="sweep-beta",
        N=10,
        seed=seed,
        replications=100,
        horizon=100,
        burn_in=100,
        params=ParamsSection(lam=2.0, betas=FIG2_BETAS, start="random"),
    )


def _fig3(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        algorithm="hard-shell",
        N=10,
        seed=seed,
        replications=10,
        horizon=10_000,
        params=ParamsSection(nbar=4.0, beta=5.0, betas=FIG2_BETAS),
    )


def _fig4(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        algorithm="gl",
        N=10,
        seed=seed,
        replications=50,
        horizon=10_000,
        params=ParamsSection(beta=5.0, lambda_target=2.0, lambda0=4.0, step_coef=1.0, step_exponent=1.0),
    )


def _fig5(seed: int) -> ExperimentConfig:
    return ExperimentConfig(
        algorithm="gpl",
        N=10,
        seed=seed,
        replications=5,
        horizon=200_000,
        model=ModelSection(kind="scalar", theta0=0.5, noise="uniform", noise_low=0.0, noise_high=0.5),
        params=ParamsSection(
            beta=1000.0,
            nbar=4.0,
            lambda0=0.05,
            A0=2.0,
            T=50,
            a_coef=0.1,
            a_exponent=0.6,
            b_coef=0.1,
            b_exponent=0.8,
            c_coef=0.1,
            c_exponent=1.0,
            d_coef=0.1,
            d_exponent=0.1,
            theta_lo=0.0,
            theta_hi=0.8,
            theta_init=0.2,
            sweeps_per_slot=10,
        ),
        output=OutputSection(curve_stride=100),
    )


PRESETS: dict[str, Callable[[int], ExperimentConfig]] = {
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
}


def preset(name: str, seed: int = DEFAULT_SEED) -> ExperimentConfig:
    try:
        build = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
    return build(seed)
