"""Seeded replication runner and CSV emission.

Seed splitting: replication ``r`` draws from
``default_rng(SeedSequence(seed, spawn_key=(r,)))``; the ``k``-th entry of a
beta sweep uses ``spawn_key=(r, k)``.  The model instance (covariance or
noise levels) comes from an independent stream,
``SeedSequence([model_seed, MODEL_STREAM])``, so it is shared by all
replications and does not depend on how many there are.

Every file but ``timing.json`` is a pure function of the configuration.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .. import __version__
from ..analysis import exact_gibbs_distribution, exact_shell_distribution, mean_weight
from ..baselines import greedy1, greedy2, greedy2_cardinality, opt_exhaustive, opt_scalar_mse, opt_shell
from ..constrained import GlConfig, PowerSchedule, run_gl, solve_lambda_star
from ..errors import ConfigError, Infeasible, ScheduleViolation
from ..gibbs import AnnealingSchedule, EnergyTable, abg_run, bg_run, swap_run
from ..gpl import GplConfig, GplTrace, ScalarTruth, run_gpl
from ..model import (
    ENUM_LIMIT,
    ScalarParametricPrior,
    SensorNoise,
    VectorGaussianPrior,
    generate_covariance,
    mse_subset_vector,
    mse_table_vector,
    sensor_bit,
    y_b_scalar,
    y_b_table,
)
from .config import ExperimentConfig, schedules_of, to_flat, validate

SCHEMA_VERSION = 1
MODEL_STREAM = 0x6D6F64656C  # ASCII "model"

CHAIN_SLOTS = ("replication", "t", "mask", "weight", "energy", "lambda")
CHAIN_SUMMARY = (
    "replication", "time_avg_energy", "time_avg_mse", "time_avg_weight", "terminal_lambda", "terminal_mask",
)
GPL_SLOTS = ("replication", "t", "mask", "weight", "squared_error", "lambda", "theta", "J")
GPL_SUMMARY = (
    "replication", "time_avg_mse", "time_avg_weight", "terminal_lambda", "terminal_theta",
    "full_read_fraction", "opt_mse",
)
GPL_CURVE = ("t", "mse_avg", "weight_avg", "lambda", "theta")
RESULT = ("algorithm", "configuration", "cost", "evaluations")
SWEEP = ("beta", "exact_expected_cost", "bg_avg_cost", "opt_cost", "greedy1_cost", "greedy2_cost")
SHELL_SWEEP = ("beta", "exact_expected_mse", "chain_avg_mse", "opt_mse", "greedy2_mse")


def replication_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def model_rng(model_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([model_seed, MODEL_STREAM]))


@dataclass
class Instance:
    n: int
    prior: Any
    noise: SensorNoise
    energy: EnergyTable  # f(B) with lambda = 0

    @property
    def f(self) -> np.ndarray:
        return self.energy.dense_f()


def build_instance(cfg: ExperimentConfig) -> Instance:
    n, m = cfg.N, cfg.model
    rng = model_rng(cfg.model_seed)
    if m.kind == "vector":
        prior = VectorGaussianPrior.centered(generate_covariance(n, rng))
        noise = SensorNoise.perfect(n)
        if n <= ENUM_LIMIT:
            energy = EnergyTable(n, mse_table_vector(prior))
        else:
            energy = EnergyTable(n, lambda mask: mse_subset_vector(prior, mask))
    else:
        if m.noise == "perfect":
            noise = SensorNoise.perfect(n)
        elif m.noise == "uniform":
            noise = SensorNoise.uniform(n, rng, m.noise_low, m.noise_high)
        else:
            noise = SensorNoise(np.array(m.sigmas, dtype=float))
        prior = ScalarParametricPrior(m.theta0, cfg.params.theta_lo, cfg.params.theta_hi)
        if n <= ENUM_LIMIT:
            energy = EnergyTable(n, y_b_table(m.theta0, noise))
        else:
            energy = EnergyTable(n, lambda mask: y_b_scalar(m.theta0, noise, mask))
    return Instance(n, prior, noise, energy)


@dataclass
class Resolved:
    """Quantities derived from the configuration and the model instance."""

    nbar: Optional[float] = None
    upper: Optional[float] = None
    lambda_star: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {k: v for k, v in (("nbar", self.nbar), ("upper", self.upper), ("lambda_star", self.lambda_star))}
        out.update(self.extra)
        return {k: v for k, v in out.items() if v is not None}


def resolve(cfg: ExperimentConfig, inst: Instance) -> Resolved:
    """Deep validation against the instance, plus derived targets."""
    validate(cfg)
    p = cfg.params
    res = Resolved(nbar=p.nbar)
    if cfg.algorithm == "abg":
        try:
            AnnealingSchedule(p.beta0).check(inst.energy.with_lambda(p.lam))
        except ScheduleViolation as exc:
            raise ConfigError("params.beta0", str(exc)) from None
    if cfg.algorithm == "gl":
        res.upper = p.upper if p.upper is not None else inst.energy.f(0)
        if not p.lower <= p.lambda0 <= res.upper:
            raise ConfigError("params.lambda0", f"must lie in [{p.lower}, {res.upper}]")
        if p.lambda_target is not None:
            res.nbar = mean_weight(inst.energy.with_lambda(p.lambda_target), p.beta)
        if inst.n <= ENUM_LIMIT:
            try:
                res.lambda_star = solve_lambda_star(inst.energy, p.beta, res.nbar, inst.n, tol=1e-10).value
            except Infeasible:
                res.lambda_star = None
    if cfg.algorithm in ("gpl", "gpl-l"):
        res.extra["opt_mse"] = opt_scalar_mse(cfg.model.theta0, inst.noise, int(round(p.nbar))).cost
        res.extra["prior_variance"] = (1.0 - cfg.model.theta0) ** 2
    return res


# replication workers; each returns (slot columns, summary row)

def _start_mask(cfg: ExperimentConfig, rng: np.random.Generator) -> int:
    return int(rng.integers(2**cfg.N)) if cfg.params.start == "random" else 0


def _chain_outputs(r: int, masks: np.ndarray, lambdas: np.ndarray, mse: np.ndarray, w0: int):
    weights = popcounts_of_masks(masks)
    energy = mse + lambdas * weights
    t = np.arange(masks.shape[0])
    slots = {
        "replication": np.full(masks.shape[0], r), "t": t, "mask": masks, "weight": weights,
        "energy": energy, "lambda": lambdas,
    }
    summary = {
        "replication": r,
        "time_avg_energy": float(energy[w0:].mean()),
        "time_avg_mse": float(mse[w0:].mean()),
        "time_avg_weight": float(weights[w0:].mean()),
        "terminal_lambda": float(lambdas[-1]),
        "terminal_mask": int(masks[-1]),
    }
    return slots, summary


_BYTE_POP = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcounts_of_masks(masks: np.ndarray) -> np.ndarray:
    """Vectorised popcount of nonnegative int64 masks, one byte at a time."""
    m = np.asarray(masks, dtype=np.int64)
    out = np.zeros(m.shape, dtype=np.int64)
    for shift in range(0, 64, 8):
        out += _BYTE_POP[(m >> shift) & 255]
    return out


def _mse_of(inst: Instance, masks: np.ndarray) -> np.ndarray:
    if inst.n <= ENUM_LIMIT:
        return inst.f[masks]
    return np.array([inst.energy.f(int(m)) for m in masks.tolist()])


def _run_chain(cfg: ExperimentConfig, res: Resolved, r: int):
    inst = build_instance(cfg)
    p = cfg.params
    rng = replication_rng(cfg.seed, r)
    if cfg.algorithm == "bg":
        masks = bg_run(inst.energy.with_lambda(p.lam), p.beta, cfg.horizon, rng, _start_mask(cfg, rng))
        lambdas = np.full(masks.shape[0], p.lam)
    elif cfg.algorithm == "abg":
        start = _start_mask(cfg, rng)
        masks = abg_run(inst.energy.with_lambda(p.lam), AnnealingSchedule(p.beta0), cfg.horizon, rng, start)
        lambdas = np.full(masks.shape[0], p.lam)
    elif cfg.algorithm == "gl":
        gl = GlConfig(
            beta=p.beta, nbar=res.nbar, step=PowerSchedule(p.step_coef, p.step_exponent),
            lower=p.lower, upper=res.upper, lambda0=p.lambda0, horizon=cfg.horizon,
        )
        start = None if p.start == "random" else 0
        trace = run_gl(inst.energy, inst.n, gl, rng, start=start)
        masks, lambdas = trace.masks, trace.lambdas
    elif cfg.algorithm == "hard-shell":
        nbar = int(p.nbar)
        start = _shell_start(cfg.N, nbar, rng) if p.start == "random" else None
        masks = swap_run(inst.energy, p.beta, nbar, cfg.horizon, rng, start)
        lambdas = np.zeros(masks.shape[0])
    else:
        raise ValueError(cfg.algorithm)
    return _chain_outputs(r, masks, lambdas, _mse_of(inst, masks), cfg.window_start)


def _shell_start(n: int, nbar: int, rng: np.random.Generator) -> int:
    chosen = rng.choice(n, size=nbar, replace=False)
    return sum(sensor_bit(int(j), n) for j in chosen)


def gpl_config(cfg: ExperimentConfig) -> GplConfig:
    """Learning-loop settings of a ``gpl`` or ``gpl-l`` experiment."""
    p = cfg.params
    return GplConfig(
        schedules=schedules_of(cfg), beta=p.beta, nbar=p.nbar, A0=p.A0,
        theta_lo=(p.theta_lo,), theta_hi=(p.theta_hi,), theta_init=(p.theta_init,),
        lambda0=p.lambda0, sweeps_per_slot=p.sweeps_per_slot, horizon=cfg.horizon,
        variant="full" if cfg.algorithm == "gpl" else "low", update_theta=p.update_theta,
    )


def gpl_replication(cfg: ExperimentConfig, r: int, inst: Instance | None = None) -> GplTrace:
    """Trace of replication ``r``, drawn from the same stream as :func:`run_experiment`."""
    inst = build_instance(cfg) if inst is None else inst
    return run_gpl(gpl_config(cfg), ScalarTruth(cfg.model.theta0, inst.noise), replication_rng(cfg.seed, r))


def _run_gpl(cfg: ExperimentConfig, res: Resolved, r: int):
    trace = gpl_replication(cfg, r)
    w0 = min(cfg.window_start, cfg.horizon - 1)
    slots = {
        "replication": np.full(trace.horizon, r), "t": np.arange(trace.horizon), "mask": trace.masks,
        "weight": trace.weights, "squared_error": trace.squared_errors, "lambda": trace.lambdas,
        "theta": trace.thetas, "J": trace.full_reads.astype(np.int64),
    }
    summary = {
        "replication": r,
        "time_avg_mse": float(trace.squared_errors[w0:].mean()),
        "time_avg_weight": float(trace.weights[w0:].mean()),
        "terminal_lambda": float(trace.lambdas[-1]),
        "terminal_theta": float(trace.thetas[-1]),
        "full_read_fraction": trace.full_read_fraction,
        "opt_mse": res.extra["opt_mse"],
    }
    return slots, summary


def _replicate(args):
    cfg, res, r = args
    if cfg.algorithm in ("gpl", "gpl-l"):
        return _run_gpl(cfg, res, r)
    return _run_chain(cfg, res, r)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# sweeps

def sweep_beta(cfg: ExperimentConfig, betas: Sequence[float] | None = None, inst: Instance | None = None) -> list[dict]:
    """One row per beta: exact Gibbs expected cost, finite-run chain average, and the baselines.

    Uses the shell-constrained sampler when ``cfg.algorithm`` is
    ``hard-shell`` and the unconstrained cost ``f + lambda |B|`` otherwise.
    """
    betas = tuple(cfg.params.betas if betas is None else betas)
    if not betas:
        raise ConfigError("params.betas", "sweep needs at least one beta")
    inst = build_instance(cfg) if inst is None else inst
    if cfg.algorithm == "hard-shell":
        return _shell_sweep(cfg, betas, inst)
    p = cfg.params
    energy = inst.energy.with_lambda(p.lam)
    exact_ok = inst.n <= ENUM_LIMIT
    h = energy.dense_h() if exact_ok else None
    opt = opt_exhaustive(inst.energy, p.lam, inst.n).cost if exact_ok else None
    g1 = greedy1(inst.energy, p.lam, inst.n, weak=p.weak_improvement).cost
    g2 = greedy2(inst.energy, p.lam, inst.n, weak=p.weak_improvement).cost
    w0 = cfg.window_start
    rows = []
    for k, beta in enumerate(betas):
        exact = exact_gibbs_distribution(energy, beta).expectation(h) if exact_ok else None
        costs = []
        for r in range(cfg.replications):
            rng = replication_rng(cfg.seed, r, k)
            masks = bg_run(energy, beta, cfg.horizon, rng, _start_mask(cfg, rng))
            window = masks[w0:]
            if h is not None:
                costs.append(float(h[window].mean()))
            else:
                costs.append(float(np.mean([energy.h(int(m)) for m in window])))
        rows.append({
            "beta": float(beta), "exact_expected_cost": exact, "bg_avg_cost": float(np.mean(costs)),
            "opt_cost": opt, "greedy1_cost": g1, "greedy2_cost": g2,
        })
    return rows


def _shell_sweep(cfg: ExperimentConfig, betas: Sequence[float], inst: Instance) -> list[dict]:
    nbar = int(cfg.params.nbar)
    f = inst.f
    opt = opt_shell(inst.energy, nbar, inst.n).cost
    g2 = greedy2_cardinality(inst.energy, nbar, inst.n).cost
    shell = EnergyTable.shell(inst.n, f, nbar)
    w0 = cfg.window_start
    rows = []
    for k, beta in enumerate(betas):
        exact = exact_shell_distribution(inst.energy, beta, nbar).expectation(f)
        mses = []
        for r in range(cfg.replications):
            rng = replication_rng(cfg.seed, r, k)
            start = _shell_start(inst.n, nbar, rng) if cfg.params.start == "random" else None
            masks = swap_run(shell, beta, nbar, cfg.horizon, rng, start)
            mses.append(float(f[masks[w0:]].mean()))
        rows.append({
            "beta": float(beta), "exact_expected_mse": exact, "chain_avg_mse": float(np.mean(mses)),
            "opt_mse": opt, "greedy2_mse": g2,
        })
    return rows


# output

def _format_column(values) -> list[str]:
    if isinstance(values, np.ndarray):
        if values.dtype.kind in "iub":
            return [str(int(v)) for v in values.tolist()]
        return [format(v, ".17g") for v in values.tolist()]
    return [_format_cell(v) for v in values]


def _format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict] | None = None, blocks=None) -> Path:
    """Write a header plus either dict ``rows`` or column-array ``blocks`` (appended in order)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        if rows is not None:
            for row in rows:
                fh.write(",".join(_format_cell(row[c]) for c in columns) + "\n")
        for block in blocks or ():
            cols = [_format_column(block[c]) for c in columns]
            fh.write("".join(",".join(cells) + "\n" for cells in zip(*cols)))
    return path


def _curve(cfg: ExperimentConfig, slot_blocks: list[dict]) -> dict:
    errs = np.array([b["squared_error"] for b in slot_blocks])
    weights = np.array([b["weight"] for b in slot_blocks], dtype=float)
    count = np.arange(1, errs.shape[1] + 1)
    keep = np.arange(0, errs.shape[1], cfg.output.curve_stride)
    if keep[-1] != errs.shape[1] - 1:
        keep = np.append(keep, errs.shape[1] - 1)
    return {
        "t": keep,
        "mse_avg": (np.cumsum(errs, axis=1) / count).mean(axis=0)[keep],
        "weight_avg": (np.cumsum(weights, axis=1) / count).mean(axis=0)[keep],
        "lambda": np.array([b["lambda"] for b in slot_blocks]).mean(axis=0)[keep],
        "theta": np.array([b["theta"] for b in slot_blocks]).mean(axis=0)[keep],
    }


@dataclass
class RunResult:
    out_dir: Path
    files: dict[str, Path]
    summary: list[dict]
    derived: dict
    runtime_seconds: float


def run_experiment(
    cfg: ExperimentConfig, out: str | Path | None = None, workers: int | None = None, echo: bool = False
) -> RunResult:
    """Run every replication of ``cfg`` and write its CSVs and manifest into ``out``."""
    t0 = time.perf_counter()
    inst = build_instance(cfg)
    res = resolve(cfg, inst)
    workers = cfg.workers if workers is None else workers
    out_dir = Path(cfg.output.dir if out is None else out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}
    schemas: dict[str, Sequence[str]] = {}
    summary: list[dict] = []
    alg = cfg.algorithm

    if alg in ("greedy1", "greedy2", "opt"):
        p = cfg.params
        if alg == "greedy1":
            r = greedy1(inst.energy, p.lam, inst.n, weak=p.weak_improvement)
        elif alg == "greedy2":
            r = greedy2(inst.energy, p.lam, inst.n, weak=p.weak_improvement)
        else:
            r = opt_exhaustive(inst.energy, p.lam, inst.n)
        summary = [{"algorithm": alg, "configuration": str(r.configuration), "cost": r.cost,
                    "evaluations": r.evaluations}]
        files["result.csv"] = write_csv(out_dir / "result.csv", RESULT, summary)
        schemas["result.csv"] = RESULT
    elif alg == "sweep-beta":
        summary = sweep_beta(cfg, inst=inst)
        files["sweep.csv"] = write_csv(out_dir / "sweep.csv", SWEEP, summary)
        schemas["sweep.csv"] = SWEEP
        res.extra["exact_columns"] = inst.n <= ENUM_LIMIT
    else:
        results = _map(_replicate, [(cfg, res, r) for r in range(cfg.replications)], workers)
        blocks = [s for s, _ in results]
        summary = [row for _, row in results]
        gpl = alg in ("gpl", "gpl-l")
        slot_cols, sum_cols = (GPL_SLOTS, GPL_SUMMARY) if gpl else (CHAIN_SLOTS, CHAIN_SUMMARY)
        if cfg.output.write_slots:
            files["slots.csv"] = write_csv(out_dir / "slots.csv", slot_cols, blocks=blocks)
            schemas["slots.csv"] = slot_cols
        files["summary.csv"] = write_csv(out_dir / "summary.csv", sum_cols, summary)
        schemas["summary.csv"] = sum_cols
        if gpl:
            files["curve.csv"] = write_csv(out_dir / "curve.csv", GPL_CURVE, blocks=[_curve(cfg, blocks)])
            schemas["curve.csv"] = GPL_CURVE
        if alg == "hard-shell" and cfg.params.betas:
            files["sweep.csv"] = write_csv(out_dir / "sweep.csv", SHELL_SWEEP, sweep_beta(cfg, inst=inst))
            schemas["sweep.csv"] = SHELL_SWEEP

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "algorithm": alg,
        "files": {name: list(cols) for name, cols in sorted(schemas.items())},
        "seed_rule": "replication r: SeedSequence(seed, spawn_key=(r,)); sweep entry k: spawn_key=(r, k); "
                     f"model: SeedSequence([model_seed, {MODEL_STREAM}])",
        "config": {k: v for k, v in to_flat(cfg).items() if k != "output.dir"},
        "derived": res.as_dict(),
    }
    files["manifest.json"] = out_dir / "manifest.json"
    files["manifest.json"].write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    runtime = time.perf_counter() - t0
    (out_dir / "timing.json").write_text(json.dumps({"runtime_seconds": runtime}) + "\n")
    if echo:
        print(format_table(summary))
        print(f"wrote {', '.join(sorted(files))} to {out_dir} in {runtime:.2f}s")
    return RunResult(out_dir, files, summary, res.as_dict(), runtime)


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(type(v))


def format_table(rows: Sequence[dict]) -> str:
    if not rows:
        return "(no rows)"
    cols = list(rows[0])

    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return "inf" if math.isinf(v) else f"{v:.6g}"
        return str(v)

    body = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
