"""Experiment configuration: dataclasses, TOML ingestion and validation.

A config file is TOML whose keys are either top level (``algorithm``, ``N``,
``seed``, ...) or live in one of the sections ``model``, ``params`` and
``output``.  Sections may be written as tables or as dotted keys, so these
two files are equivalent::

    [params]
    beta = 5.0

    params.beta = 5.0

Command-line ``--set key=value`` overrides use the same dotted names; the
value is parsed as a TOML value and falls back to a bare string.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..constrained import PowerSchedule
from ..errors import ConfigError
from ..gpl import ScheduleQuadruple, validate_schedules

ALGORITHMS = ("bg", "abg", "gl", "gpl", "gpl-l", "greedy1", "greedy2", "opt", "sweep-beta", "hard-shell")
EXACT_ONLY = ("opt", "sweep-beta", "hard-shell", "gpl", "gpl-l")
ENUM_CAP = 20
SEED_LIMIT = 2**64


@dataclass(frozen=True)
class ModelSection:
    kind: str = "vector"  # vector | scalar
    seed: Optional[int] = None  # instance seed; defaults to the experiment seed
    theta0: float = 0.5
    noise: str = "perfect"  # perfect | uniform | explicit
    noise_low: float = 0.0
    noise_high: float = 0.5
    sigmas: tuple[float, ...] = ()


@dataclass(frozen=True)
class ParamsSection:
    beta: float = 1.0
    betas: tuple[float, ...] = ()
    beta0: float = 0.01
    lam: float = 0.0
    nbar: Optional[float] = None
    lambda_target: Optional[float] = None
    lambda0: float = 0.0
    lower: float = 0.0
    upper: Optional[float] = None
    step_coef: float = 1.0
    step_exponent: float = 1.0
    start: str = "random"  # random | empty
    A0: float = 2.0
    T: int = 50
    a_coef: float = 0.1
    a_exponent: float = 0.6
    b_coef: float = 0.1
    b_exponent: float = 0.8
    c_coef: float = 0.1
    c_exponent: float = 1.0
    d_coef: float = 0.1
    d_exponent: float = 0.1
    theta_lo: float = 0.0
    theta_hi: float = 0.8
    theta_init: float = 0.2
    sweeps_per_slot: int = 10
    update_theta: bool = True
    weak_improvement: bool = False


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    curve_stride: int = 1
    write_slots: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    N: int
    seed: int = 0
    replications: int = 1
    horizon: int = 1000
    burn_in: Optional[int] = None  # defaults to horizon // 2
    workers: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    params: ParamsSection = field(default_factory=ParamsSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def window_start(self) -> int:
        return self.horizon // 2 if self.burn_in is None else self.burn_in

    @property
    def model_seed(self) -> int:
        return self.seed if self.model.seed is None else self.model.seed

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        flat = to_flat(self)
        flat.update(overrides)
        return from_flat(flat)


SECTIONS = {"model": ModelSection, "params": ParamsSection, "output": OutputSection}


def _field_types(cls) -> dict[str, Any]:
    return typing.get_type_hints(cls)


def _coerce(key: str, value: Any, tp: Any) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union and type(None) in args:
        if value is None:
            return None
        inner = next(a for a in args if a is not type(None))
        return _coerce(key, value, inner)
    if origin is tuple:
        if isinstance(value, str):
            value = [v for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {value!r}")
        return tuple(_coerce(key, v, args[0]) for v in value)
    if tp is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ConfigError(key, f"expected true or false, got {value!r}")
    if tp is int:
        if isinstance(value, bool):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value.strip())
            except ValueError:
                pass
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if tp is float:
        if isinstance(value, bool):
            raise ConfigError(key, f"expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value.strip())
            except ValueError:
                pass
        raise ConfigError(key, f"expected a number, got {value!r}")
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    raise ConfigError(key, f"unsupported field type {tp}")


def _flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def from_flat(flat: dict[str, Any]) -> ExperimentConfig:
    """Build a config from dotted keys; unknown keys and bad values raise :class:`ConfigError`."""
    top_types = _field_types(ExperimentConfig)
    top: dict[str, Any] = {}
    parts: dict[str, dict[str, Any]] = {name: {} for name in SECTIONS}
    for key, value in flat.items():
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(key, "unknown section")
            if name == "lambda":
                name = "lam"
            types = _field_types(SECTIONS[section])
            if name not in types:
                raise ConfigError(key, "unknown key")
            parts[section][name] = _coerce(key, value, types[name])
        else:
            if key not in top_types or key in SECTIONS:
                raise ConfigError(key, "unknown key")
            top[key] = _coerce(key, value, top_types[key])
    for required in ("algorithm", "N"):
        if required not in top:
            raise ConfigError(required, "missing required key")
    sections = {name: SECTIONS[name](**vals) for name, vals in parts.items()}
    return ExperimentConfig(**top, **sections)


def to_flat(cfg: ExperimentConfig) -> dict[str, Any]:
    """Dotted-key view of ``cfg``; ``None`` values are dropped."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in SECTIONS:
            for g in dataclasses.fields(v):
                sub = getattr(v, g.name)
                if sub is not None:
                    name = "lambda" if g.name == "lam" else g.name
                    out[f"{f.name}.{name}"] = list(sub) if isinstance(sub, tuple) else sub
        elif v is not None:
            out[f.name] = v
    return out


def parse_toml(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(source, f"invalid TOML: {exc}") from None
    return from_flat(_flatten(tree))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_toml(text, str(path))


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value`` with the value read as a TOML scalar or array when possible."""
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, raw = item.split("=", 1)
    key, raw = key.strip(), raw.strip()
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r} as TOML")


def dump_toml(cfg: ExperimentConfig) -> str:
    """Flat dotted-key TOML that :func:`parse_toml` reads back to an equal config."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in to_flat(cfg).items())


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Static checks that do not need the model instance.  Returns ``cfg``."""
    p, m = cfg.params, cfg.model
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    if cfg.N < 1:
        raise ConfigError("N", "must be at least 1")
    if cfg.algorithm in EXACT_ONLY and cfg.N > ENUM_CAP:
        raise ConfigError("N", f"{cfg.algorithm} enumerates all configurations; N must be <= {ENUM_CAP}")
    if not 0 <= cfg.seed < SEED_LIMIT:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    if m.seed is not None and not 0 <= m.seed < SEED_LIMIT:
        raise ConfigError("model.seed", "must be a 64-bit unsigned integer")
    if cfg.replications < 1:
        raise ConfigError("replications", "must be at least 1")
    if cfg.horizon < 1:
        raise ConfigError("horizon", "must be at least 1")
    if cfg.burn_in is not None and not 0 <= cfg.burn_in <= cfg.horizon:
        raise ConfigError("burn_in", "must lie in [0, horizon]")
    if cfg.workers < 1:
        raise ConfigError("workers", "must be at least 1")
    if cfg.output.curve_stride < 1:
        raise ConfigError("output.curve_stride", "must be at least 1")

    if m.kind not in ("vector", "scalar"):
        raise ConfigError("model.kind", "must be vector or scalar")
    if m.noise not in ("perfect", "uniform", "explicit"):
        raise ConfigError("model.noise", "must be perfect, uniform or explicit")
    if m.noise == "explicit":
        if len(m.sigmas) != cfg.N:
            raise ConfigError("model.sigmas", f"needs exactly N={cfg.N} entries")
        if any(not (s >= 0 and math.isfinite(s)) for s in m.sigmas):
            raise ConfigError("model.sigmas", "entries must be finite and nonnegative")
    if m.noise == "uniform" and not 0 <= m.noise_low <= m.noise_high:
        raise ConfigError("model.noise_high", "need 0 <= noise_low <= noise_high")
    if m.kind == "vector" and m.noise != "perfect":
        raise ConfigError("model.noise", "the vector model observes its coordinates directly; use perfect")
    if m.kind == "scalar" and not m.theta0 < 1.0:
        raise ConfigError("model.theta0", "must be below 1 (the prior variance is (1 - theta0)^2)")
    if cfg.algorithm in ("gpl", "gpl-l") and m.kind != "scalar":
        raise ConfigError("model.kind", "parameter learning runs on the scalar model")

    alg = cfg.algorithm
    if alg in ("bg", "gl", "gpl", "gpl-l", "hard-shell") and not p.beta > 0:
        raise ConfigError("params.beta", "must be positive")
    if alg == "sweep-beta" and not p.betas:
        raise ConfigError("params.betas", "sweep needs at least one beta")
    if any(not b >= 0 for b in p.betas):
        raise ConfigError("params.betas", "entries must be nonnegative")
    if alg == "abg" and not p.beta0 > 0:
        raise ConfigError("params.beta0", "must be positive")
    if not p.lam >= 0:
        raise ConfigError("params.lambda", "must be nonnegative")
    if p.start not in ("random", "empty"):
        raise ConfigError("params.start", "must be random or empty")
    if alg == "gl":
        if (p.nbar is None) == (p.lambda_target is None):
            raise ConfigError("params.nbar", "give exactly one of nbar and lambda_target")
        if not 0.5 < p.step_exponent <= 1.0 or not p.step_coef > 0:
            raise ConfigError("params.step_exponent", "step size must be coef/t^p with coef > 0, p in (0.5, 1]")
        if p.upper is not None and not p.lower < p.upper:
            raise ConfigError("params.upper", "must exceed params.lower")
        if not p.lambda0 >= p.lower or (p.upper is not None and p.lambda0 > p.upper):
            raise ConfigError("params.lambda0", "must lie inside the projection bounds")
    if alg == "hard-shell":
        if p.nbar is None or p.nbar != int(p.nbar) or not 0 <= p.nbar <= cfg.N:
            raise ConfigError("params.nbar", f"hard constraint needs an integer nbar in [0, {cfg.N}]")
    if alg in ("gpl", "gpl-l"):
        if p.nbar is None:
            raise ConfigError("params.nbar", "required for parameter learning")
        if p.T < 1:
            raise ConfigError("params.T", "must be a positive integer")
        if p.sweeps_per_slot < 1:
            raise ConfigError("params.sweeps_per_slot", "must be at least 1")
        if not 0 <= p.theta_lo < p.theta_hi < 1:
            raise ConfigError("params.theta_hi", "need 0 <= theta_lo < theta_hi < 1")
        if not p.theta_lo <= p.theta_init <= p.theta_hi:
            raise ConfigError("params.theta_init", "must lie in [theta_lo, theta_hi]")
        if not p.A0 > (1.0 - p.theta_lo) ** 2:
            raise ConfigError("params.A0", f"must exceed the largest prior variance {(1.0 - p.theta_lo) ** 2}")
        if not 0 <= p.lambda0 <= p.A0:
            raise ConfigError("params.lambda0", "must lie in [0, A0]")
        bad = validate_schedules(schedules_of(cfg))
        if bad:
            raise ConfigError("params.schedules", "violated step-size conditions: " + ", ".join(bad))
    return cfg


def schedules_of(cfg: ExperimentConfig) -> ScheduleQuadruple:
    p = cfg.params
    return ScheduleQuadruple(
        PowerSchedule(p.a_coef, p.a_exponent),
        PowerSchedule(p.b_coef, p.b_exponent),
        PowerSchedule(p.c_coef, p.c_exponent),
        PowerSchedule(p.d_coef, p.d_exponent),
        p.T,
    )
