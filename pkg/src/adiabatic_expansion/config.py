"""Scenario configuration files (TOML).

Example::

    model = "spin"
    j = 0.5
    b = 1.0
    order = 2
    oracle_tol = 1e-9
    outputs = ["fidelity", "residuals", "phases"]

    [grid]
    T = 6.283185307179586
    points = 512

    [field]
    kind = "precession"        # or "solvable", "sampled"
    r = 20.0
    theta0 = 1.0471975511965976
    omega_p = 1.0
    phi0 = 0.0

A ``solvable`` field takes ``omega_p`` and a ``[field.theta]`` table with
``theta0`` and optional ``amplitude``/``harmonic`` for
theta(phi) = theta0 + amplitude sin(harmonic phi); ``radius_scale`` (default 1)
multiplies the generated length, which is how negative controls are set up.
A ``sampled`` field takes ``path`` to a ``t,r,theta,phi`` CSV, resolved
relative to the config file.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .expansion import MAX_ORDER
from .spectral import GAUGE_POLICIES

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

REPORT_KINDS = ("fidelity", "residuals", "phases", "certificate")
FIELD_KINDS = ("precession", "solvable", "sampled")
MIN_POINTS = 16


class ConfigError(ValidationError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class PrecessionField:
    r: float
    theta0: float
    omega_p: float
    phi0: float = 0.0


@dataclass(frozen=True)
class SolvableField:
    omega_p: float
    theta0: float
    amplitude: float = 0.0
    harmonic: float = 1.0
    radius_scale: float = 1.0


@dataclass(frozen=True)
class SampledField:
    path: Path


@dataclass(frozen=True)
class ScenarioConfig:
    model: str
    j: float
    b: float
    field: object
    T: float
    points: int
    order: int
    oracle_tol: float = 1e-9
    outputs: tuple = ("fidelity",)
    gauge: str = "positive-overlap"
    certificate_tol: float = 1e-6
    source_path: Path | None = field(default=None, compare=False)

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


def _number(table: dict, key: str, prefix: str = "", default=None, kind=float):
    name = f"{prefix}{key}"
    if key not in table:
        if default is None:
            raise ConfigError(name, "missing required key")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigError(name, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _parse_field(table, base_dir: Path):
    if not isinstance(table, dict):
        raise ConfigError("field", "expected a table")
    kind = table.get("kind")
    if kind not in FIELD_KINDS:
        raise ConfigError("field.kind", f"expected one of {FIELD_KINDS}, got {kind!r}")
    p = "field."
    if kind == "precession":
        return PrecessionField(r=_number(table, "r", p), theta0=_number(table, "theta0", p),
                               omega_p=_number(table, "omega_p", p),
                               phi0=_number(table, "phi0", p, 0.0))
    if kind == "solvable":
        theta = table.get("theta")
        if not isinstance(theta, dict):
            raise ConfigError("field.theta", "expected a table describing theta(phi)")
        q = "field.theta."
        return SolvableField(omega_p=_number(table, "omega_p", p),
                             theta0=_number(theta, "theta0", q),
                             amplitude=_number(theta, "amplitude", q, 0.0),
                             harmonic=_number(theta, "harmonic", q, 1.0),
                             radius_scale=_number(table, "radius_scale", p, 1.0))
    path = table.get("path")
    if not isinstance(path, str):
        raise ConfigError("field.path", "expected a file path string")
    resolved = (base_dir / path).resolve()
    if not resolved.is_file():
        raise ConfigError("field.path", f"file not found: {resolved}")
    return SampledField(path=resolved)


def parse_config(data: dict, base_dir: Path | str = ".", source_path=None) -> ScenarioConfig:
    base_dir = Path(base_dir)
    model = data.get("model", "spin")
    if model != "spin":
        raise ConfigError("model", f"only 'spin' is supported, got {model!r}")
    grid = data.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected a table with T and points")
    outputs = data.get("outputs", ["fidelity"])
    if isinstance(outputs, str):
        outputs = [outputs]
    if not isinstance(outputs, list):
        raise ConfigError("outputs", f"expected a list of report kinds, got {outputs!r}")
    gauge = data.get("gauge", "positive-overlap")
    cfg = ScenarioConfig(
        model=model,
        j=_number(data, "j"),
        b=_number(data, "b"),
        field=_parse_field(data.get("field"), base_dir),
        T=_number(grid, "T", "grid."),
        points=_number(grid, "points", "grid.", kind=int),
        order=_number(data, "order", kind=int),
        oracle_tol=_number(data, "oracle_tol", default=1e-9),
        outputs=tuple(outputs),
        gauge=gauge,
        certificate_tol=_number(data, "certificate_tol", default=1e-6),
        source_path=source_path,
    )
    validate(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    return parse_config(data, path.parent, source_path=path)


def validate(cfg: ScenarioConfig) -> None:
    twoj = 2 * cfg.j
    if cfg.j < 0 or abs(twoj - round(twoj)) > 1e-12:
        raise ConfigError("j", f"expected a non-negative half-integer, got {cfg.j!r}")
    if not cfg.b > 0:
        raise ConfigError("b", f"must be positive, got {cfg.b!r}")
    if not cfg.T > 0:
        raise ConfigError("grid.T", f"must be positive, got {cfg.T!r}")
    if cfg.points < MIN_POINTS:
        raise ConfigError("grid.points", f"must be >= {MIN_POINTS}, got {cfg.points!r}")
    if not 0 <= cfg.order <= MAX_ORDER:
        raise ConfigError("order", f"must be in [0, {MAX_ORDER}], got {cfg.order!r}")
    if not 1e-12 <= cfg.oracle_tol <= 1e-3:
        raise ConfigError("oracle_tol", f"must be in [1e-12, 1e-3], got {cfg.oracle_tol!r}")
    if not cfg.certificate_tol > 0:
        raise ConfigError("certificate_tol", f"must be positive, got {cfg.certificate_tol!r}")
    bad = [k for k in cfg.outputs if k not in REPORT_KINDS]
    if bad or not cfg.outputs:
        raise ConfigError("outputs", f"report kinds must be among {REPORT_KINDS}, got {list(cfg.outputs)!r}")
    if cfg.gauge not in GAUGE_POLICIES:
        raise ConfigError("gauge", f"expected one of {GAUGE_POLICIES}, got {cfg.gauge!r}")
    f = cfg.field
    if isinstance(f, PrecessionField):
        if not f.r > 0:
            raise ConfigError("field.r", f"must be positive, got {f.r!r}")
        if not 0 <= f.theta0 < np.pi:
            raise ConfigError("field.theta0", f"must lie in [0, pi), got {f.theta0!r}")
    if isinstance(f, SolvableField):
        if not f.omega_p > 0:
            raise ConfigError("field.omega_p", f"must be positive, got {f.omega_p!r}")
        if not 0 < f.theta0 < np.pi:
            raise ConfigError("field.theta.theta0", f"must lie in (0, pi), got {f.theta0!r}")
        if not f.radius_scale > 0:
            raise ConfigError("field.radius_scale", f"must be positive, got {f.radius_scale!r}")
