"""Command-line front end.

    adiabatic-expansion run CONFIG [--out DIR] [--oracle-tol X] [--seedless]
    adiabatic-expansion sweep CONFIG --param {omega_p,b,points,N} --values LIST [...]
    adiabatic-expansion profile CONFIG [--out DIR]

Exit codes: 0 success, 1 other library error, 2 configuration error,
3 degeneracy or tracking failure, 4 oracle non-convergence,
5 certification failure. Every failure prints one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import random
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .config import (ConfigError, PrecessionField, SampledField, ScenarioConfig,
                     SolvableField, load_config, validate)
from .errors import (ConvergenceError, DegeneracyError, ExpansionError,
                     InfeasibleProfileError, TrackingError, ValidationError)
from .expansion import ExpansionChain, expand, product_all
from .operators import TimeGrid, unitarity_defect
from .propagator import propagate
from .solvable import Certificate, certify_exact, scaled_radius, solvable_radius
from .spectral import hermiticity_defects
from .spin import DipoleSource, FieldCurve, SpinRep, precession, spin_matrices

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DEGENERACY = 3
EXIT_ORACLE = 4
EXIT_CERTIFICATE = 5

SWEEP_PARAMS = ("omega_p", "b", "points", "N")


class CertificationFailed(ExpansionError):
    """The requested exactness certificate was not granted."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ValidationError, InfeasibleProfileError)):
        return EXIT_CONFIG
    if isinstance(exc, (DegeneracyError, TrackingError)):
        return EXIT_DEGENERACY
    if isinstance(exc, ConvergenceError):
        return EXIT_ORACLE
    if isinstance(exc, CertificationFailed):
        return EXIT_CERTIFICATE
    return EXIT_OTHER


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else None
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    return v


def diagnostic(exc: BaseException) -> str:
    """Single-line JSON description of a failure."""
    info = {"status": "error", "exit_code": exit_code(exc), "error": type(exc).__name__,
            "message": str(exc)}
    for attr in ("field", "time", "levels", "gap", "level_index", "achieved", "substeps",
                 "interval", "min_radius"):
        value = getattr(exc, attr, None)
        if value is not None:
            info[attr] = _jsonable(value)
    cert = getattr(exc, "certificate", None)
    if cert is not None:
        info["certificate"] = {k: _jsonable(v) for k, v in cert.summary().items()}
    return json.dumps(info, sort_keys=True, allow_nan=False)


# --------------------------------------------------------------------------
# RNG guard

@contextlib.contextmanager
def no_rng():
    """Make every standard RNG entry point raise while the block runs."""
    def forbidden(*args, **kwargs):
        raise RuntimeError("random number generation is not allowed in a seedless run")

    targets = [(np.random, name) for name in
               ("default_rng", "seed", "rand", "randn", "random", "randint", "normal",
                "uniform", "choice", "shuffle", "permutation", "RandomState", "Generator")]
    targets += [(random, name) for name in
                ("seed", "random", "randint", "uniform", "gauss", "choice", "shuffle", "Random")]
    saved = [(mod, name, getattr(mod, name)) for mod, name in targets if hasattr(mod, name)]
    try:
        for mod, name, _ in saved:
            setattr(mod, name, forbidden)
        yield
    finally:
        for mod, name, orig in saved:
            setattr(mod, name, orig)


# --------------------------------------------------------------------------
# scenario construction

def build_field(cfg: ScenarioConfig, grid: TimeGrid) -> FieldCurve:
    f = cfg.field
    if isinstance(f, PrecessionField):
        return precession(cfg.b, f.r, f.theta0, f.omega_p, f.phi0)
    if isinstance(f, SolvableField):
        th0, amp, k = f.theta0, f.amplitude, f.harmonic
        w = f.omega_p
        profile = solvable_radius(
            lambda p: th0 + amp * np.sin(k * np.asarray(p, float)),
            lambda t: w * np.asarray(t, float), cfg.b, grid,
            dtheta_dphi=lambda p: amp * k * np.cos(k * np.asarray(p, float)),
            d2theta_dphi2=lambda p: -amp * k * k * np.sin(k * np.asarray(p, float)),
            dphi_dt=lambda t: np.full(np.shape(t), float(w)),
        )
        field_ = profile.generated
        return field_ if f.radius_scale == 1.0 else scaled_radius(field_, f.radius_scale)
    if isinstance(f, SampledField):
        curve = csvio.read_field_csv(f.path, cfg.b)
        if curve.grid.T < cfg.T * (1 - 1e-12):
            raise ConfigError("grid.T", f"exceeds the sampled profile duration {curve.grid.T:.17g}")
        return curve
    raise ConfigError("field", f"unsupported field {f!r}")


@dataclass
class RunResult:
    config: ScenarioConfig
    grid: TimeGrid
    chain: ExpansionChain
    errors: np.ndarray            # (order + 1, M) oracle distance per truncation
    oracle_error: float
    certificate: Certificate | None = None
    files: list = field(default_factory=list)

    @property
    def final_error(self) -> float:
        return float(self.errors[-1, -1])


def _label(m: float) -> str:
    return f"n{m:+g}"


def _fidelity_columns(res: RunResult) -> dict:
    cols = {"t": res.grid.times}
    for i, err in enumerate(res.errors):
        cols[f"err_N{i}"] = err
    return cols


def _residual_columns(res: RunResult) -> dict:
    chain = res.chain
    cols = {"t": res.grid.times}
    samples = [lvl.samples for lvl in chain.levels] + [chain.next_samples]
    for i, s in enumerate(samples):
        cols[f"norm_H{i}"] = np.linalg.norm(s, axis=(1, 2))
    for i, lvl in enumerate(chain.levels):
        cols[f"unitarity_U{i}"] = [unitarity_defect(u) for u in lvl.unitaries]
    cols["unitarity_product"] = [unitarity_defect(u) for u in product_all(chain)]
    for i, s in enumerate(samples):
        cols[f"hermiticity_H{i}"] = hermiticity_defects(s)
    return cols


def _phase_columns(res: RunResult, rep: SpinRep) -> dict:
    cols = {"t": res.grid.times}
    for i, lvl in enumerate(res.chain.levels):
        fr = lvl.frame
        for k, m in enumerate(rep.m):
            lab = f"L{i}_{_label(m)}"
            cols[f"delta_{lab}"] = fr.dynamical_phase[:, k]
            cols[f"gamma_{lab}"] = fr.geometric_phase[:, k]
            cols[f"alpha_{lab}"] = fr.total_phase[:, k]
    return cols


def write_reports(res: RunResult, rep: SpinRep, out_dir: Path) -> list:
    out_dir = Path(out_dir)
    files = []
    kinds = res.config.outputs
    if "fidelity" in kinds:
        files.append(out_dir / "fidelity.csv")
        csvio.write_columns(files[-1], _fidelity_columns(res))
    if "residuals" in kinds:
        files.append(out_dir / "residuals.csv")
        csvio.write_columns(files[-1], _residual_columns(res))
    if "phases" in kinds:
        files.append(out_dir / "phases.csv")
        csvio.write_columns(files[-1], _phase_columns(res, rep))
    if "certificate" in kinds and res.certificate is not None:
        summary = res.certificate.summary()
        files.append(out_dir / "certificate.csv")
        csvio.write_table(files[-1], list(summary), [list(summary.values())])
    return files


def run_scenario(cfg: ScenarioConfig, out_dir=None, oracle_tol: float | None = None) -> RunResult:
    """Run one scenario and write its reports to ``out_dir`` (if given).

    Raises library errors unchanged; a refused certificate raises
    :class:`CertificationFailed` after the reports are written.
    """
    if oracle_tol is not None:
        cfg = cfg.replace(oracle_tol=float(oracle_tol))
    validate(cfg)
    grid = TimeGrid.uniform(cfg.T, cfg.points)
    rep = spin_matrices(cfg.j)
    curve = build_field(cfg, grid)
    curve.validate(grid)
    source = DipoleSource(rep, curve)

    chain = expand(source, grid, cfg.order, gauge_policy=cfg.gauge)
    oracle = propagate(source, grid, cfg.oracle_tol)
    errors = np.array([np.linalg.norm(oracle.unitaries - product_all(chain, upto=i), axis=(1, 2))
                       for i in range(cfg.order + 1)])
    cert = None
    if "certificate" in cfg.outputs:
        cert = certify_exact(curve, rep, grid, tol=cfg.certificate_tol,
                             gauge_policy=cfg.gauge, oracle=oracle)
    res = RunResult(cfg, grid, chain, errors, oracle.error_estimate, cert)
    if out_dir is not None:
        res.files = write_reports(res, rep, out_dir)
    if cert is not None and not cert.granted:
        raise CertificationFailed(
            f"certificate refused: residual {cert.residual:.3e} (bound {cert.residual_bound:.3e}), "
            f"max distance {cert.max_distance:.3e} (tol {cert.tol:.1e})", certificate=cert)
    return res


# --------------------------------------------------------------------------
# sweeps

def parse_values(text) -> list:
    """Split a comma and/or whitespace separated list of numbers."""
    if isinstance(text, (list, tuple)):
        text = " ".join(str(x) for x in text)
    parts = [p for p in re.split(r"[,\s]+", str(text).strip()) if p]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError("values", f"not a number list: {text!r}") from exc


def apply_parameter(cfg: ScenarioConfig, param: str, value: float) -> ScenarioConfig:
    if param not in SWEEP_PARAMS:
        raise ConfigError("param", f"expected one of {SWEEP_PARAMS}, got {param!r}")
    if param in ("points", "N"):
        if float(value) != int(value):
            raise ConfigError(param, f"expected an integer, got {value!r}")
        value = int(value)
        key = "order" if param == "N" else "points"
        return cfg.replace(**{key: value})
    if param == "b":
        return cfg.replace(b=float(value))
    if not isinstance(cfg.field, (PrecessionField, SolvableField)):
        raise ConfigError("param", f"omega_p does not apply to a {type(cfg.field).__name__}")
    return cfg.replace(field=dataclasses.replace(cfg.field, omega_p=float(value)))


@dataclass
class SweepRow:
    value: float
    final_error: float
    residual: float
    order: int
    points: int
    wall_time: float


def sweep(cfg: ScenarioConfig, param: str, values, out_dir=None,
          oracle_tol: float | None = None) -> list:
    """Run the scenario once per value, in input order.

    ``sweep.csv`` holds value, final-time error and residual; wall times go to
    ``sweep_timing.csv`` so the main table stays byte-reproducible. The first
    failing run aborts the sweep with its own error.
    """
    values = list(values)
    if not values:
        raise ConfigError("values", "empty value list")
    cfgs = [apply_parameter(cfg, param, v) for v in values]
    rows = []
    for idx, (v, c) in enumerate(zip(values, cfgs)):
        sub = None if out_dir is None else Path(out_dir) / f"run_{idx:03d}"
        start = time.perf_counter()
        res = run_scenario(c, sub, oracle_tol)
        rows.append(SweepRow(v, res.final_error, res.chain.residual, c.order, c.points,
                             time.perf_counter() - start))
    if out_dir is not None:
        out_dir = Path(out_dir)
        csvio.write_table(out_dir / "sweep.csv", [param, "final_error", "residual", "order", "points"],
                          [[r.value, r.final_error, r.residual, r.order, r.points] for r in rows])
        csvio.write_table(out_dir / "sweep_timing.csv", [param, "wall_time"],
                          [[r.value, r.wall_time] for r in rows])
    return rows


def export_profile(cfg: ScenarioConfig, out_dir) -> Path:
    """Write the scenario's field curve on its grid as ``field.csv``."""
    grid = TimeGrid.uniform(cfg.T, cfg.points)
    curve = build_field(cfg, grid)
    path = Path(out_dir) / "field.csv"
    csvio.write_field_csv(path, curve, grid)
    return path


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario TOML file")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--oracle-tol", type=float, default=None,
                        help="override the oracle tolerance of the config")
    common.add_argument("--seedless", action="store_true",
                        help="fail if any random number generator is called")
    parser = argparse.ArgumentParser(prog="adiabatic-expansion",
                                     description="Adiabatic product expansion scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one scenario")
    sw = sub.add_parser("sweep", parents=[common], help="vary one parameter")
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, nargs="*", default=[],
                    help="comma or space separated values")
    sub.add_parser("profile", parents=[common], help="export the field curve as CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    guard = no_rng() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            cfg = load_config(args.config)
            if args.command == "run":
                res = run_scenario(cfg, args.out, args.oracle_tol)
                summary = {"status": "ok", "final_error": res.final_error,
                           "residual": res.chain.residual, "files": [str(f) for f in res.files]}
            elif args.command == "sweep":
                rows = sweep(cfg, args.param, parse_values(args.values), args.out, args.oracle_tol)
                summary = {"status": "ok", "runs": len(rows),
                           "files": [str(Path(args.out) / "sweep.csv")]}
            else:
                summary = {"status": "ok", "files": [str(export_profile(cfg, args.out))]}
    except ExpansionError as exc:
        print(diagnostic(exc), file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(json.dumps({"status": "error", "exit_code": EXIT_OTHER, "error": type(exc).__name__,
                          "message": str(exc)}), file=sys.stderr)
        return EXIT_OTHER
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
