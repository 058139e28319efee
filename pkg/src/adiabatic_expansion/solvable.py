"""Exactly solvable dipole drives.

Choosing the field length so that the phase sigma of the tip velocity is
constant makes the second-level Hamiltonian vanish, so U^(0) U^(1) is the
exact propagator. Given a path theta(phi) and a schedule phi(t) with
dphi/dt > 0 the required length is

    r = (dphi/dt / b) [cos(theta) - (d/dphi)(theta'/sin theta) / (1 + (theta'/sin theta)^2)]

where theta' = d theta / d phi.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import InfeasibleProfileError, ValidationError
from .expansion import expand, product_all
from .operators import TimeGrid
from .propagator import DEFAULT_TOL, propagate
from .spin import DipoleSource, FieldCurve, SpinRep, tip_kinematics

PHI_FD_STEP = 1e-3
T_FD_STEP = 1e-3


def _central(f, x, h):
    """Richardson-extrapolated centred difference (fourth order)."""
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


@dataclass(frozen=True, eq=False)
class SolvableProfile:
    theta_of_phi: object
    phi_of_t: object
    b: float
    grid: TimeGrid
    generated: FieldCurve
    positivity_margin: float
    dtheta_dphi: object = None
    d2theta_dphi2: object = None

    def sigma_dot(self) -> np.ndarray:
        """d sigma / dt on the grid, from the kinematic phase of the generated curve."""
        kin = tip_kinematics(self.generated, self.grid)
        return np.gradient(kin.sigma, self.grid.times, edge_order=2)


def _positivity(r_func, grid: TimeGrid):
    """Minimum of r on the grid and at interior extrema of its interpolant."""
    t = grid.times
    r = np.asarray(r_func(t), float)
    spline = CubicSpline(t, r)
    crit = spline.derivative().roots(extrapolate=False)
    crit = crit[(crit > t[0]) & (crit < t[-1])]
    cand_t = np.concatenate([t, crit])
    cand_r = np.concatenate([r, np.asarray(r_func(crit), float) if crit.size else []])
    return cand_t, cand_r


def solvable_radius(theta_of_phi, phi_of_t, b: float, grid: TimeGrid, *,
                    dtheta_dphi=None, d2theta_dphi2=None, dphi_dt=None) -> SolvableProfile:
    """Generate the field whose tip phase sigma is stationary.

    Derivatives of theta(phi) and phi(t) use the analytic callbacks when given,
    otherwise Richardson-extrapolated centred differences.
    """
    if not b > 0:
        raise ValidationError(f"b must be positive, got {b}")
    th = theta_of_phi
    th1 = dtheta_dphi or (lambda p: _central(th, np.asarray(p, float), PHI_FD_STEP))
    th2 = d2theta_dphi2 or (lambda p: _central(th1, np.asarray(p, float), PHI_FD_STEP))
    phidot = dphi_dt or (lambda t: _central(phi_of_t, np.asarray(t, float), T_FD_STEP))

    t = grid.times
    pd = np.asarray(phidot(t), float) * np.ones_like(t)
    if np.any(pd <= 0):
        k = int(np.argmax(pd <= 0))
        raise ValidationError(f"dphi/dt must be positive; got {pd[k]:.3e} at t={t[k]:.6g}")
    theta_grid = np.asarray(th(np.asarray(phi_of_t(t), float)), float) * np.ones_like(t)
    if np.any(np.sin(theta_grid) <= 1e-12) or np.any(theta_grid >= np.pi) or np.any(theta_grid <= 0):
        k = int(np.argmax((np.sin(theta_grid) <= 1e-12) | (theta_grid >= np.pi) | (theta_grid <= 0)))
        raise ValidationError(f"domain error: theta={theta_grid[k]:.6g} at t={t[k]:.6g} "
                              "reaches 0 or pi")

    def theta_t(tt):
        return np.asarray(th(np.asarray(phi_of_t(tt), float)), float) * np.ones_like(np.asarray(tt, float))

    def r_func(tt):
        tt = np.asarray(tt, float)
        p = np.asarray(phi_of_t(tt), float) * np.ones_like(tt)
        theta = np.asarray(th(p), float) * np.ones_like(tt)
        d1 = np.asarray(th1(p), float) * np.ones_like(tt)
        d2 = np.asarray(th2(p), float) * np.ones_like(tt)
        s = np.sin(theta)
        u = d1 / s
        du = d2 / s - d1 ** 2 * np.cos(theta) / s ** 2
        return np.asarray(phidot(tt), float) / b * (np.cos(theta) - du / (1 + u ** 2))

    def dtheta_t(tt):
        tt = np.asarray(tt, float)
        return np.asarray(th1(np.asarray(phi_of_t(tt), float)), float) * np.asarray(phidot(tt), float)

    cand_t, cand_r = _positivity(r_func, grid)
    margin = float(np.min(cand_r))
    if margin <= 0:
        bad = cand_t[cand_r <= 0]
        raise InfeasibleProfileError(
            f"generated radius is not positive on [{bad.min():.6g}, {bad.max():.6g}] "
            f"(min r = {margin:.3e})",
            interval=(float(bad.min()), float(bad.max())), min_radius=margin,
        )

    field = FieldCurve(
        b=float(b), r=r_func, theta=theta_t, phi=lambda tt: np.asarray(phi_of_t(tt), float) * np.ones_like(np.asarray(tt, float)),
        dr=lambda tt: _central(r_func, np.asarray(tt, float), T_FD_STEP),
        dtheta=dtheta_t,
        dphi=lambda tt: np.asarray(phidot(tt), float) * np.ones_like(np.asarray(tt, float)),
    )
    return SolvableProfile(theta_of_phi=th, phi_of_t=phi_of_t, b=float(b), grid=grid,
                           generated=field, positivity_margin=margin,
                           dtheta_dphi=th1, d2theta_dphi2=th2)


def constant_theta_profile(theta0: float, omega_p: float, b: float, grid: TimeGrid) -> SolvableProfile:
    """theta(phi) = theta0, phi = omega_p t: r = omega_p cos(theta0) / b."""
    return solvable_radius(
        lambda p: np.full(np.shape(p), float(theta0)), lambda t: omega_p * np.asarray(t, float),
        b, grid,
        dtheta_dphi=lambda p: np.zeros(np.shape(p)), d2theta_dphi2=lambda p: np.zeros(np.shape(p)),
        dphi_dt=lambda t: np.full(np.shape(t), float(omega_p)),
    )


def scaled_radius(field: FieldCurve, factor: float) -> FieldCurve:
    """The same path with the field length multiplied by ``factor``."""
    r, dr = field.r, field.dr
    return dataclasses.replace(field, r=lambda t: factor * np.asarray(r(t)),
                               dr=lambda t: factor * np.asarray(dr(t)))


@dataclass(frozen=True)
class Certificate:
    granted: bool
    tol: float
    residual: float
    residual_bound: float
    h0_norm: float
    final_distance: float
    max_distance: float
    distances: np.ndarray
    depth: int
    exact_flag: bool
    oracle_error: float
    sigma_dot_max: float | None = None

    def summary(self) -> dict:
        return {
            "granted": self.granted, "tol": self.tol, "residual": self.residual,
            "residual_bound": self.residual_bound, "h0_norm": self.h0_norm,
            "final_distance": self.final_distance, "max_distance": self.max_distance,
            "depth": self.depth, "exact_flag": self.exact_flag,
            "oracle_error": self.oracle_error,
            "sigma_dot_max": np.nan if self.sigma_dot_max is None else self.sigma_dot_max,
        }


def certify_exact(profile, rep: SpinRep, grid: TimeGrid, tol: float = 1e-6,
                  oracle_tol: float = DEFAULT_TOL, gauge_policy: str = "positive-overlap",
                  oracle=None) -> Certificate:
    """Check that U^(0) U^(1) reproduces the propagator of a drive.

    ``profile`` is a :class:`SolvableProfile` or a bare :class:`FieldCurve`.
    The certificate is granted when sup ||H^(2)|| <= tol sup ||H^(0)|| and the
    product is within ``tol`` of the oracle at every grid point (including T).
    Failure is reported, not raised.
    """
    field = profile.generated if isinstance(profile, SolvableProfile) else profile
    source = DipoleSource(rep, field)
    chain = expand(source, grid, 1, gauge_policy=gauge_policy)
    approx = product_all(chain)
    if oracle is None:
        oracle = propagate(source, grid, oracle_tol)
    dist = np.linalg.norm(oracle.unitaries - approx, axis=(1, 2))
    h0 = chain.level_norms[0]
    residual = chain.residual
    bound = tol * h0
    granted = bool(residual <= bound and float(dist.max()) <= tol)
    sig = None
    if isinstance(profile, SolvableProfile):
        sig = float(np.max(np.abs(profile.sigma_dot())))
    return Certificate(granted=granted, tol=tol, residual=residual, residual_bound=bound,
                       h0_norm=h0, final_distance=float(dist[-1]), max_distance=float(dist.max()),
                       distances=dist, depth=chain.depth, exact_flag=chain.exact,
                       oracle_error=oracle.error_estimate, sigma_dot_max=sig)
