"""Spin-j magnetic dipole in a time-dependent field.

H(t) = b r(t) [sin(theta) cos(phi) J1 + sin(theta) sin(phi) J2 + cos(theta) J3]

Everything here is closed form in terms of the field curve (r, theta, phi):
the single-valued eigenbasis W(theta, phi)|n>, its connection, the kinematics
of the field tip, the field that represents the next level Hamiltonian and
the level factors U^(i). The basis is ordered by ascending magnetic number
n = -j, ..., j.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import (
    ClosedFormMismatchError,
    GaugeSingularityError,
    RefinementError,
    ValidationError,
)
from .operators import TimeGrid
from .sources import HamiltonianSource, interpolant

# omega below this fraction of max(omega) counts as a stationary tip
STATIONARY_RTOL = 1e-12
DUALITY_RTOL = 1e-6


# --------------------------------------------------------------------------
# representation

@dataclass(frozen=True, eq=False)
class SpinRep:
    j: float
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray
    Jplus: np.ndarray
    Jminus: np.ndarray
    ladder: np.ndarray   # ladder[i] = <n+1|J+|n> for n = m[i], i < dim-1

    @property
    def dim(self) -> int:
        return self.J3.shape[0]

    @property
    def m(self) -> np.ndarray:
        """Magnetic numbers in basis order."""
        return np.real(np.diag(self.J3)).copy()

    @cached_property
    def _j2_eig(self):
        return np.linalg.eigh(self.J2)

    def rot2(self, theta) -> np.ndarray:
        """exp(-i theta J2); vectorised over ``theta``."""
        e, v = self._j2_eig
        theta = np.asarray(theta, dtype=float)
        ph = np.exp(-1j * theta[..., None] * e)
        return (v * ph[..., None, :]) @ v.conj().T

    def rot3(self, phi) -> np.ndarray:
        """exp(-i phi J3); vectorised over ``phi``."""
        phi = np.asarray(phi, dtype=float)
        ph = np.exp(-1j * phi[..., None] * self.m)
        return ph[..., :, None] * np.eye(self.dim)


def spin_matrices(j) -> SpinRep:
    """Angular momentum matrices for spin ``j`` with J3 diagonal.

    J+|n> = sqrt((j - n)(j + n + 1)) |n + 1>, which is what the commutation
    relations [J1, J2] = i J3 require.
    """
    twoj = 2 * float(j)
    if twoj < 0 or abs(twoj - round(twoj)) > 1e-12:
        raise ValidationError(f"j must be a non-negative half-integer, got {j!r}")
    twoj = int(round(twoj))
    j = twoj / 2
    dim = twoj + 1
    m = -j + np.arange(dim)
    ladder = np.sqrt((j - m[:-1]) * (j + m[:-1] + 1))
    jp = np.zeros((dim, dim), dtype=complex)
    jp[np.arange(1, dim), np.arange(dim - 1)] = ladder
    jm = jp.conj().T
    j1 = 0.5 * (jp + jm)
    j2 = -0.5j * (jp - jm)
    j3 = np.diag(m).astype(complex)
    for a in (j1, j2, j3, jp, jm, ladder):
        a.setflags(write=False)
    return SpinRep(j=j, J1=j1, J2=j2, J3=j3, Jplus=jp, Jminus=jm, ladder=ladder)


def direction(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    return np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1)


def _dot_j(rep: SpinRep, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, float)
    return (vec[..., 0, None, None] * rep.J1 + vec[..., 1, None, None] * rep.J2
            + vec[..., 2, None, None] * rep.J3)


def vector_components(rep: SpinRep, h: np.ndarray) -> np.ndarray:
    """(c1, c2, c3) with h = c . J, read off by trace projection."""
    norm = np.real(np.trace(rep.J3 @ rep.J3))
    return np.stack([np.real(np.trace(h @ J, axis1=-2, axis2=-1)) / norm
                     for J in (rep.J1, rep.J2, rep.J3)], axis=-1)


# --------------------------------------------------------------------------
# field curves

@dataclass(frozen=True, eq=False)
class FieldCurve:
    """Field curve (r, theta, phi)(t) with first derivatives.

    The six callables accept scalars or arrays. Level-0 curves normally carry
    analytic derivatives; derived curves (``level >= 1``) are splines through
    grid samples and differentiate the interpolant.
    """

    b: float
    r: object
    theta: object
    phi: object
    dr: object
    dtheta: object
    dphi: object
    level: int = 0
    grid: TimeGrid | None = None
    delta_factor: np.ndarray | None = None
    stationary: np.ndarray | None = None
    samples: dict | None = dc_field(default=None, repr=False)

    @property
    def r0(self) -> float:
        return float(self.r(0.0))

    @property
    def theta0(self) -> float:
        return float(self.theta(0.0))

    @property
    def phi0(self) -> float:
        return float(self.phi(0.0))

    @classmethod
    def from_samples(cls, b, grid: TimeGrid, r, theta, phi, level=0, delta_factor=None,
                     stationary=None) -> "FieldCurve":
        t = grid.times
        splines = [interpolant(t, np.asarray(y, float)) for y in (r, theta, phi)]
        ders = [s.derivative() for s in splines]
        samples = {"r": np.asarray(r, float), "theta": np.asarray(theta, float),
                   "phi": np.asarray(phi, float)}
        return cls(b, *splines, *ders, level=level, grid=grid,
                   delta_factor=None if delta_factor is None else np.asarray(delta_factor, float),
                   stationary=stationary, samples=samples)

    def sample(self, times) -> dict:
        t = np.asarray(times, float)
        return {k: np.broadcast_to(np.asarray(getattr(self, k)(t), float), t.shape).copy()
                for k in ("r", "theta", "phi", "dr", "dtheta", "dphi")}

    def validate(self, grid: TimeGrid) -> None:
        s = self.sample(grid.times)
        if not self.b > 0:
            raise ValidationError(f"Larmor frequency b must be positive, got {self.b}")
        if self.level == 0 and np.any(s["r"] <= 0):
            k = int(np.argmax(s["r"] <= 0))
            raise ValidationError(f"field radius must be positive; r={s['r'][k]:.3e} at t={grid.times[k]:.6g}")
        bad = (s["theta"] < 0) | (s["theta"] >= np.pi)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValidationError(f"theta must lie in [0, pi); theta={s['theta'][k]:.6g} at t={grid.times[k]:.6g}")


def _const(value):
    def f(t):
        t = np.asarray(t, float)
        return np.full(t.shape, float(value)) if t.ndim else float(value)
    return f


def precession(b, r, theta0, omega_p, phi0=0.0) -> FieldCurve:
    """Field of fixed length and tilt precessing about axis 3 at ``omega_p``."""
    return FieldCurve(
        b=float(b), r=_const(r), theta=_const(theta0),
        phi=lambda t: phi0 + omega_p * np.asarray(t, float),
        dr=_const(0.0), dtheta=_const(0.0), dphi=_const(omega_p),
    )


def radial_drive(b, r, dr, theta0, phi0) -> FieldCurve:
    """Fixed direction, time-dependent length ``r(t)`` with derivative ``dr``."""
    return FieldCurve(b=float(b), r=r, theta=_const(theta0), phi=_const(phi0),
                      dr=dr, dtheta=_const(0.0), dphi=_const(0.0))


def dipole_hamiltonian(rep: SpinRep, field: FieldCurve, t) -> np.ndarray:
    """b r (n . J) at time(s) ``t``."""
    s = field.sample(t)
    if field.level == 0 and np.any(s["r"] <= 0):
        raise ValidationError(f"field radius must be positive, got r={np.min(s['r']):.3e}")
    vec = field.b * s["r"][..., None] * direction(s["theta"], s["phi"])
    return _dot_j(rep, vec)


def dipole_derivative(rep: SpinRep, field: FieldCurve, t) -> np.ndarray:
    """dH/dt by the chain rule through (r, theta, phi)."""
    s = field.sample(t)
    th, ph, r = s["theta"], s["phi"], s["r"]
    n = direction(th, ph)
    n_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)
    n_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=-1)
    vec = field.b * (s["dr"][..., None] * n + r[..., None] * (s["dtheta"][..., None] * n_th
                                                             + s["dphi"][..., None] * n_ph))
    return _dot_j(rep, vec)


class DipoleSource(HamiltonianSource):
    """:class:`HamiltonianSource` view of a field curve, with analytic dH/dt."""

    def __init__(self, rep: SpinRep, field: FieldCurve):
        self.rep = rep
        self.field = field
        self.dim = rep.dim

    def eval(self, t):
        return dipole_hamiltonian(self.rep, self.field, float(t))

    @property
    def has_derivative(self):
        return True

    def eval_derivative(self, t):
        return dipole_derivative(self.rep, self.field, float(t))

    def eval_many(self, ts):
        return dipole_hamiltonian(self.rep, self.field, np.atleast_1d(np.asarray(ts, float)))

    def eval_derivative_many(self, ts):
        return dipole_derivative(self.rep, self.field, np.atleast_1d(np.asarray(ts, float)))


# --------------------------------------------------------------------------
# eigenbasis and connection

def wigner_w(rep: SpinRep, theta, phi) -> np.ndarray:
    """W(theta, phi) = exp(-i phi J3) exp(-i theta J2) exp(i phi J3)."""
    return rep.rot3(phi) @ rep.rot2(theta) @ rep.rot3(-np.asarray(phi, float))


def _check_gauge(theta, t=None):
    theta = np.asarray(theta, float)
    if np.any(np.abs(theta - np.pi) < 1e-12) or np.any(theta > np.pi):
        where = "" if t is None else f" at t={t}"
        raise GaugeSingularityError(f"theta reaches pi{where}; the W(theta, phi) basis is singular there")


def spin_eigenbasis(rep: SpinRep, field: FieldCurve, t) -> tuple[np.ndarray, np.ndarray]:
    """Columns |n;t> = W(theta(t), phi(t))|n> and eigenvalues n b r(t)."""
    s = field.sample(t)
    _check_gauge(s["theta"], t)
    vecs = wigner_w(rep, s["theta"], s["phi"])
    energies = rep.m * field.b * np.asarray(s["r"])[..., None]
    return vecs, energies


def spin_connection(rep: SpinRep, field: FieldCurve, t) -> np.ndarray:
    """A_mn(t) = <m;t|d/dt|n;t> for the W(theta, phi) basis.

    A = A_theta dtheta/dt + A_phi dphi/dt (the radial part vanishes) with
    A_theta = -i exp(-i phi J3) J2 exp(i phi J3) and
    A_phi = i (J3 - W^dagger J3 W).
    """
    s = field.sample(t)
    _check_gauge(s["theta"], t)
    th, ph = s["theta"], s["phi"]
    r3 = rep.rot3(ph)
    r3d = np.swapaxes(r3, -1, -2).conj()
    a_th = -1j * r3 @ rep.J2 @ r3d
    w = wigner_w(rep, th, ph)
    a_ph = 1j * (rep.J3 - np.swapaxes(w, -1, -2).conj() @ rep.J3 @ w)
    return a_th * np.asarray(s["dtheta"])[..., None, None] + a_ph * np.asarray(s["dphi"])[..., None, None]


# --------------------------------------------------------------------------
# tip kinematics and level phases

def _simpson_cumulative(values, mid_values, steps):
    inc = steps / 6.0 * (values[:-1] + 4.0 * mid_values + values[1:])
    return np.concatenate([[0.0], np.cumsum(inc)])


def _hold(values, mask):
    """Replace entries where ``mask`` is true by the last unmasked value
    (the first unmasked one for a leading run)."""
    out = np.array(values, float)
    good = np.flatnonzero(~mask)
    if good.size == 0:
        return np.zeros_like(out)
    idx = np.maximum.accumulate(np.where(~mask, np.arange(out.size), -1))
    idx[idx < 0] = good[0]
    return out[idx]


@dataclass(frozen=True)
class TipKinematics:
    grid: TimeGrid
    level: int
    omega: np.ndarray
    xi: np.ndarray
    sigma: np.ndarray
    Omega: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray
    stationary: np.ndarray   # bool mask of omega == 0 instants
    arclength: np.ndarray    # l(t) = int omega dt


@dataclass(frozen=True)
class LevelPhases:
    level: int
    grid: TimeGrid
    delta: np.ndarray
    gamma: np.ndarray
    arclength: np.ndarray | None = None
    X: np.ndarray | None = None
    Y: np.ndarray | None = None

    @property
    def alpha(self) -> np.ndarray:
        return self.delta + self.gamma

    def per_label(self, m: np.ndarray) -> dict:
        """delta_n, gamma_n, alpha_n = n times the level phase, shape (M, dim)."""
        m = np.asarray(m, float)
        return {"delta": np.outer(self.delta, m), "gamma": np.outer(self.gamma, m),
                "alpha": np.outer(self.alpha, m)}


def tip_kinematics(field: FieldCurve, grid: TimeGrid) -> TipKinematics:
    """omega, xi, sigma, Omega and the level phases of ``field`` on ``grid``.

    delta = -b int r and gamma = -int (1 - cos theta) dphi/dt use Simpson
    quadrature with interval midpoints. At omega = 0 instants xi is held by
    continuity.
    """
    s = field.sample(grid.times)
    mid = field.sample(grid.midpoints)
    h = grid.steps
    omega = np.sqrt(s["dtheta"] ** 2 + np.sin(s["theta"]) ** 2 * s["dphi"] ** 2)
    omega_mid = np.sqrt(mid["dtheta"] ** 2 + np.sin(mid["theta"]) ** 2 * mid["dphi"] ** 2)
    scale = float(np.max(omega)) if omega.size else 0.0
    stationary = omega <= STATIONARY_RTOL * scale if scale > 0 else np.ones_like(omega, bool)

    delta = -field.b * _simpson_cumulative(s["r"], mid["r"], h)
    gamma = -_simpson_cumulative((1 - np.cos(s["theta"])) * s["dphi"],
                                 (1 - np.cos(mid["theta"])) * mid["dphi"], h)
    alpha = delta + gamma
    arclength = _simpson_cumulative(omega, omega_mid, h)

    xi_raw = np.arctan2(s["dtheta"], np.sin(s["theta"]) * s["dphi"])
    xi = np.unwrap(_hold(xi_raw, stationary)) if not stationary.all() else np.zeros_like(omega)
    sigma = np.unwrap(-alpha - s["phi"] + xi)
    big_omega = np.exp(-1j * (alpha + s["phi"])) * (np.sin(s["theta"]) * s["dphi"] + 1j * s["dtheta"])
    return TipKinematics(grid=grid, level=field.level, omega=omega, xi=xi, sigma=sigma,
                         Omega=big_omega, alpha=alpha, delta=delta, gamma=gamma,
                         stationary=stationary, arclength=arclength)


def level_phases(kin: TipKinematics) -> LevelPhases:
    return LevelPhases(level=kin.level, grid=kin.grid, delta=kin.delta, gamma=kin.gamma,
                       arclength=kin.arclength)


# --------------------------------------------------------------------------
# level recursion

FORMULAS = ("printed", "corrected")


def next_level_direction(theta0, phi0, sigma, formula="printed"):
    """Unit-sphere data of the next level Hamiltonian.

    Returns (Delta, theta_next, phi_next_raw). ``printed`` uses the published
    Delta and theta formulas; ``corrected`` uses the rotation of
    (cos sigma, -sin sigma, 0) by W(theta0, phi0), for which Delta = 1 and the
    3-component is -sin(theta0) cos(sigma + phi0). Both agree when phi0 = 0.
    The azimuth is the two-argument arctangent of the J2 and J1 coefficients.
    """
    if formula not in FORMULAS:
        raise ValidationError(f"unknown formula {formula!r}; choose from {FORMULAS}")
    sigma = np.asarray(sigma, float)
    c2, s2 = np.cos(theta0 / 2) ** 2, np.sin(theta0 / 2) ** 2
    a1 = c2 * np.cos(sigma) - s2 * np.cos(2 * phi0 + sigma)
    a2 = -c2 * np.sin(sigma) - s2 * np.sin(2 * phi0 + sigma)
    if formula == "printed":
        delta_sq = 1 + np.sin(phi0) * np.sin(theta0) ** 2 * np.sin(phi0 + 2 * sigma)
        delta = np.sqrt(np.clip(delta_sq, 0.0, None))
        cos_th = -np.sin(theta0) * np.cos(sigma) / np.where(delta > 0, delta, 1.0)
    else:
        delta = np.ones_like(sigma)
        cos_th = -np.sin(theta0) * np.cos(sigma + phi0)
    theta_next = np.arccos(np.clip(cos_th, -1.0, 1.0))
    phi_next = np.arctan2(a2, a1)
    return delta, theta_next, phi_next


def level_field(field: FieldCurve, kin: TipKinematics, formula: str = "printed") -> FieldCurve:
    """Field (r, theta, phi) of the next level Hamiltonian, sampled on
    ``kin.grid``.

    r_next = omega Delta / b. Where the tip is stationary r_next = 0 and the
    angles are held at their last defined values.
    """
    grid = kin.grid
    theta0, phi0 = field.theta0, field.phi0
    delta, theta_n, phi_n = next_level_direction(theta0, phi0, kin.sigma, formula)
    r_n = kin.omega * delta / field.b
    r_n = np.where(kin.stationary, 0.0, r_n)
    theta_n = _hold(theta_n, kin.stationary)
    phi_n = np.unwrap(_hold(phi_n, kin.stationary))
    return FieldCurve.from_samples(field.b, grid, r_n, theta_n, phi_n, level=field.level + 1,
                                   delta_factor=delta, stationary=kin.stationary.copy())


@dataclass(frozen=True)
class DualityReport:
    """Closed-form vs generic comparison of one level Hamiltonian."""

    level: int
    formula: str
    max_relative_distance: float
    worst_index: int
    tolerance: float
    closed_form: np.ndarray = dc_field(repr=False)
    generic: np.ndarray = dc_field(repr=False)

    @property
    def passed(self) -> bool:
        return self.max_relative_distance <= self.tolerance


def duality_check(rep: SpinRep, field_next: FieldCurve, generic_samples: np.ndarray,
                  rtol: float = DUALITY_RTOL, formula: str = "printed") -> DualityReport:
    """Compare dipole_hamiltonian(field_next) with generic H^(i+1) samples.

    The relative distance at t_k is ||closed - generic|| / sup_k ||generic||.
    """
    grid = field_next.grid
    closed = dipole_hamiltonian(rep, field_next, grid.times)
    generic = np.asarray(generic_samples, complex)
    dist = np.linalg.norm(closed - generic, axis=(1, 2))
    scale = float(np.max(np.linalg.norm(generic, axis=(1, 2))))
    rel = dist / scale if scale > 0 else dist
    k = int(np.argmax(rel))
    return DualityReport(level=field_next.level, formula=formula, max_relative_distance=float(rel[k]),
                         worst_index=k, tolerance=rtol, closed_form=closed, generic=generic)


def field_from_samples(rep: SpinRep, b: float, grid: TimeGrid, samples: np.ndarray,
                       level: int) -> FieldCurve:
    """Read (r, theta, phi) off Hamiltonians of the form b r (n . J)."""
    c = vector_components(rep, samples)
    norm = np.linalg.norm(c, axis=-1)
    scale = float(np.max(norm)) if norm.size else 0.0
    zero = norm <= STATIONARY_RTOL * scale if scale > 0 else np.ones_like(norm, bool)
    safe = np.where(zero, 1.0, norm)
    theta = _hold(np.arccos(np.clip(c[:, 2] / safe, -1, 1)), zero)
    phi = np.unwrap(_hold(np.arctan2(c[:, 1], c[:, 0]), zero))
    return FieldCurve.from_samples(b, grid, norm / b, theta, phi, level=level, stationary=zero)


def checked_level_field(rep: SpinRep, field: FieldCurve, kin: TipKinematics,
                        generic_samples: np.ndarray, formula: str = "printed",
                        rtol: float = DUALITY_RTOL, fallback: bool = True):
    """:func:`level_field` guarded by the generic construction.

    Returns (field_next, report). When the closed form fails the duality
    check and ``fallback`` is true, the returned field is read off the generic
    samples instead and ``report.passed`` is false; without fallback a
    :class:`ClosedFormMismatchError` carrying both matrices is raised.
    """
    nxt = level_field(field, kin, formula)
    report = duality_check(rep, nxt, generic_samples, rtol, formula)
    if report.passed:
        return nxt, report
    if not fallback:
        k = report.worst_index
        raise ClosedFormMismatchError(
            f"closed-form level-{nxt.level} Hamiltonian differs from the generic one by "
            f"{report.max_relative_distance:.3e} (relative) at t={kin.grid.times[k]:.6g}",
            closed_form=report.closed_form[k], generic=report.generic[k],
            distance=report.max_relative_distance, time=float(kin.grid.times[k]),
        )
    return field_from_samples(rep, field.b, kin.grid, generic_samples, nxt.level), report


def closed_form_ui(rep: SpinRep, field: FieldCurve, phases: LevelPhases, k: int) -> np.ndarray:
    """Level factor W(theta(t_k), phi(t_k)) exp(i alpha(t_k) J3) W(theta(0), phi(0))^dagger."""
    t = float(phases.grid.times[k])
    s = field.sample(np.array([0.0, t]))
    _check_gauge(s["theta"])
    w_t = wigner_w(rep, s["theta"][1], s["phi"][1])
    w_0 = wigner_w(rep, s["theta"][0], s["phi"][0])
    return w_t @ rep.rot3(-phases.alpha[k]) @ w_0.conj().T


def closed_form_ui_all(rep: SpinRep, field: FieldCurve, phases: LevelPhases) -> np.ndarray:
    t = phases.grid.times
    s = field.sample(t)
    _check_gauge(s["theta"])
    w = wigner_w(rep, s["theta"], s["phi"])
    return w @ rep.rot3(-phases.alpha) @ w[0].conj().T


def phi0_zero_phases(field: FieldCurve, kin: TipKinematics) -> LevelPhases:
    """Closed-form level-1 phases for a level-0 field with phi0 = 0.

    delta1 = -l(t) with l the arclength of the tip path on the unit sphere.
    gamma1 = -arctan[(X - Y) / (1 + X Y)] = -(arctan X - arctan Y), continued
    by continuity, with
      X = -cos(th0) (tan s - tan s0) / (cos^2 th0 + tan s tan s0)
      Y = tan(arctan(tan(th0) sin s) - arctan(tan(th0) sin s0)),
    s = sigma(t), s0 = sigma(0). Both arctangents are evaluated as
    two-argument forms so poles of tan s do not matter.
    """
    if abs(field.phi0) > 1e-12:
        raise ValidationError(f"phi0 must be 0, got {field.phi0}")
    th0 = field.theta0
    sig, s0 = kin.sigma, kin.sigma[0]
    num_x = -np.cos(th0) * np.sin(sig - s0)
    den_x = np.cos(th0) ** 2 * np.cos(sig) * np.cos(s0) + np.sin(sig) * np.sin(s0)
    atan_x = np.arctan2(num_x, den_x)
    atan_y = np.arctan(np.tan(th0) * np.sin(sig)) - np.arctan(np.tan(th0) * np.sin(s0))
    raw = atan_x - atan_y
    steps = np.diff(raw)
    wrapped = (steps + np.pi / 2) % np.pi - np.pi / 2
    if np.any(np.abs(wrapped) > np.pi / 4):
        k = int(np.argmax(np.abs(wrapped) > np.pi / 4))
        raise RefinementError(
            f"gamma1 branch cannot be followed between t={kin.grid.times[k]:.6g} and "
            f"t={kin.grid.times[k + 1]:.6g}; refine the grid"
        )
    angle = np.concatenate([[0.0], np.cumsum(wrapped)])
    with np.errstate(divide="ignore", invalid="ignore"):
        x = num_x / den_x
    return LevelPhases(level=1, grid=kin.grid, delta=-kin.arclength, gamma=-angle,
                       arclength=kin.arclength, X=x, Y=np.tan(atan_y))
