"""Brute-force time-ordered exponential and the closed-form Rabi propagator.

These are the oracles every expansion result is checked against.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError
from .operators import TimeGrid, expm_unitary, expm_unitary_batch, op_distance
from .sources import HamiltonianSource

DEFAULT_TOL = 1e-9
MAX_SUBSTEPS = 2 ** 20
STALL_MIN_SUBSTEPS = 64
# complex entries per evaluation chunk
_CHUNK_ENTRIES = 2 ** 22


@dataclass(frozen=True)
class PropagatorResult:
    grid: TimeGrid
    unitaries: np.ndarray   # (M, d, d); unitaries[0] is the identity
    error_estimate: float
    substeps: int

    @property
    def final(self) -> np.ndarray:
        return self.unitaries[-1]


def _interval_products(source: HamiltonianSource, t0: np.ndarray, h: np.ndarray,
                       substeps: int) -> np.ndarray:
    """Ordered product of midpoint factors over each interval [t0, t0 + h]."""
    d = source.dim
    frac = (np.arange(substeps) + 0.5) / substeps
    per_chunk = max(1, _CHUNK_ENTRIES // (substeps * d * d))
    out = np.empty((t0.size, d, d), dtype=complex)
    for lo in range(0, t0.size, per_chunk):
        hi = min(lo + per_chunk, t0.size)
        tm = t0[lo:hi, None] + h[lo:hi, None] * frac[None, :]
        hs = np.asarray(source.eval_many(tm.ravel()), dtype=complex)
        dt = np.repeat(h[lo:hi] / substeps, substeps)
        f = expm_unitary_batch(hs, dt).reshape(hi - lo, substeps, d, d)
        while f.shape[1] > 1:
            if f.shape[1] % 2:
                f = np.concatenate([f, np.broadcast_to(np.eye(d), (f.shape[0], 1, d, d))], axis=1)
            f = f[:, 1::2] @ f[:, 0::2]
        out[lo:hi] = _nearest_unitary(f[:, 0])
    return out


def _nearest_unitary(u: np.ndarray) -> np.ndarray:
    # Polar factor. Thousands of eigh-based factors per interval drift off the
    # unitary group linearly in their count; this removes the drift, which
    # otherwise sets a floor near 1e-10 on the step-halving estimate.
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def _accumulate(products: np.ndarray) -> np.ndarray:
    d = products.shape[-1]
    u = np.empty((products.shape[0] + 1, d, d), dtype=complex)
    u[0] = np.eye(d)
    for k, p in enumerate(products):
        u[k + 1] = p @ u[k]
    return u


def propagate_fixed(source: HamiltonianSource, grid: TimeGrid, substeps: int) -> np.ndarray:
    """Propagator at every grid point with a fixed number of midpoint
    substeps per interval."""
    if substeps < 1:
        raise ValidationError("substeps must be >= 1")
    t = grid.times
    return _accumulate(_interval_products(source, t[:-1], np.diff(t), int(substeps)))


def propagate(source: HamiltonianSource, grid: TimeGrid, tol: float = DEFAULT_TOL,
              max_substeps: int = MAX_SUBSTEPS, start_substeps: int = 1) -> PropagatorResult:
    """Time-ordered exponential on ``grid`` with global step halving.

    The substep count per interval doubles until two consecutive refinements
    agree at the final time to within ``tol`` (Frobenius distance). Once past
    ``STALL_MIN_SUBSTEPS``, two consecutive refinements that fail to halve
    the estimate mean rounding has taken over, and the search stops early
    with a :class:`ConvergenceError` rather than doubling up to the cap.
    """
    if not tol > 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    s = int(start_substeps)
    previous = propagate_fixed(source, grid, s)
    estimate = np.inf
    stalls = 0
    while True:
        s *= 2
        if s > max_substeps:
            raise ConvergenceError(
                f"propagator did not reach tol={tol:.1e} within {max_substeps} substeps "
                f"per interval (achieved {estimate:.3e})",
                achieved=estimate, substeps=s // 2,
            )
        current = propagate_fixed(source, grid, s)
        last, estimate = estimate, op_distance(current[-1], previous[-1])
        if estimate <= tol:
            return PropagatorResult(grid, current, estimate, s)
        stalls = stalls + 1 if (s >= STALL_MIN_SUBSTEPS and estimate > 0.5 * last) else 0
        if stalls >= 2:
            raise ConvergenceError(
                f"propagator stalled at {estimate:.3e} (tol={tol:.1e}) with {s} substeps "
                "per interval; rounding floor reached",
                achieved=estimate, substeps=s,
            )
        previous = current


def rabi_oracle(b: float, r: float, theta0: float, omega: float, t: float, rep=None) -> np.ndarray:
    """Exact propagator for a field of fixed length ``r`` and polar angle
    ``theta0`` whose azimuth is ``omega * t`` (phi0 = 0).

    In the frame rotating about axis 3 at ``omega`` the Hamiltonian is static:
    U(t) = exp(-i omega t J3) exp(-i [(b r cos(theta0) - omega) J3 + b r sin(theta0) J1] t).
    ``rep`` defaults to spin 1/2.
    """
    if rep is None:
        from .spin import spin_matrices
        rep = spin_matrices(0.5)
    static = (b * r * np.cos(theta0) - omega) * rep.J3 + b * r * np.sin(theta0) * rep.J1
    return expm_unitary(rep.J3, omega * t) @ expm_unitary(static, t)
