"""Dense operator primitives: Hermitian eigensolver, unitary exponentials,
distances and defect metrics.

Units: hbar = 1, so ``expm_unitary(H, dt)`` is ``exp(-i H dt)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

HERMITIAN_RTOL = 1e-12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise ValidationError(f"expected a non-empty square matrix, got shape {m.shape}")
    return m


def hermiticity_defect(m) -> float:
    """max|M - M^dagger| (absolute)."""
    m = np.asarray(m, dtype=complex)
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2).conj()))) if m.size else 0.0


def check_hermitian(m: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    scale = float(np.max(np.abs(m))) if m.size else 0.0
    defect = hermiticity_defect(m)
    if defect > rtol * max(scale, np.finfo(float).tiny):
        if scale == 0.0 and defect == 0.0:
            return
        raise ValidationError(
            f"matrix is not Hermitian: max|M - M^dagger| = {defect:.3e} "
            f"exceeds {rtol:.0e} * max|M| = {rtol * scale:.3e}"
        )


def eigh(h, rtol: float = HERMITIAN_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Returns ascending eigenvalues and a unitary matrix whose columns are the
    corresponding eigenvectors.
    """
    h = as_matrix(h)
    check_hermitian(h, rtol)
    sym = 0.5 * (h + h.conj().T)
    try:
        energies, vectors = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(sym)
        raise NumericalError(
            f"Hermitian eigensolver failed ({exc}); condition number {cond:.3e}"
        ) from exc
    return energies, vectors


def expm_unitary(h, dt: float) -> np.ndarray:
    """exp(-i H dt) for Hermitian ``h``, built from its eigen-decomposition."""
    energies, vectors = eigh(h)
    return (vectors * np.exp(-1j * energies * dt)) @ vectors.conj().T


def expm_unitary_batch(hs: np.ndarray, dt) -> np.ndarray:
    """Vectorised :func:`expm_unitary` over a stack ``hs`` of shape (n, d, d).

    No Hermiticity validation; callers pass matrices they built themselves.
    """
    hs = np.asarray(hs, dtype=complex)
    sym = 0.5 * (hs + np.swapaxes(hs, -1, -2).conj())
    energies, vectors = np.linalg.eigh(sym)
    phases = np.exp(-1j * energies * np.asarray(dt, dtype=float)[..., None])
    return (vectors * phases[..., None, :]) @ np.swapaxes(vectors, -1, -2).conj()


def op_distance(a, b) -> float:
    """Frobenius norm of ``a - b``. Global phase is *not* factored out."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def unitarity_defect(u) -> float:
    """max-entry norm of U^dagger U - I."""
    u = np.asarray(u, dtype=complex)
    d = u.shape[-1]
    return float(np.max(np.abs(np.swapaxes(u, -1, -2).conj() @ u - np.eye(d))))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing sample times starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValidationError("a time grid needs at least 2 points")
        if t[0] != 0.0:
            raise ValidationError(f"a time grid must start at 0, got {t[0]!r}")
        if np.any(np.diff(t) <= 0.0):
            raise ValidationError("grid times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, points: int) -> "TimeGrid":
        if T <= 0:
            raise ValidationError(f"final time must be positive, got {T}")
        if points < 2:
            raise ValidationError("a time grid needs at least 2 points")
        return cls(np.linspace(0.0, T, int(points)))

    def __len__(self) -> int:
        return self.times.size

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.times[1:] + self.times[:-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)
