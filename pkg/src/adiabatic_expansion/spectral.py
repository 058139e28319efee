"""Instantaneous eigenframes, adiabatic phases and the first moving-frame
Hamiltonian.

The frame is built on the grid *and* on the interval midpoints. Midpoints
serve two purposes: Simpson quadrature of the dynamical phase, and a
Richardson-extrapolated geometric phase. The geometric phase increment over
an interval is taken from the phase of the overlap of neighbouring
eigenvectors (the log form of a centred difference of <n|d/dt|n>), so any
change of eigenvector phase convention telescopes out of
``exp(i gamma_n(t)) |n;t>`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, TrackingError, ValidationError
from .operators import TimeGrid, hermiticity_defect
from .sources import HamiltonianSource, SampledSource, finite_difference_derivative

GAUGE_POLICIES = ("positive-overlap", "first-component-real")
GAP_RTOL = 1e-9
TRACKING_AMBIGUITY = 1e-6
# pivot of the first-component-real gauge is kept while it is at least this
# fraction of the largest component
PIVOT_KEEP = 0.5


@dataclass(frozen=True)
class EigenFrame:
    grid: TimeGrid
    gauge_policy: str
    energies: np.ndarray          # (M, d), tracked labels
    frames: np.ndarray            # (M, d, d), columns |n;t_k>
    mid_energies: np.ndarray      # (M-1, d)
    mid_frames: np.ndarray        # (M-1, d, d)
    dynamical_phase: np.ndarray   # (M, d)
    geometric_phase: np.ndarray   # (M, d)
    min_gap: float
    gap_tolerance: float
    connection_real_residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def total_phase(self) -> np.ndarray:
        return self.dynamical_phase + self.geometric_phase

    @property
    def dim(self) -> int:
        return self.energies.shape[1]

    def __len__(self):
        return len(self.grid)


def _fine_times(grid: TimeGrid) -> np.ndarray:
    t = grid.times
    fine = np.empty(2 * t.size - 1)
    fine[0::2] = t
    fine[1::2] = grid.midpoints
    return fine


def _check_samples(hs: np.ndarray, times: np.ndarray, rtol: float = 1e-10) -> None:
    scale = max(float(np.max(np.abs(hs))), np.finfo(float).tiny)
    defects = np.max(np.abs(hs - np.swapaxes(hs, -1, -2).conj()), axis=(1, 2))
    bad = np.flatnonzero(defects > rtol * scale)
    if bad.size:
        k = bad[0]
        raise ValidationError(
            f"H(t) is not Hermitian at t={times[k]:.6g}: defect {defects[k]:.3e}"
        )


def _track(energies: np.ndarray, vectors: np.ndarray, times: np.ndarray):
    """Reorder eigenpairs so label n follows maximum overlap with the
    previous sample. Labels are the ascending order at the first sample."""
    n_pts, d = energies.shape
    out_e = energies.copy()
    out_v = vectors.copy()
    for s in range(1, n_pts):
        ov = np.abs(out_v[s - 1].conj().T @ vectors[s])
        perm = np.argmax(ov, axis=1)
        if d > 1:
            top2 = np.sort(ov, axis=1)[:, -2:]
            amb = np.flatnonzero(top2[:, 1] - top2[:, 0] <= TRACKING_AMBIGUITY)
            if amb.size:
                raise TrackingError(
                    f"ambiguous level matching at t={times[s]:.6g} for level {amb[0]}: "
                    f"overlaps {top2[amb[0], 1]:.9f} and {top2[amb[0], 0]:.9f}"
                )
        if np.unique(perm).size != d:
            raise TrackingError(f"level matching is not one-to-one at t={times[s]:.6g}")
        out_e[s] = energies[s, perm]
        out_v[s] = vectors[s][:, perm]
    return out_e, out_v


def _fix_gauge(vectors: np.ndarray, policy: str) -> np.ndarray:
    n_pts, d, _ = vectors.shape
    out = vectors.copy()
    if policy == "positive-overlap":
        first = out[0]
        piv = np.argmax(np.abs(first), axis=0)
        ph = first[piv, np.arange(d)]
        out[0] = first * (ph.conj() / np.abs(ph))
        for s in range(1, n_pts):
            ov = np.einsum("ij,ij->j", out[s - 1].conj(), out[s])
            out[s] = out[s] * (ov.conj() / np.abs(ov))
    elif policy == "first-component-real":
        pivots = np.argmax(np.abs(out[0]), axis=0)
        cols = np.arange(d)
        for s in range(n_pts):
            mags = np.abs(out[s])
            weak = mags[pivots, cols] < PIVOT_KEEP * mags.max(axis=0)
            if np.any(weak):
                pivots = np.where(weak, np.argmax(mags, axis=0), pivots)
            ph = out[s][pivots, cols]
            out[s] = out[s] * (ph.conj() / np.abs(ph))
    else:
        raise ValidationError(f"unknown gauge policy {policy!r}; choose from {GAUGE_POLICIES}")
    return out


def _overlap_phase(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """arg <a_n|b_n> per column n for stacks of column matrices."""
    return np.angle(np.einsum("...ij,...ij->...j", a.conj(), b))


def build_eigenframe(source: HamiltonianSource, grid: TimeGrid,
                     gauge_policy: str = "positive-overlap",
                     gap_rtol: float = GAP_RTOL) -> EigenFrame:
    """Track, gauge-fix and phase-accumulate the eigenvectors of ``source``."""
    if gauge_policy not in GAUGE_POLICIES:
        raise ValidationError(f"unknown gauge policy {gauge_policy!r}; choose from {GAUGE_POLICIES}")
    fine_t = _fine_times(grid)
    hs = np.asarray(source.eval_many(fine_t), dtype=complex)
    if hs.shape != (fine_t.size, source.dim, source.dim):
        raise ValidationError(f"source returned shape {hs.shape}, expected dim {source.dim}")
    _check_samples(hs, fine_t)
    hs = 0.5 * (hs + np.swapaxes(hs, -1, -2).conj())
    energies, vectors = np.linalg.eigh(hs)

    d = source.dim
    scale = float(np.max(np.abs(energies)))
    gap_tol = gap_rtol * scale
    if d > 1:
        gaps = np.diff(energies, axis=1)
        where = np.unravel_index(np.argmin(gaps), gaps.shape)
        min_gap = float(gaps[where])
        if not min_gap > gap_tol:
            s, lvl = where
            raise DegeneracyError(
                f"levels {lvl} and {lvl + 1} are degenerate at t={fine_t[s]:.6g} "
                f"(gap {min_gap:.3e} <= {gap_tol:.3e})",
                time=float(fine_t[s]), levels=(int(lvl), int(lvl + 1)), gap=min_gap,
            )
    else:
        min_gap = np.inf

    energies, vectors = _track(energies, vectors, fine_t)
    vectors = _fix_gauge(vectors, gauge_policy)

    e_grid, e_mid = energies[0::2], energies[1::2]
    v_grid, v_mid = vectors[0::2], vectors[1::2]
    h = grid.steps[:, None]

    # Simpson on each interval with the midpoint sample
    dyn_inc = -h / 6.0 * (e_grid[:-1] + 4.0 * e_mid + e_grid[1:])
    # Pancharatnam increments on the fine (h/2) and coarse (h) sequences,
    # Richardson-combined to cancel the O(h^2) chord error
    fine_inc = -_overlap_phase(vectors[:-1], vectors[1:])
    coarse_inc = -_overlap_phase(v_grid[:-1], v_grid[1:])
    fine_pair = fine_inc[0::2] + fine_inc[1::2]
    geo_inc = fine_pair + (fine_pair - coarse_inc) / 3.0

    zeros = np.zeros((1, d))
    dynamical = np.concatenate([zeros, np.cumsum(dyn_inc, axis=0)])
    geometric = np.concatenate([zeros, np.cumsum(geo_inc, axis=0)])

    # Re<n|d/dt|n> from a plain centred difference; zero for exact unit vectors
    re_conn = 0.0
    if len(grid) > 2:
        diff = np.einsum("kij,kij->kj", v_grid[1:-1].conj(), v_mid[1:] - v_mid[:-1])
        re_conn = float(np.max(np.abs(diff.real) / h[1:]))

    return EigenFrame(
        grid=grid, gauge_policy=gauge_policy,
        energies=e_grid, frames=v_grid, mid_energies=e_mid, mid_frames=v_mid,
        dynamical_phase=dynamical, geometric_phase=geometric,
        min_gap=float(min_gap), gap_tolerance=gap_tol,
        connection_real_residual=re_conn,
    )


def build_u0(frame: EigenFrame, k: int) -> np.ndarray:
    """sum_n exp(i alpha_n(t_k)) |n;t_k><n;0|."""
    v = frame.frames
    return (v[k] * np.exp(1j * frame.total_phase[k])) @ v[0].conj().T


def build_u0_all(frame: EigenFrame) -> np.ndarray:
    """:func:`build_u0` at every grid index, shape (M, d, d)."""
    v = frame.frames
    return (v * np.exp(1j * frame.total_phase)[:, None, :]) @ v[0].conj().T


def _local_step(grid: TimeGrid, k: int) -> float:
    steps = grid.steps
    if k == 0:
        return float(steps[0])
    if k == len(grid) - 1:
        return float(steps[-1])
    return float(min(steps[k - 1], steps[k]))


def hamiltonian_derivative(source: HamiltonianSource, grid: TimeGrid,
                           fd_step: float | None = None,
                           richardson: bool = False) -> np.ndarray:
    """dH/dt at every grid point: analytic when the source has it, otherwise
    centred differences with step ``fd_step`` (default: local spacing / 4)."""
    if source.has_derivative:
        return np.asarray(source.eval_derivative_many(grid.times), dtype=complex)
    out = []
    for k, t in enumerate(grid.times):
        step = fd_step if fd_step is not None else _local_step(grid, k) / 4.0
        out.append(finite_difference_derivative(source, float(t), step, richardson))
    return np.stack(out)


def _gap_matrix(energies: np.ndarray, tol: float, t: float) -> np.ndarray:
    """E_m - E_n with the diagonal set to 1; raises on gap underflow."""
    gaps = energies[:, None] - energies[None, :]
    d = energies.size
    off = ~np.eye(d, dtype=bool)
    if d > 1 and np.min(np.abs(gaps[off])) <= tol:
        m, n = np.argwhere(off & (np.abs(gaps) <= tol))[0]
        raise DegeneracyError(
            f"gap between levels {m} and {n} underflows at t={t:.6g}",
            time=t, levels=(int(m), int(n)), gap=float(abs(gaps[m, n])),
        )
    gaps[~off] = 1.0
    return gaps


def connection_matrix(frame: EigenFrame, source: HamiltonianSource, k: int,
                      fd_step: float | None = None, richardson: bool = False) -> np.ndarray:
    """A_mn(t_k) = <m;t_k| d/dt |n;t_k> in the frame's gauge.

    Off-diagonal entries come from <m|dH/dt|n>/(E_n - E_m); the diagonal is
    the centred derivative of arg<n;t_k|n;t> using the midpoint frames, so it
    is purely imaginary by construction.
    """
    grid = frame.grid
    m_pts = len(grid)
    if not 0 <= k < m_pts:
        raise ValidationError(f"grid index {k} out of range [0, {m_pts})")
    t = float(grid.times[k])
    if source.has_derivative:
        hdot = source.eval_derivative(t)
    else:
        step = fd_step if fd_step is not None else _local_step(grid, k) / 4.0
        hdot = finite_difference_derivative(source, t, step, richardson)
    v = frame.frames[k]
    x = v.conj().T @ hdot @ v
    gaps = _gap_matrix(frame.energies[k], frame.gap_tolerance, t)
    a = x / (-gaps)  # A_mn = X_mn / (E_n - E_m)

    times, vm = grid.times, frame.mid_frames
    if 0 < k < m_pts - 1:
        fwd = _overlap_phase(v, vm[k])
        bwd = _overlap_phase(v, vm[k - 1])
        rate = (fwd - bwd) / (grid.midpoints[k] - grid.midpoints[k - 1])
    elif k == 0:
        half = grid.midpoints[0] - times[0]
        f1 = _overlap_phase(v, vm[0])
        f2 = _overlap_phase(v, frame.frames[1])
        rate = (4.0 * f1 - f2) / (2.0 * half)
    else:
        half = times[-1] - grid.midpoints[-1]
        f1 = _overlap_phase(v, vm[-1])
        f2 = _overlap_phase(v, frame.frames[-2])
        rate = -(4.0 * f1 - f2) / (2.0 * half)
    a[np.diag_indices_from(a)] = 1j * rate
    return a


def h1_samples(frame: EigenFrame, source: HamiltonianSource,
               fd_step: float | None = None, richardson: bool = False) -> np.ndarray:
    """Moving-frame Hamiltonian H^(1)(t_k) at every grid point, expressed in
    the frozen basis {|n;0>}; shape (M, d, d)."""
    hdot = hamiltonian_derivative(source, frame.grid, fd_step, richardson)
    v = frame.frames
    x = np.swapaxes(v, -1, -2).conj() @ hdot @ v
    alpha = frame.total_phase
    e = frame.energies
    gaps = e[:, :, None] - e[:, None, :]
    d = frame.dim
    off = ~np.eye(d, dtype=bool)
    if d > 1:
        bad = np.abs(gaps[:, off]) <= frame.gap_tolerance
        if np.any(bad):
            k = int(np.argwhere(bad)[0][0])
            raise DegeneracyError(
                f"gap underflow while forming H^(1) at t={frame.grid.times[k]:.6g}",
                time=float(frame.grid.times[k]),
            )
    gaps[:, ~off] = 1.0
    phase = np.exp(-1j * (alpha[:, :, None] - alpha[:, None, :]))
    m = 1j * phase * x / gaps
    m[:, ~off] = 0.0
    m = 0.5 * (m + np.swapaxes(m, -1, -2).conj())
    v0 = v[0]
    return v0 @ m @ v0.conj().T


def build_h1(frame: EigenFrame, source: HamiltonianSource,
             fd_step: float | None = None, richardson: bool = False) -> SampledSource:
    """H^(1) as a sampled, spline-interpolated source on the frame's grid."""
    return SampledSource(frame.grid, h1_samples(frame, source, fd_step, richardson))


def moving_frame_hamiltonian(u_family, source: HamiltonianSource, grid: TimeGrid,
                             k: int) -> np.ndarray:
    """U H U^dagger - i U dU^dagger/dt at t_k for a unitary family sampled on
    ``grid`` (shape (M, d, d)); the derivative is a second-order finite
    difference of the samples."""
    u = np.asarray(u_family, dtype=complex)
    if u.shape[0] != len(grid):
        raise ValidationError("unitary family must be sampled on the given grid")
    udag = np.swapaxes(u, -1, -2).conj()
    dudag = np.gradient(udag, grid.times, axis=0, edge_order=2)[k]
    h = source.eval(float(grid.times[k]))
    return u[k] @ h @ udag[k] - 1j * u[k] @ dudag


def h1_offdiagonal_defect(h1: np.ndarray, frame: EigenFrame) -> np.ndarray:
    """max_n |<n;0|H1(t_k)|n;0>| / ||H1(t_k)|| per grid point (0 where H1=0)."""
    v0 = frame.frames[0]
    inner = v0.conj().T @ h1 @ v0
    diag = np.max(np.abs(np.diagonal(inner, axis1=-2, axis2=-1)), axis=-1)
    norms = np.linalg.norm(h1, axis=(-2, -1))
    return np.where(norms > 0, diag / np.where(norms > 0, norms, 1.0), 0.0)


def hermiticity_defects(samples: np.ndarray) -> np.ndarray:
    return np.array([hermiticity_defect(s) for s in samples])
