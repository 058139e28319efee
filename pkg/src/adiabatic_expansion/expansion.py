"""Adiabatic product expansion U ~ U^(0) U^(1) ... U^(N).

Level i takes the Hamiltonian H^(i) (the input for i = 0, a spline through
grid samples otherwise), builds its eigenframe and adiabatic factor U^(i),
and hands the moving-frame Hamiltonian H^(i+1) to the next level.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, ResolutionError, ValidationError
from .operators import TimeGrid
from .sources import HamiltonianSource, SampledSource
from .spectral import EigenFrame, build_eigenframe, build_u0_all, h1_samples

MAX_ORDER = 4
EXACT_RTOL = 1e-8
RESOLUTION_RTOL = 1e-4


@dataclass(frozen=True)
class ExpansionLevel:
    index: int
    source: HamiltonianSource
    samples: np.ndarray           # H^(i)(t_k), (M, d, d)
    frame: EigenFrame
    unitaries: np.ndarray         # U^(i)(t_k), (M, d, d)
    interpolation_residual: float

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.samples, axis=(1, 2))))


@dataclass(frozen=True)
class ExpansionChain:
    order: int                    # requested N
    grid: TimeGrid
    levels: list
    next_samples: np.ndarray      # H^(L)(t_k) where L = len(levels)
    exact: bool
    gauge_policy: str
    level_norms: list = field(default_factory=list)   # sup ||H^(i)||, i = 0..L

    @property
    def depth(self) -> int:
        """Number of factors actually built (may be < order + 1 when exact)."""
        return len(self.levels)

    @property
    def residual(self) -> float:
        return float(np.max(np.linalg.norm(self.next_samples, axis=(1, 2))))

    @property
    def exact_level(self) -> int | None:
        """Index of the last factor of an exact product, else None."""
        return self.depth - 1 if self.exact else None


def expand(source: HamiltonianSource, grid: TimeGrid, order: int,
           gauge_policy: str = "positive-overlap", exact_rtol: float = EXACT_RTOL,
           resolution_rtol: float = RESOLUTION_RTOL) -> ExpansionChain:
    """Build levels 0..order of the product expansion.

    The chain stops early, flagged exact, when some sup_t ||H^(i)|| drops to
    ``exact_rtol`` times sup_t ||H^(0)||; the final H^(order+1) is kept for
    the residual and also sets the exact flag when it is negligible.
    """
    if int(order) != order or not 0 <= order <= MAX_ORDER:
        raise ValidationError(f"order must be an integer in [0, {MAX_ORDER}], got {order!r}")
    order = int(order)
    samples = np.asarray(source.eval_many(grid.times), dtype=complex)
    sup0 = float(np.max(np.linalg.norm(samples, axis=(1, 2))))
    threshold = exact_rtol * sup0

    levels = []
    norms = [sup0]
    current = source
    exact = False
    for i in range(order + 1):
        if i > 0:
            if norms[-1] <= threshold:
                exact = True
                break
            est = current.interpolation_residual()
            if est > resolution_rtol:
                raise ResolutionError(
                    f"grid too coarse for H^({i}): interpolation residual {est:.3e} "
                    f"exceeds {resolution_rtol:.1e}"
                )
        else:
            est = 0.0
        try:
            frame = build_eigenframe(current, grid, gauge_policy)
            nxt = h1_samples(frame, current)
        except DegeneracyError as exc:
            exc.level_index = i
            exc.args = (f"level {i}: {exc.args[0]}",)
            raise
        levels.append(ExpansionLevel(i, current, samples, frame, build_u0_all(frame), est))
        samples = nxt
        norms.append(float(np.max(np.linalg.norm(samples, axis=(1, 2)))))
        current = SampledSource(grid, samples)
    else:
        exact = norms[-1] <= threshold

    return ExpansionChain(order=order, grid=grid, levels=levels, next_samples=samples,
                          exact=exact, gauge_policy=gauge_policy, level_norms=norms)


def product_approximation(chain: ExpansionChain, k: int, upto: int | None = None) -> np.ndarray:
    """U^(0)(t_k) U^(1)(t_k) ... U^(upto)(t_k), left to right."""
    levels = chain.levels if upto is None else chain.levels[: upto + 1]
    d = levels[0].unitaries.shape[-1]
    out = np.eye(d, dtype=complex)
    for lvl in levels:
        out = out @ lvl.unitaries[k]
    return out


def product_all(chain: ExpansionChain, upto: int | None = None) -> np.ndarray:
    """:func:`product_approximation` at every grid index, shape (M, d, d)."""
    levels = chain.levels if upto is None else chain.levels[: upto + 1]
    out = levels[0].unitaries.copy()
    for lvl in levels[1:]:
        out = out @ lvl.unitaries
    return out


def residual_norm(chain: ExpansionChain) -> float:
    """sup_t ||H^(L)(t)|| for the first level L not included in the product."""
    return chain.residual
