"""Time-dependent Hamiltonian families.

A source evaluates H(t) (and optionally dH/dt) at arbitrary times inside its
span. Two concrete kinds exist: :class:`FunctionSource` wraps callables and
:class:`SampledSource` interpolates matrices given on a grid with a cubic
spline, which is how derived level Hamiltonians H^(i), i >= 1, are carried.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline, make_interp_spline

from .errors import ValidationError
from .operators import TimeGrid


SPLINE_DEGREE = 5


def interpolant(times, values):
    """Degree-5 interpolating spline along axis 0 (cubic on short grids)."""
    times = np.asarray(times, float)
    if times.size > SPLINE_DEGREE:
        return make_interp_spline(times, values, k=SPLINE_DEGREE, axis=0)
    return CubicSpline(times, values, axis=0)


class HamiltonianSource:
    """Base class. Subclasses implement :meth:`eval` and may implement
    :meth:`eval_derivative`; the ``*_many`` variants default to loops."""

    dim: int

    def eval(self, t: float) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_derivative(self) -> bool:
        return False

    def eval_derivative(self, t: float) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic derivative")

    def eval_many(self, ts) -> np.ndarray:
        return np.stack([self.eval(float(t)) for t in np.atleast_1d(ts)])

    def eval_derivative_many(self, ts) -> np.ndarray:
        return np.stack([self.eval_derivative(float(t)) for t in np.atleast_1d(ts)])


class FunctionSource(HamiltonianSource):
    """H(t) given by a callable.

    ``func(t)`` must return a (dim, dim) Hermitian matrix. If ``vectorized`` is
    true, ``func`` (and ``derivative``) also accept a 1-d array of times and
    return an (n, dim, dim) stack, which the reference propagator exploits.
    """

    def __init__(self, dim: int, func, derivative=None, vectorized: bool = False):
        if int(dim) < 1:
            raise ValidationError(f"dimension must be positive, got {dim}")
        self.dim = int(dim)
        self._func = func
        self._derivative = derivative
        self._vectorized = vectorized

    def eval(self, t):
        return np.asarray(self._func(float(t)), dtype=complex)

    @property
    def has_derivative(self):
        return self._derivative is not None

    def eval_derivative(self, t):
        if self._derivative is None:
            return super().eval_derivative(t)
        return np.asarray(self._derivative(float(t)), dtype=complex)

    def eval_many(self, ts):
        if self._vectorized:
            return np.asarray(self._func(np.atleast_1d(np.asarray(ts, float))), dtype=complex)
        return super().eval_many(ts)

    def eval_derivative_many(self, ts):
        if self._vectorized and self._derivative is not None:
            return np.asarray(
                self._derivative(np.atleast_1d(np.asarray(ts, float))), dtype=complex
            )
        return super().eval_derivative_many(ts)


def constant_source(h) -> FunctionSource:
    """A time-independent source (dH/dt = 0)."""
    h = np.array(h, dtype=complex)
    zero = np.zeros_like(h)

    def func(t):
        t = np.asarray(t)
        return np.broadcast_to(h, t.shape + h.shape).copy() if t.ndim else h

    def deriv(t):
        t = np.asarray(t)
        return np.broadcast_to(zero, t.shape + h.shape).copy() if t.ndim else zero

    return FunctionSource(h.shape[0], func, deriv, vectorized=True)


class SampledSource(HamiltonianSource):
    """Matrices sampled on a grid, spline-interpolated in between.

    The interpolant is a degree-5 B-spline (cubic for grids shorter than six
    points); its derivative serves as dH/dt. Hermiticity of the samples
    carries over to the interpolant because the spline is linear in the data.
    """

    def __init__(self, grid: TimeGrid, samples):
        samples = np.asarray(samples, dtype=complex)
        if samples.ndim != 3 or samples.shape[0] != len(grid) or samples.shape[1] != samples.shape[2]:
            raise ValidationError(
                f"samples must have shape ({len(grid)}, d, d), got {samples.shape}"
            )
        self.grid = grid
        self.samples = samples
        self.dim = samples.shape[1]
        self._spline = interpolant(grid.times, samples)
        self._dspline = self._spline.derivative()

    def eval(self, t):
        return self._spline(float(t))

    @property
    def has_derivative(self):
        return True

    def eval_derivative(self, t):
        return self._dspline(float(t))

    def eval_many(self, ts):
        return self._spline(np.atleast_1d(np.asarray(ts, float)))

    def eval_derivative_many(self, ts):
        return self._dspline(np.atleast_1d(np.asarray(ts, float)))

    def sup_norm(self) -> float:
        """Largest Frobenius norm over the samples."""
        return float(np.max(np.linalg.norm(self.samples, axis=(1, 2))))

    def interpolation_residual(self) -> float:
        """Relative interpolation error estimate.

        A spline through every other sample is compared with the skipped
        samples; the error of that coarse spline is divided by 2**(k+1) for a
        degree-k spline to estimate the error at full resolution.
        """
        n = len(self.grid)
        scale = self.sup_norm()
        if n < 2 * SPLINE_DEGREE + 1 or scale == 0.0:
            return 0.0
        t = self.grid.times
        coarse = interpolant(t[::2], self.samples[::2])
        err = np.max(np.linalg.norm(coarse(t[1::2]) - self.samples[1::2], axis=(1, 2)))
        return float(err / 2.0 ** (SPLINE_DEGREE + 1) / scale)


def finite_difference_derivative(source: HamiltonianSource, t: float, step: float,
                                 richardson: bool = False) -> np.ndarray:
    """Centred difference estimate of dH/dt at ``t``."""
    def central(h):
        return (source.eval(t + h) - source.eval(t - h)) / (2.0 * h)

    d = central(step)
    if richardson:
        d = (4.0 * central(step / 2.0) - d) / 3.0
    return d
