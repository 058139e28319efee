import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from adiabatic_expansion.errors import ValidationError
from adiabatic_expansion.operators import (TimeGrid, eigh, expm_unitary, expm_unitary_batch,
                                           hermiticity_defect, op_distance, unitarity_defect)
from adiabatic_expansion.sources import (FunctionSource, SampledSource, constant_source,
                                         finite_difference_derivative)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def hermitian(draw, max_dim=5):
    d = draw(st.integers(1, max_dim))
    re = draw(arrays(float, (d, d), elements=finite))
    im = draw(arrays(float, (d, d), elements=finite))
    a = re + 1j * im
    return 0.5 * (a + a.conj().T)


@settings(max_examples=60, deadline=None)
@given(hermitian())
def test_eigh_reconstructs(h):
    e, v = eigh(h)
    assert np.all(np.diff(e) >= 0)
    assert unitarity_defect(v) < 1e-12
    scale = max(1.0, np.abs(h).max())
    assert np.abs(v @ np.diag(e) @ v.conj().T - h).max() < 1e-12 * scale * h.shape[0]


@settings(max_examples=60, deadline=None)
@given(hermitian(), st.floats(-3, 3))
def test_expm_unitary_is_unitary(h, dt):
    u = expm_unitary(h, dt)
    assert unitarity_defect(u) < 1e-12


@settings(max_examples=30, deadline=None)
@given(hermitian(), st.floats(-1, 1), st.floats(-1, 1))
def test_expm_group_law(h, a, b):
    lhs = expm_unitary(h, a) @ expm_unitary(h, b)
    assert op_distance(lhs, expm_unitary(h, a + b)) < 1e-10 * max(1.0, np.abs(h).max())


def test_expm_matches_scipy():
    from scipy.linalg import expm
    h = np.array([[1.0, 2 - 1j], [2 + 1j, -0.5]])
    assert op_distance(expm_unitary(h, 0.37), expm(-0.37j * h)) < 1e-13


def test_expm_batch_matches_single():
    hs = np.stack([np.diag([1.0, -1.0]), np.array([[0, 1], [1, 0]], complex)])
    out = expm_unitary_batch(hs, np.array([0.2, 0.3]))
    assert op_distance(out[1], expm_unitary(hs[1], 0.3)) < 1e-14


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        eigh(np.array([[0, 1], [0, 0]], complex))
    with pytest.raises(ValidationError):
        eigh(np.zeros((2, 3)))


def test_distance_shape_mismatch():
    with pytest.raises(ValidationError):
        op_distance(np.eye(2), np.eye(3))


def test_defects():
    assert hermiticity_defect(np.array([[0, 1], [0, 0]])) == 1.0
    assert unitarity_defect(np.eye(3)) == 0.0
    assert unitarity_defect(2 * np.eye(2)) == pytest.approx(3.0)


def test_time_grid():
    g = TimeGrid.uniform(2.0, 5)
    assert len(g) == 5 and g.T == 2.0
    assert np.allclose(g.midpoints, [0.25, 0.75, 1.25, 1.75])
    for bad in ([0.0], [0.1, 0.2], [0.0, 0.2, 0.2]):
        with pytest.raises(ValidationError):
            TimeGrid(np.array(bad))
    with pytest.raises(ValidationError):
        TimeGrid.uniform(-1.0, 4)


def test_sampled_source_interpolates_and_differentiates():
    g = TimeGrid.uniform(1.0, 101)
    f = lambda t: np.cos(3 * t)[..., None, None] * np.array([[1, 1j], [-1j, 0]])
    src = SampledSource(g, f(g.times))
    t = np.array([0.123, 0.5551])
    assert np.abs(src.eval_many(t) - f(t)).max() < 1e-9
    dexact = -3 * np.sin(3 * 0.4) * np.array([[1, 1j], [-1j, 0]])
    assert np.abs(src.eval_derivative(0.4) - dexact).max() < 1e-7
    assert src.interpolation_residual() < 1e-9


def test_sampled_source_shape_check():
    with pytest.raises(ValidationError):
        SampledSource(TimeGrid.uniform(1.0, 4), np.zeros((3, 2, 2)))


def test_constant_source_and_finite_difference():
    h = np.array([[1.0, 0.5], [0.5, -1.0]])
    src = constant_source(h)
    assert np.allclose(src.eval(3.0), h)
    assert np.allclose(src.eval_derivative(3.0), 0)
    fs = FunctionSource(2, lambda t: np.sin(t) * h)
    d = finite_difference_derivative(fs, 0.3, 1e-3, richardson=True)
    assert np.abs(d - np.cos(0.3) * h).max() < 1e-11
