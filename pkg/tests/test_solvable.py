import numpy as np
import pytest

from adiabatic_expansion import TimeGrid, radial_drive, spin_matrices
from adiabatic_expansion.csvio import read_field_csv, write_field_csv
from adiabatic_expansion.errors import InfeasibleProfileError, ValidationError
from adiabatic_expansion.solvable import (certify_exact, constant_theta_profile, scaled_radius,
                                          solvable_radius)

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def grid():
    return TimeGrid.uniform(TWO_PI, 512)


@pytest.fixture(scope="module")
def wobble(grid):
    return solvable_radius(lambda p: np.pi / 5 + 0.1 * np.sin(p), lambda t: np.asarray(t, float),
                           1.0, grid)


def test_constant_theta_radius(grid):
    p = constant_theta_profile(np.pi / 4, 1.0, 1.0, grid)
    r = p.generated.sample(grid.times)["r"]
    assert np.allclose(r, np.cos(np.pi / 4), atol=1e-14)
    assert np.abs(p.sigma_dot()).max() < 1e-10
    p2 = constant_theta_profile(0.5, 2.0, 4.0, grid)
    assert np.allclose(p2.generated.r(grid.times), 2.0 * np.cos(0.5) / 4.0)


def test_wobble_profile(wobble):
    assert wobble.positivity_margin > 0
    assert np.abs(wobble.sigma_dot()).max() <= 1e-8


def test_numeric_derivatives_match_analytic(grid):
    th = lambda p: 0.5 + 0.05 * np.sin(2 * p)
    numeric = solvable_radius(th, lambda t: 1.5 * np.asarray(t, float), 1.0, grid)
    analytic = solvable_radius(th, lambda t: 1.5 * np.asarray(t, float), 1.0, grid,
                               dtheta_dphi=lambda p: 0.1 * np.cos(2 * p),
                               d2theta_dphi2=lambda p: -0.2 * np.sin(2 * p),
                               dphi_dt=lambda t: np.full(np.shape(t), 1.5))
    t = grid.times
    assert np.abs(numeric.generated.r(t) - analytic.generated.r(t)).max() < 1e-8


def test_infeasible_and_domain_errors(grid):
    with pytest.raises(InfeasibleProfileError) as info:
        constant_theta_profile(2.0, 1.0, 1.0, grid)
    assert info.value.min_radius < 0
    with pytest.raises(ValidationError):
        solvable_radius(lambda p: 0.5 * np.cos(p), lambda t: np.asarray(t, float), 1.0, grid)
    with pytest.raises(ValidationError):
        solvable_radius(lambda p: 0.5 + 0 * p, lambda t: -np.asarray(t, float), 1.0, grid)
    with pytest.raises(ValidationError):
        constant_theta_profile(0.5, 1.0, -1.0, grid)


@pytest.mark.parametrize("j", [0.5, 1.0])
def test_certificate_granted(j, grid):
    p = constant_theta_profile(np.pi / 4, 1.0, 1.0, grid)
    cert = certify_exact(p, spin_matrices(j), grid)
    assert cert.granted
    assert cert.max_distance <= 1e-6
    assert cert.exact_flag


def test_wobble_certificate(wobble, grid):
    assert certify_exact(wobble, spin_matrices(0.5), grid).granted


@pytest.mark.parametrize("factor", [1.05, 0.99])
def test_perturbed_control_refused(factor, grid):
    p = constant_theta_profile(np.pi / 4, 1.0, 1.0, grid)
    cert = certify_exact(scaled_radius(p.generated, factor), spin_matrices(0.5), grid)
    assert not cert.granted
    assert cert.residual > cert.tol


def test_radial_drive_certificate():
    g = TimeGrid.uniform(1.0, 128)
    f = radial_drive(1.0, lambda t: 1 + np.asarray(t) ** 2, lambda t: 2 * np.asarray(t), 0.7, 0.3)
    cert = certify_exact(f, spin_matrices(0.5), g)
    assert cert.granted and cert.depth == 1


def test_profile_csv_round_trip(wobble, grid, tmp_path):
    path = tmp_path / "field.csv"
    write_field_csv(path, wobble.generated, grid)
    assert path.read_text().splitlines()[0] == "t,r,theta,phi"
    loaded = read_field_csv(path, 1.0)
    t = np.linspace(0, TWO_PI, 777)
    assert np.abs(loaded.r(t) - wobble.generated.r(t)).max() < 1e-8
    assert certify_exact(loaded, spin_matrices(0.5), grid).granted


def test_profile_csv_validation(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,r,phi,theta\n0,1,0,0\n")
    with pytest.raises(ValidationError):
        read_field_csv(bad, 1.0)
    bad.write_text("t,r,theta,phi\n0,1,0.5,0\n0,1,0.5,0.1\n")
    with pytest.raises(ValidationError):
        read_field_csv(bad, 1.0)
