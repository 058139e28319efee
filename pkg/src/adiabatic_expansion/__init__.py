"""Adiabatic product expansion for driven quantum systems.

U(t) ~ U^(0)(t) U^(1)(t) ... U^(N)(t), with each factor the adiabatic
propagator of a moving-frame Hamiltonian, plus closed forms for spin
dipole drives and an exactly solvable class of fields.
"""
from .errors import (ClosedFormMismatchError, ConvergenceError, DegeneracyError,
                     ExpansionError, GaugeSingularityError, InfeasibleProfileError,
                     NumericalError, RefinementError, ResolutionError, TrackingError,
                     ValidationError)
from .operators import TimeGrid, eigh, expm_unitary, op_distance, unitarity_defect
from .sources import FunctionSource, HamiltonianSource, SampledSource, constant_source
from .spectral import EigenFrame, build_eigenframe, build_h1, build_u0, build_u0_all
from .propagator import PropagatorResult, propagate, rabi_oracle
from .spin import (DipoleSource, FieldCurve, SpinRep, precession, radial_drive,
                   spin_matrices, tip_kinematics)
from .expansion import ExpansionChain, expand, product_all, product_approximation
from .solvable import Certificate, certify_exact, constant_theta_profile, solvable_radius

__version__ = "0.1.0"
