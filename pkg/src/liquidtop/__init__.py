"""Galerkin laboratory for the stability of a spinning top with a
liquid-filled cube cavity."""

from .basis import SolenoidalBasis, build_cube_basis, load_basis, with_material
from .dynamics import (
    PerturbationState,
    Trajectory,
    admissible_z,
    constraint_residual,
    decay_fit,
    energy_identity_residual,
    integrate,
    lyapunov_G,
    quadratic_forms,
    rhs,
)
from .errors import *  # noqa: F401,F403
from .experiments import (
    ExperimentConfig,
    ThresholdResult,
    convergence_study,
    instability_run,
    stability_run,
    system_for,
    threshold_bisection,
)
from .model import BodyParams, Regime, RegimeVerdict, classify_regime, delta_coefficient, kernel_coefficients, make_params
from .operators import ReducedSystem, assemble, generator, nonlinear_rhs
from .polynomial import Polynomial3, integrate_cube
from .spectral import Projections, SpectrumReport, fractional_norm, projections, spectrum, verify_hypotheses

__version__ = "0.1.0"
