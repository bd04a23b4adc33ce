"""Numerical laboratory for the stochastic reaction-diffusion model

    du = [A u + F(u)] dt + sqrt(eps) dw^delta

on a box with Dirichlet boundary conditions: spectral simulation, the
controlled skeleton equation, the rate functional and its minimizers, and
Monte Carlo experiments on joint ``(eps, delta)`` scalings.
"""

__version__ = "0.1.0"

from .action import (
    ActionProblem,
    ConvergenceError,
    InstantonResult,
    adjoint_gradient,
    control_cost,
    evaluate_action,
    minimize_action,
    objective,
)
from .dynamics import (
    AccuracyWarning,
    BlowUpError,
    NumericalFailure,
    convolution_map,
    solve_controlled,
    solve_skeleton,
    solve_stochastic,
)
from .noise import (
    BoxSpectrum,
    NoiseModel,
    RngStream,
    SyntheticSpectrum,
    Gamma_theta_s,
    Lambda_theta,
    convolution_theta,
    lambda_k,
    moment_scaling_experiment,
    ou_step,
    wiener_increment,
)
from .nonlinearity import PolynomialDrift, apply_F, apply_F_N, dissipativity_gap, f, f_prime
from .spectral import (
    GridField,
    SpectralBasis,
    SpectralField,
    build_basis,
    heat_propagate,
    norm_H,
    norm_Hneg,
    norm_Lp,
    to_grid,
    to_modes,
)
from .trajectory import Control, Trajectory
