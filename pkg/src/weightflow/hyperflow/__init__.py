"""Hypernetwork vector field, ODE/CDE integrators, anchor autoencoder and latent spline path."""
from .autoencoder import Autoencoder, fit_autoencoder
from .hypernet import Hypernet, hypernet_forward, time_features
from .integrate import (Solution, SolverConfig, StepRecord, cde_field, dense_output, integrate, integrate_cde,
                        integrate_ode, ode_field, rollout)
from .spline import LatentPath, build_spline, solve_tridiagonal, spline_deriv

__all__ = [
    "Autoencoder", "fit_autoencoder", "Hypernet", "hypernet_forward", "time_features",
    "Solution", "SolverConfig", "StepRecord", "cde_field", "dense_output", "integrate", "integrate_cde",
    "integrate_ode", "ode_field", "rollout", "LatentPath", "build_spline", "solve_tridiagonal",
    "spline_deriv",
]
