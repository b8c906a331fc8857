"""Nonparametric instrumental-variable regression under full independence.

The structural curve solves ``T(phi) = 0`` where ``T(phi)(u, w)`` is the gap
between the conditional and unconditional distribution functions of the
residual ``Y - phi(Z)``. It is estimated by Landweber-Fridman iteration with
kernel smoothers; see :func:`landweber_fit`.
"""
from .errors import NpivError, NumericalError, ValidationError
from .ident import estimate_density_model, normal_design, pseudo_true
from .kernels import KernelSpec, kernel_cdf_eval, kernel_eval, silverman_bandwidth
from .operator import OperatorConfig, apply_adjoint, apply_T, apply_T_direct
from .parametric import BasisSpec, cvm_objective, fit_parametric
from .simulate import DgpSpec, generate, rate_study, run_monte_carlo
from .smoothing import CurveEstimate, Sample
from .solver import FitResult, SolverConfig, compute_n_max, landweber_fit

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CurveEstimate",
    "DgpSpec",
    "FitResult",
    "KernelSpec",
    "NpivError",
    "NumericalError",
    "OperatorConfig",
    "Sample",
    "SolverConfig",
    "ValidationError",
    "apply_T",
    "apply_T_direct",
    "apply_adjoint",
    "compute_n_max",
    "cvm_objective",
    "estimate_density_model",
    "fit_parametric",
    "generate",
    "kernel_cdf_eval",
    "kernel_eval",
    "landweber_fit",
    "normal_design",
    "pseudo_true",
    "rate_study",
    "run_monte_carlo",
    "silverman_bandwidth",
]
