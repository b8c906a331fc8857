"""Parametric baseline: minimum Cramer-von Mises distance with a binary instrument.

For ``phi(z) = b(z) theta`` the centred residuals ``U_i(theta)`` should have
the same distribution in both instrument categories. The estimator minimises

    sum_j (F(u_j | 1) - F(u_j | 0))^2

over ``theta`` on a grid of residual quantiles, with ``F(. | w)`` the
kernel-smoothed CDF of the residuals in category ``w``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline
from scipy.optimize import minimize

from .errors import DivergenceError, UnsupportedInstrumentError, ValidationError
from .kernels import KernelSpec, silverman_bandwidth
from .smoothing import Sample, smoothed_cdf

__all__ = ["BasisSpec", "ParametricFit", "cvm_objective", "fit_parametric"]

log = logging.getLogger(__name__)

CF_POINTS = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
QUANTILE_LEVELS = np.linspace(0.05, 0.95, 19)


@dataclass(frozen=True)
class BasisSpec:
    """``k`` basis functions: monomials ``1, z, .., z^(k-1)`` or cubic B-splines.

    B-splines use equally spaced knots on ``[lo, hi]``; call
    :meth:`fitted_to` to take the range from data.
    """

    kind: str = "polynomial"
    k: int = 3
    degree: int = 3
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("polynomial", "bspline"):
            raise ValidationError(f"unknown basis kind {self.kind!r}")
        if self.k < 1:
            raise ValidationError("basis needs k >= 1")
        if self.kind == "bspline" and self.k < self.degree + 1:
            raise ValidationError(f"a degree-{self.degree} B-spline basis needs k >= {self.degree + 1}")

    def fitted_to(self, z) -> "BasisSpec":
        z = np.asarray(z, dtype=float)
        return replace(self, lo=float(z.min()), hi=float(z.max()))

    def design(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "polynomial":
            return np.vander(z, self.k, increasing=True)
        lo = z.min() if self.lo is None else self.lo
        hi = z.max() if self.hi is None else self.hi
        n_inner = self.k - self.degree - 1
        inner = np.linspace(lo, hi, n_inner + 2)
        knots = np.r_[[lo] * self.degree, inner, [hi] * self.degree]
        return BSpline.design_matrix(z, knots, self.degree, extrapolate=True).toarray()

    def __call__(self, theta, z) -> np.ndarray:
        return self.design(z) @ np.asarray(theta, dtype=float)


@dataclass(frozen=True)
class ParametricFit:
    theta: np.ndarray
    objective: float
    theta_init: np.ndarray
    objective_init: float
    trace: np.ndarray
    u_spec: Optional[KernelSpec]
    basis: BasisSpec


def _check_binary(sample: Sample) -> None:
    if sample.w_type != "discrete" or sample.n_categories != 2:
        raise UnsupportedInstrumentError("the Cramer-von Mises estimator needs a binary instrument")


def _residuals(sample: Sample, design: np.ndarray, theta) -> np.ndarray:
    raw = sample.y - design @ np.asarray(theta, dtype=float)
    return raw - raw.mean()


def _distance(u, w, u_spec, grid_u, kind) -> float:
    in1 = w == 1
    if kind == "cf":
        d = (np.exp(1j * np.outer(CF_POINTS, u[in1])).mean(axis=1)
             - np.exp(1j * np.outer(CF_POINTS, u[~in1])).mean(axis=1))
        return float(np.sum(np.abs(d) ** 2))
    if grid_u is None:
        grid_u = np.quantile(u, QUANTILE_LEVELS)
    d = smoothed_cdf(u[in1], u_spec, grid_u) - smoothed_cdf(u[~in1], u_spec, grid_u)
    return float(np.sum(d * d))


def cvm_objective(sample: Sample, basis: BasisSpec, theta, u_spec: Optional[KernelSpec],
                  grid_u=None, kind: str = "cdf") -> float:
    """Distance between the residual distributions of the two instrument categories.

    ``kind="cdf"`` compares smoothed CDFs on ``grid_u`` (default: the 5%..95%
    quantiles of the current residuals, 19 points); ``u_spec=None`` uses
    empirical CDFs. ``kind="cf"`` compares empirical characteristic functions
    at ``t`` in ``{+-0.5, +-1, +-2}``.
    """
    _check_binary(sample)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (basis.k,):
        raise ValidationError(f"theta has shape {theta.shape}, basis has k={basis.k}")
    if kind not in ("cdf", "cf"):
        raise ValidationError(f"unknown objective kind {kind!r}")
    u = _residuals(sample, basis.design(sample.z), theta)
    return _distance(u, sample.w, u_spec, grid_u, kind)


def _constant_direction(design: np.ndarray) -> Optional[np.ndarray]:
    """Coefficients ``d`` with ``design @ d == 1``, if the basis spans constants."""
    d, *_ = np.linalg.lstsq(design, np.ones(design.shape[0]), rcond=None)
    if np.max(np.abs(design @ d - 1.0)) < 1e-8:
        return d
    return None


def fit_parametric(sample: Sample, basis: BasisSpec = BasisSpec(), u_spec="auto",
                   restarts: int = 10, seed: int = 0, kind: str = "cdf", rho: int = 8,
                   grid_u=None, maxiter: Optional[int] = None) -> ParametricFit:
    """Minimise :func:`cvm_objective` by Nelder-Mead.

    Starts from least squares, then from ``restarts`` Gaussian perturbations
    of it. ``u_spec="auto"`` takes an order-``rho`` Gaussian kernel with the
    rule-of-thumb bandwidth of the least-squares residuals. Because residuals
    are centred the objective cannot see the intercept; it is set afterwards
    so the fitted residuals average to zero.
    """
    _check_binary(sample)
    if basis.kind == "bspline" and basis.lo is None:
        basis = basis.fitted_to(sample.z)
    design = basis.design(sample.z)
    if np.linalg.matrix_rank(design) < basis.k:
        raise ValidationError("basis functions are linearly dependent on the sample")
    theta_init, *_ = np.linalg.lstsq(design, sample.y, rcond=None)
    if isinstance(u_spec, str) and u_spec == "auto":
        u0 = _residuals(sample, design, theta_init)
        u_spec = KernelSpec("gaussian_high_order", rho, silverman_bandwidth(u0, "cdf", order=rho))

    def objective(theta):
        return _distance(_residuals(sample, design, theta), sample.w, u_spec, grid_u, kind)

    obj_init = objective(theta_init)
    rng = np.random.default_rng(seed)
    scale = 0.5 * (np.abs(theta_init) + 0.1)
    starts = [theta_init] + [theta_init + scale * rng.standard_normal(basis.k) for _ in range(restarts)]
    best_theta, best_obj = theta_init, obj_init
    trace = []
    opts = {"xatol": 1e-7, "fatol": 1e-14, "maxiter": maxiter or 400 * basis.k,
            "maxfev": maxiter or 400 * basis.k}
    for x0 in starts:
        res = minimize(objective, x0, method="Nelder-Mead", options=opts)
        if not np.isfinite(res.fun):
            raise DivergenceError(f"objective is {res.fun!r} from start {x0}")
        trace.append(res.fun)
        if res.fun < best_obj:
            best_theta, best_obj = res.x, float(res.fun)

    theta = np.array(best_theta, dtype=float)
    d = _constant_direction(design)
    if d is not None:
        theta = theta + d * np.mean(sample.y - design @ theta)
    log.info("parametric: objective %.3e -> %.3e", obj_init, best_obj)
    return ParametricFit(theta, best_obj, theta_init, obj_init, np.asarray(trace), u_spec, basis)
