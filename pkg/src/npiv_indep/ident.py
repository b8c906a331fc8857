"""Pseudo-true value of the mean-independence problem with a discrete instrument.

With ``eta_j(z) = f(z | W=j) / f(z)`` linearly independent, the minimum-norm
solution of ``E[phi(Z) | W] = E[Y | W]`` is ``sum_j lambda_j eta_j`` where

    sum_j lambda_j int eta_j(z) f(z | W=l) dz = E[Y | W=l],   l = 0 .. L-1.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .errors import MissingCategoryError, NonIdentifiedError, UnsupportedInstrumentError, ValidationError
from .kernels import KernelSpec, silverman_bandwidth
from .smoothing import CurveEstimate, Sample, kde

__all__ = ["DensityModel", "PseudoTrueResult", "pseudo_true", "estimate_density_model", "normal_design"]

log = logging.getLogger(__name__)

QUAD_TOL = 1e-10
MAX_CONDITION = 1e10


@dataclass
class DensityModel:
    """Densities of ``Z`` and of ``Z | W=j`` on a declared compact support.

    Mass outside ``support`` is ignored; pick it wide enough that the
    truncation error is below the tolerance you care about.
    """

    f_z: Callable
    f_z_given_w: Sequence[Callable]
    category_probs: np.ndarray
    r: np.ndarray
    support: tuple

    def __post_init__(self):
        self.category_probs = np.asarray(self.category_probs, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        L = len(self.f_z_given_w)
        if self.category_probs.shape != (L,) or self.r.shape != (L,):
            raise ValidationError("need one probability and one r value per category")
        if np.any(self.category_probs <= 0) or np.any(self.category_probs >= 1) and L > 1:
            raise ValidationError("category probabilities must lie in (0, 1)")
        if abs(self.category_probs.sum() - 1.0) > 1e-12:
            raise ValidationError("category probabilities must sum to 1")
        lo, hi = self.support
        if not lo < hi:
            raise ValidationError("support must be a non-empty interval")

    @property
    def n_categories(self) -> int:
        return len(self.f_z_given_w)

    def _integrate(self, fn) -> float:
        lo, hi = self.support
        val, _ = quad(fn, lo, hi, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=400)
        return val

    def check_masses(self, tol: float = 1e-6) -> list:
        """Names of densities whose mass over the support is off by more than ``tol``."""
        bad = []
        dens = [("f_z", self.f_z)] + [(f"f_z_given_w[{j}]", f) for j, f in enumerate(self.f_z_given_w)]
        for name, f in dens:
            mass = self._integrate(lambda t: float(f(t)))
            if abs(mass - 1.0) > tol:
                bad.append(name)
                warnings.warn(f"{name} integrates to {mass:.8f} over {self.support}", RuntimeWarning)
        return bad

    def eta(self, j: int, z):
        return np.asarray(self.f_z_given_w[j](z), dtype=float) / np.asarray(self.f_z(z), dtype=float)


@dataclass
class PseudoTrueResult:
    lambdas: np.ndarray
    curve: CurveEstimate
    gram: np.ndarray
    model: DensityModel

    def __call__(self, z):
        return sum(lam * self.model.eta(j, z) for j, lam in enumerate(self.lambdas))


def pseudo_true(model: DensityModel, grid, z=None) -> PseudoTrueResult:
    """Solve the Gram system by adaptive quadrature and rebuild the curve on ``grid``.

    ``z`` (optional) fills ``curve.at_sample``.
    """
    L = model.n_categories
    gram = np.empty((L, L))
    for l in range(L):
        for j in range(l, L):
            fl, fj = model.f_z_given_w[l], model.f_z_given_w[j]
            gram[l, j] = gram[j, l] = model._integrate(
                lambda t: float(fl(t)) * float(fj(t)) / float(model.f_z(t)))
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NonIdentifiedError(
            f"Gram matrix is near singular (condition {cond:.3g}); the density ratios "
            "are close to linearly dependent, e.g. Z independent of W")
    lambdas = np.linalg.solve(gram, model.r)

    def phi(t):
        return sum(lam * model.eta(j, t) for j, lam in enumerate(lambdas))

    for l in range(L):
        fl = model.f_z_given_w[l]
        moment = model._integrate(lambda t: float(phi(t)) * float(fl(t)))
        if abs(moment - model.r[l]) > 1e-6:
            raise NonIdentifiedError(
                f"moment check failed for category {l}: {moment:.10f} vs r={model.r[l]:.10f}")

    grid = np.asarray(grid, dtype=float)
    at_sample = phi(np.asarray(z, dtype=float)) if z is not None else np.empty(0)
    curve = CurveEstimate(grid, phi(grid), at_sample)
    return PseudoTrueResult(lambdas, curve, gram, model)


def estimate_density_model(sample: Sample, specs: Optional[Sequence[KernelSpec]] = None,
                           pad: float = 5.0) -> DensityModel:
    """Plug-in density model: per-category KDEs of ``z`` and category means of ``y``.

    ``f_Z`` is the probability-weighted mixture of the category KDEs, so the
    density ratios satisfy ``sum_j p_j eta_j = 1`` exactly.
    """
    if sample.w_type != "discrete":
        raise UnsupportedInstrumentError("pseudo-true values need a discrete instrument")
    L = sample.n_categories
    counts = sample.category_counts()
    if np.any(counts == 0):
        raise MissingCategoryError("every instrument category needs observations")
    probs = counts / sample.n
    if specs is None:
        pooled = silverman_bandwidth(sample.z, "density")
        specs = []
        for j in range(L):
            zj = sample.z[sample.w == j]
            try:
                h = silverman_bandwidth(zj, "density")
            except ValidationError:
                log.warning("category %d has fewer than two distinct z values; using pooled bandwidth", j)
                h = pooled
            specs.append(KernelSpec("gaussian", 2, h))
    if len(specs) != L:
        raise ValidationError(f"need {L} kernel specs, got {len(specs)}")

    conds = []
    for j in range(L):
        zj = sample.z[sample.w == j]
        conds.append(lambda t, zj=zj, s=specs[j]: kde(zj, s, np.asarray(t, dtype=float)))

    def f_z(t):
        return sum(p * f(t) for p, f in zip(probs, conds))

    r = np.array([sample.y[sample.w == j].mean() for j in range(L)])
    hmax = max(s.bandwidth for s in specs)
    support = (float(sample.z.min() - pad * hmax), float(sample.z.max() + pad * hmax))
    return DensityModel(f_z, conds, probs, r, support)


def normal_design(means: Sequence[float], sds: Sequence[float], probs: Sequence[float],
                  r: Sequence[float], support: Optional[tuple] = None) -> DensityModel:
    """Analytic model with ``Z | W=j ~ N(means[j], sds[j]^2)``.

    The default support extends 12 standard deviations past the extreme
    means, where the truncated mass is far below quadrature tolerance.
    """
    means = np.asarray(means, dtype=float)
    sds = np.asarray(sds, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if not means.shape == sds.shape == probs.shape or means.ndim != 1:
        raise ValidationError("means, sds and probs need one entry per category")
    if np.any(sds <= 0):
        raise ValidationError("standard deviations must be positive")
    conds = [lambda t, m=m, s=s: norm.pdf(t, m, s) for m, s in zip(means, sds)]

    def f_z(t):
        return sum(p * f(t) for p, f in zip(probs, conds))

    if support is None:
        support = (float(np.min(means - 12 * sds)), float(np.max(means + 12 * sds)))
    return DensityModel(f_z, conds, probs, np.asarray(r, dtype=float), support)
