"""The nonlinear operator ``T(phi)`` and the adjoint of its Frechet derivative.

For a curve ``phi`` the centred residuals are ``u_i = y_i - phi(z_i) - mean``
and

    T(phi)(u, w) = P(U <= u | W = w) - P(U <= u)

is estimated with integrated kernels in ``u`` and either kernel weights
(continuous instrument) or sorting by category (discrete instrument). The
adjoint applied to ``psi`` is

    (T'* psi)(z) = E[(psi(U, W) - E_W psi(U, W)) f_U(U) | Z = z],

evaluated as a Nadaraya-Watson smooth over ``z`` of
``(psi(u_i, w_i) - E_W psi(u_i, .)) * f_U(u_i)``.

All pairwise sums over residuals go through :func:`_grouped_sums` /
:func:`_cdf_matrix`, which use tabulated kernels and the symmetry
``Kbar(-x) = 1 - Kbar(x)`` to visit each pair once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

from .errors import ShapeError, ValidationError
from .kernels import KernelSpec, KernelTable, kernel_eval, silverman_bandwidth
from .smoothing import (
    DENSITY_FLOOR,
    CurveEstimate,
    Sample,
    _flag,
    conditional_cdf_continuous,
    conditional_cdf_multicat,
    default_grid,
    smoothed_cdf,
)

__all__ = [
    "OperatorConfig",
    "Residuals",
    "OperatorEval",
    "Operator",
    "compute_residuals",
    "apply_T",
    "apply_adjoint",
    "apply_T_direct",
]


@dataclass(frozen=True)
class OperatorConfig:
    """Kernels and (frozen) bandwidths used by the operator.

    ``u_kernel`` smooths residuals for both the CDF and the density ``f_U``;
    ``z_kernel`` is the regression kernel over ``z`` in the adjoint;
    ``w_kernel`` weights a continuous instrument. ``indicator_cdf`` replaces
    the integrated kernel by the step function in ``T``.
    """

    u_kernel: KernelSpec
    z_kernel: KernelSpec
    w_kernel: Optional[KernelSpec] = None
    lambda_w: float = 0.0
    indicator_cdf: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lambda_w < 1.0:
            raise ValidationError("lambda_w must lie in [0, 1)")

    @classmethod
    def from_sample(cls, sample: Sample, phi: CurveEstimate, rho: int = 8,
                    h_u: Optional[float] = None, h: Optional[float] = None,
                    h_w: Optional[float] = None, lambda_w: float = 0.0,
                    indicator_cdf: bool = False) -> "OperatorConfig":
        """Rule-of-thumb bandwidths from the residuals of ``phi``."""
        u = compute_residuals(sample, phi).u_hat
        if h_u is None:
            h_u = silverman_bandwidth(u, "cdf", order=rho)
        if h is None:
            h = silverman_bandwidth(sample.z, "regression")
        w_kernel = None
        if sample.w_type == "continuous":
            if h_w is None:
                h_w = silverman_bandwidth(sample.w, "density")
            w_kernel = KernelSpec("gaussian", 2, h_w)
        return cls(
            u_kernel=KernelSpec("gaussian_high_order", rho, h_u),
            z_kernel=KernelSpec("gaussian", 2, h),
            w_kernel=w_kernel,
            lambda_w=lambda_w,
            indicator_cdf=indicator_cdf,
        )

    def bandwidths(self) -> dict:
        out = {"h_u": self.u_kernel.bandwidth, "h": self.z_kernel.bandwidth}
        if self.w_kernel is not None:
            out["h_w"] = self.w_kernel.bandwidth
        return out


@dataclass
class Residuals:
    u_hat: np.ndarray
    mean_removed: float


@dataclass
class OperatorEval:
    """``T(phi)`` at the sample points ``(u_i, w_i)``.

    ``mean_over_w[i]`` is ``E_W T(phi)(u_i, W)``; ``by_category`` holds
    ``T(phi)(u_i, j)`` for every category of a discrete instrument.
    """

    at_points: np.ndarray
    empirical_sq_norm: float
    mean_over_w: np.ndarray
    f_u: np.ndarray
    u_hat: np.ndarray
    by_category: Optional[np.ndarray] = None


def compute_residuals(sample: Sample, phi: CurveEstimate) -> Residuals:
    at = np.asarray(phi.at_sample, dtype=float)
    if at.shape != sample.y.shape:
        raise ShapeError(f"curve has {at.shape[0]} sample values, sample has n={sample.n}")
    raw = sample.y - at
    m = raw.mean()
    u = raw - m
    # second pass removes the rounding left by the first
    u -= u.mean()
    return Residuals(u, float(m))


@njit(cache=True)
def _herm(tv, td, x, lo, inv, step):
    t = (x - lo) * inv
    if t <= 0.0:
        return tv[0]
    last = tv.shape[0] - 1
    if t >= last:
        return tv[last]
    j = int(t)
    s = t - j
    s2 = s * s
    s3 = s2 * s
    return ((2.0 * s3 - 3.0 * s2 + 1.0) * tv[j] + (s3 - 2.0 * s2 + s) * td[j] * step
            + (3.0 * s2 - 2.0 * s3) * tv[j + 1] + (s3 - s2) * td[j + 1] * step)


@njit(cache=True)
def _grouped_sums(u, codes, n_groups, h, indicator, cv, cd, pv, pd, lo, step):
    """``G[k, j] = sum_{i in j} Kbar((u_k - u_i)/h)`` and ``s[k] = sum_i K((u_k - u_i)/h)``."""
    n = u.shape[0]
    inv = 1.0 / step
    G = np.zeros((n, n_groups))
    s = np.zeros(n)
    k0 = _herm(pv, pd, 0.0, lo, inv, step)
    c0 = 1.0 if indicator else 0.5
    for k in range(n):
        uk = u[k]
        ck = codes[k]
        G[k, ck] += c0
        s[k] += k0
        for i in range(k + 1, n):
            x = (uk - u[i]) / h
            if indicator:
                G[k, codes[i]] += 1.0 if x >= 0.0 else 0.0
                G[i, ck] += 1.0 if x <= 0.0 else 0.0
            else:
                c = _herm(cv, cd, x, lo, inv, step)
                G[k, codes[i]] += c
                G[i, ck] += 1.0 - c
            kv = _herm(pv, pd, x, lo, inv, step)
            s[k] += kv
            s[i] += kv
    return G, s


@njit(cache=True)
def _cdf_matrix(u, h, indicator, cv, cd, pv, pd, lo, step):
    """``A[k, i] = Kbar((u_k - u_i)/h)`` and the density sums ``s``."""
    n = u.shape[0]
    inv = 1.0 / step
    A = np.empty((n, n))
    s = np.zeros(n)
    k0 = _herm(pv, pd, 0.0, lo, inv, step)
    for k in range(n):
        uk = u[k]
        A[k, k] = 1.0 if indicator else 0.5
        s[k] += k0
        for i in range(k + 1, n):
            x = (uk - u[i]) / h
            if indicator:
                A[k, i] = 1.0 if x >= 0.0 else 0.0
                A[i, k] = 1.0 if x <= 0.0 else 0.0
            else:
                c = _herm(cv, cd, x, lo, inv, step)
                A[k, i] = c
                A[i, k] = 1.0 - c
            kv = _herm(pv, pd, x, lo, inv, step)
            s[k] += kv
            s[i] += kv
    return A, s


def _smoother(spec: KernelSpec, points: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Row-normalised Nadaraya-Watson weights, uniform rows where mass vanishes."""
    W = kernel_eval(spec, points[:, None] - z[None, :])
    den = W.sum(axis=1)
    low = den < DENSITY_FLOOR
    _flag("adjoint_smoother", np.count_nonzero(low))
    W = W / np.where(low, 1.0, den)[:, None]
    W[low] = 1.0 / z.shape[0]
    return W


class Operator:
    """``T`` and ``T'*`` bound to one sample, configuration and output grid.

    Everything that does not depend on the current curve (category weights,
    instrument weights, the z-smoother) is built once here.
    """

    def __init__(self, sample: Sample, cfg: OperatorConfig, grid=None):
        self.sample = sample
        self.cfg = cfg
        self.grid = default_grid(sample.z) if grid is None else np.asarray(grid, dtype=float)
        self.table = KernelTable(cfg.u_kernel)
        self.smoother = _smoother(cfg.z_kernel, self.grid, sample.z)
        n = sample.n
        if sample.w_type == "discrete":
            self.codes = sample.w
            L = sample.n_categories
            self.counts = np.bincount(self.codes, minlength=L).astype(float)
            self.probs = self.counts / n
            if L > 1 and cfg.lambda_w > 0:
                omega = np.full((L, L), cfg.lambda_w / (L - 1))
                np.fill_diagonal(omega, 1.0 - cfg.lambda_w)
            else:
                omega = np.eye(L)
            # by_category = G @ omega.T / (counts @ omega.T)
            self._omega = omega.T / (self.counts @ omega.T)[None, :]
        else:
            if cfg.w_kernel is None:
                raise ValidationError("continuous instrument needs a w_kernel")
            w = sample.w
            B = kernel_eval(cfg.w_kernel, w[:, None] - w[None, :])
            den = B.sum(axis=1)
            low = den < DENSITY_FLOOR
            _flag("conditional_cdf_continuous", np.count_nonzero(low))
            B = B / np.where(low, 1.0, den)[:, None]
            B[low] = 1.0 / n
            self.w_weights = B
            self.w_marginal = B.mean(axis=0)

    def residuals(self, at_sample) -> np.ndarray:
        raw = self.sample.y - at_sample
        u = raw - raw.mean()
        u -= u.mean()
        return u

    def evaluate(self, at_sample) -> OperatorEval:
        """``T(phi)`` at the sample points, given ``phi(z_i)``."""
        u = self.residuals(np.asarray(at_sample, dtype=float))
        t = self.table
        h = self.cfg.u_kernel.bandwidth
        n = u.shape[0]
        ind = self.cfg.indicator_cdf
        if self.sample.w_type == "discrete":
            G, s = _grouped_sums(u, self.codes, self._omega.shape[0], h, ind,
                                 t.cdf, t.dcdf, t.pdf, t.dpdf, t.lo, t.step)
            uncond = G.sum(axis=1) / n
            by_cat = G @ self._omega - uncond[:, None]
            at_points = by_cat[np.arange(n), self.codes]
            mean_w = by_cat @ self.probs
        else:
            A, s = _cdf_matrix(u, h, ind, t.cdf, t.dcdf, t.pdf, t.dpdf, t.lo, t.step)
            uncond = A.mean(axis=1)
            at_points = np.einsum("ki,ki->k", A, self.w_weights) - uncond
            mean_w = A @ self.w_marginal - uncond
            by_cat = None
        f_u = s / (n * h)
        low = f_u < DENSITY_FLOOR
        _flag("kde", np.count_nonzero(low))
        f_u = np.where(low, DENSITY_FLOOR, f_u)
        return OperatorEval(
            at_points=at_points,
            empirical_sq_norm=float(np.mean(at_points**2)),
            mean_over_w=mean_w,
            f_u=f_u,
            u_hat=u,
            by_category=by_cat,
        )

    def adjoint_grid(self, psi_at, psi_mean_w, f_u) -> np.ndarray:
        """Values of ``T'* psi`` on the grid."""
        return self.smoother @ ((psi_at - psi_mean_w) * f_u)

    def adjoint(self, psi_at, psi_mean_w, f_u) -> CurveEstimate:
        return CurveEstimate.from_grid(
            self.grid, self.adjoint_grid(psi_at, psi_mean_w, f_u), self.sample.z)


def apply_T(sample: Sample, phi: CurveEstimate, cfg: OperatorConfig) -> OperatorEval:
    """Evaluate ``T(phi)`` at every ``(u_i, w_i)`` and its empirical squared norm."""
    compute_residuals(sample, phi)  # shape check
    return Operator(sample, cfg, phi.grid).evaluate(phi.at_sample)


def apply_adjoint(sample: Sample, phi: CurveEstimate,
                  psi_at_points: Union[OperatorEval, np.ndarray],
                  cfg: OperatorConfig,
                  psi_rule: Optional[Callable] = None) -> CurveEstimate:
    """Apply the adjoint of ``T'_phi`` to ``psi``.

    ``psi_at_points`` is either the :class:`OperatorEval` returned by
    :func:`apply_T` (which already carries ``E_W psi``) or an array of
    ``psi(u_i, w_i)`` together with ``psi_rule(u, w)`` able to re-evaluate
    ``psi`` at any residual/instrument pair.
    """
    op = Operator(sample, cfg, phi.grid)
    if isinstance(psi_at_points, OperatorEval):
        ev = psi_at_points
        return op.adjoint(ev.at_points, ev.mean_over_w, ev.f_u)
    psi_at = np.asarray(psi_at_points, dtype=float)
    if psi_at.shape != (sample.n,):
        raise ShapeError(f"psi has shape {psi_at.shape}, expected ({sample.n},)")
    if psi_rule is None:
        raise ValidationError("an array psi needs psi_rule to form E_W psi")
    ev = op.evaluate(phi.at_sample)
    u = ev.u_hat
    if sample.w_type == "discrete":
        mean_w = sum(p * np.asarray(psi_rule(u, np.full(sample.n, j)), dtype=float)
                     for j, p in enumerate(op.probs))
    else:
        mean_w = np.asarray(psi_rule(u[:, None], sample.w[None, :]), dtype=float).mean(axis=1)
    return op.adjoint(psi_at, mean_w, ev.f_u)


def apply_T_direct(sample: Sample, phi: CurveEstimate, cfg: OperatorConfig,
                   eval_u, eval_w) -> np.ndarray:
    """``T(phi)`` on the product grid ``eval_u x eval_w`` (rows are ``u``)."""
    u = compute_residuals(sample, phi).u_hat
    eval_u = np.atleast_1d(np.asarray(eval_u, dtype=float))
    eval_w = np.atleast_1d(np.asarray(eval_w))
    u_spec = None if cfg.indicator_cdf else cfg.u_kernel
    uncond = smoothed_cdf(u, u_spec, eval_u)
    out = np.empty((eval_u.size, eval_w.size))
    if sample.w_type == "discrete":
        L = sample.n_categories
        for col, j in enumerate(eval_w):
            cond = conditional_cdf_multicat(u, sample.w, u_spec, eval_u, int(j),
                                            cfg.lambda_w, n_categories=L)
            out[:, col] = cond - uncond
    else:
        uu, ww = np.meshgrid(eval_u, eval_w.astype(float), indexing="ij")
        cond = conditional_cdf_continuous(u, sample.w, u_spec, cfg.w_kernel, uu, ww)
        out[:] = cond - uncond[:, None]
    return out
