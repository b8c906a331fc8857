"""Simulation designs with a binary instrument and the Monte Carlo driver.

Design (both DGPs)::

    W ~ Bernoulli(2/3),  U, eps ~ N(0, 1) independent
    Z = alpha + sigma U + (beta + sigma U) W + eps
    quadratic: Y = a + b Z + c Z^2 + U
    sine:      Y = 1.5 sin(0.5 pi Z) + U

Random numbers come from Philox4x64-10 keyed by the seed: each 64-bit output
``r`` becomes the uniform ``((r >> 11) + 0.5) / 2^53`` and normals are the
inverse normal CDF of those uniforms. The first ``n`` uniforms drive ``U``,
the next ``n`` drive ``eps`` and the last ``n`` drive ``W``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from .errors import DivergenceError, NumericalError, ValidationError
from .smoothing import CurveEstimate, Sample

log = logging.getLogger(__name__)

__all__ = [
    "DgpSpec",
    "McSummary",
    "uniform_stream",
    "true_curve",
    "generate",
    "mc_grid",
    "interior_mask",
    "integrated_sq_error",
    "run_monte_carlo",
    "rate_study",
]

DGP_IDS = ("quadratic", "sine")


@dataclass(frozen=True)
class DgpSpec:
    dgp_id: str = "quadratic"
    n: int = 1000
    alpha: float = 1.0
    beta: float = 2.0
    sigma: float = 0.5
    w_probs: tuple = (1.0 / 3.0, 2.0 / 3.0)
    coefficients: tuple = (0.0, -1.5, 0.3)
    seed: int = 0

    def __post_init__(self):
        if self.dgp_id in ("1", 1):
            object.__setattr__(self, "dgp_id", "quadratic")
        elif self.dgp_id in ("2", 2):
            object.__setattr__(self, "dgp_id", "sine")
        if self.dgp_id not in DGP_IDS:
            raise ValidationError(f"unknown dgp {self.dgp_id!r}")
        p = np.asarray(self.w_probs, dtype=float)
        if p.shape != (2,) or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("w_probs must be two positive numbers summing to 1")
        if self.n < 10:
            raise ValidationError("n must be at least 10")


def uniform_stream(seed: int, size: int) -> np.ndarray:
    """Open-interval uniforms from a Philox counter stream keyed by ``seed``."""
    bitgen = np.random.Philox(key=int(seed))
    raw = bitgen.random_raw(size)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def true_curve(spec: DgpSpec) -> Callable[[np.ndarray], np.ndarray]:
    if spec.dgp_id == "quadratic":
        a, b, c = spec.coefficients
        return lambda z: a + b * np.asarray(z) + c * np.asarray(z) ** 2
    return lambda z: 1.5 * np.sin(0.5 * np.pi * np.asarray(z))


def _z_cdf(spec: DgpSpec, z):
    # Z | W=0 ~ N(alpha, sigma^2 + 1), Z | W=1 ~ N(alpha + beta, 4 sigma^2 + 1)
    p0, p1 = spec.w_probs
    s0 = np.sqrt(spec.sigma**2 + 1.0)
    s1 = np.sqrt(4.0 * spec.sigma**2 + 1.0)
    return p0 * ndtr((z - spec.alpha) / s0) + p1 * ndtr((z - spec.alpha - spec.beta) / s1)


def z_quantile(spec: DgpSpec, q: float) -> float:
    return brentq(lambda t: _z_cdf(spec, t) - q, -50.0, 50.0, xtol=1e-12)


def generate(spec: DgpSpec, grid=None) -> tuple[Sample, CurveEstimate]:
    """Draw one sample and return it with the true curve."""
    n = spec.n
    uni = uniform_stream(spec.seed, 3 * n)
    u = ndtri(uni[:n])
    eps = ndtri(uni[n:2 * n])
    w = (uni[2 * n:] < spec.w_probs[1]).astype(np.int64)
    z = spec.alpha + spec.sigma * u + (spec.beta + spec.sigma * u) * w + eps
    phi = true_curve(spec)
    y = phi(z) + u
    sample = Sample(y, z, w, w_type="discrete")
    if grid is None:
        grid = np.linspace(z.min(), z.max(), 101)
    return sample, CurveEstimate.from_function(phi, grid, z)


def mc_grid(spec: DgpSpec, num: int = 101, n_ref: Optional[int] = None) -> np.ndarray:
    """Common evaluation grid for Monte Carlo summaries.

    Spans the population quantiles ``1/(m+1)`` and ``m/(m+1)`` of ``Z``, the
    expected sample extremes at ``m = n_ref`` (default ``spec.n``), so it
    mirrors the default per-sample grid over ``[min z, max z]``.
    """
    m = spec.n if n_ref is None else n_ref
    lo = z_quantile(spec, 1.0 / (m + 1))
    hi = z_quantile(spec, m / (m + 1.0))
    return np.linspace(lo, hi, num)


def interior_mask(grid, fraction: float = 0.9) -> np.ndarray:
    """Grid points in the central ``fraction`` of the grid's range."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = grid[0], grid[-1]
    cut = 0.5 * (1.0 - fraction) * (hi - lo)
    return (grid >= lo + cut - 1e-12) & (grid <= hi - cut + 1e-12)


def integrated_sq_error(grid, estimate, truth, mask=None) -> float:
    """Trapezoid integral of ``(estimate - truth)^2`` over the masked grid."""
    grid = np.asarray(grid, dtype=float)
    err = (np.asarray(estimate, dtype=float) - np.asarray(truth, dtype=float)) ** 2
    if mask is not None:
        grid, err = grid[mask], err[mask]
    return float(trapezoid(err, grid))


@dataclass
class McSummary:
    """Aggregated Monte Carlo replications on a common grid.

    ``curves`` and ``initial_curves`` hold one row per non-divergent
    replication; ``mise_*`` are integrated squared errors over the interior
    of the grid.
    """

    grid: np.ndarray
    truth: np.ndarray
    mean_curve: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    curves: np.ndarray
    initial_curves: np.ndarray
    mise_initial: np.ndarray
    mise_final: np.ndarray
    n_stop: np.ndarray
    n_max: np.ndarray
    stopped_by: list
    trace_decreasing: np.ndarray
    seeds: np.ndarray
    diverged: list = field(default_factory=list)

    @property
    def interior(self) -> np.ndarray:
        return interior_mask(self.grid)

    def coverage(self) -> float:
        """Share of interior grid points where the truth lies inside the band."""
        m = self.interior
        inside = (self.truth[m] >= self.lo95[m]) & (self.truth[m] <= self.hi95[m])
        return float(inside.mean())

    def improved(self) -> int:
        return int(np.sum(self.mise_final < self.mise_initial))

    def to_rows(self) -> list:
        return [
            {"grid": g, "mean": m, "lo95": lo, "hi95": hi, "truth": t}
            for g, m, lo, hi, t in zip(self.grid, self.mean_curve, self.lo95, self.hi95, self.truth)
        ]


def _one_rep(spec: DgpSpec, solver_cfg, estimator, grid, mask):
    from .ident import estimate_density_model, pseudo_true
    from .parametric import BasisSpec, fit_parametric
    from .solver import SolverConfig, initialize, landweber_fit

    sample, truth = generate(spec)
    phi = true_curve(spec)
    n_stop, n_max, stopped_by, decreasing = -1, -1, "", True
    if callable(estimator):
        final = estimator(sample, truth)
        initial = final
    else:
        cfg = solver_cfg or SolverConfig()
        if estimator == "landweber":
            fit = landweber_fit(sample, cfg)
            initial, final = fit.initial, fit.curve
            n_stop, n_max, stopped_by = fit.n_stop, fit.n_max, fit.stopped_by
            tr = fit.trace[: fit.n_stop + 1]
            decreasing = bool(np.all(np.diff(tr) < 0))
        else:
            initial = initialize(sample, replace(cfg, initializer="nw_of_y_on_z"))
            if estimator == "parametric":
                pf = fit_parametric(sample, BasisSpec("polynomial", 3), seed=spec.seed)
                final = CurveEstimate.from_function(lambda t: pf.basis(pf.theta, t), truth.grid, sample.z)
            elif estimator == "pseudo_true_mi":
                model = estimate_density_model(sample)
                final = pseudo_true(model, truth.grid, sample.z).curve
            else:
                raise ValidationError(f"unknown estimator {estimator!r}")
        initial = initial.shifted(float(np.mean(sample.y - initial.at_sample)))
    f_grid = np.interp(grid, final.grid, final.values)
    i_grid = np.interp(grid, initial.grid, initial.values)
    t_grid = phi(grid)
    return dict(
        final=f_grid, initial=i_grid,
        mise_final=integrated_sq_error(grid, f_grid, t_grid, mask),
        mise_initial=integrated_sq_error(grid, i_grid, t_grid, mask),
        n_stop=n_stop, n_max=n_max, stopped_by=stopped_by, decreasing=decreasing,
    )


def run_monte_carlo(spec: DgpSpec, reps: int = 100, solver_cfg=None,
                    estimator: Union[str, Callable] = "landweber", grid=None,
                    n_jobs: int = 1, max_divergent: float = 0.2) -> McSummary:
    """Replicate ``estimator`` over seeds ``spec.seed + i``, ``i < reps``.

    ``estimator`` is ``"landweber"``, ``"parametric"``, ``"pseudo_true_mi"`` or a
    callable ``(sample, truth) -> CurveEstimate``. Replications that fail
    numerically are recorded in ``diverged``; more than ``max_divergent`` of
    them aborts the run.
    """
    if reps < 2:
        raise ValidationError("Monte Carlo needs reps >= 2")
    grid = mc_grid(spec) if grid is None else np.asarray(grid, dtype=float)
    mask = interior_mask(grid)
    seeds = spec.seed + np.arange(reps)

    def task(s):
        try:
            return _one_rep(replace(spec, seed=int(s)), solver_cfg, estimator, grid, mask)
        except NumericalError as exc:
            return exc

    if n_jobs == 1:
        results = [task(s) for s in seeds]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(task)(s) for s in seeds)

    diverged = [(int(s), str(r)) for s, r in zip(seeds, results) if isinstance(r, Exception)]
    if len(diverged) > max_divergent * reps:
        raise NumericalError(
            f"{len(diverged)} of {reps} replications failed; first: seed {diverged[0][0]}: {diverged[0][1]}")
    ok = [r for r in results if not isinstance(r, Exception)]
    good_seeds = np.array([s for s, r in zip(seeds, results) if not isinstance(r, Exception)])
    curves = np.array([r["final"] for r in ok])
    lo, hi = np.percentile(curves, [2.5, 97.5], axis=0)
    return McSummary(
        grid=grid,
        truth=true_curve(spec)(grid),
        mean_curve=curves.mean(axis=0),
        lo95=lo,
        hi95=hi,
        curves=curves,
        initial_curves=np.array([r["initial"] for r in ok]),
        mise_initial=np.array([r["mise_initial"] for r in ok]),
        mise_final=np.array([r["mise_final"] for r in ok]),
        n_stop=np.array([r["n_stop"] for r in ok]),
        n_max=np.array([r["n_max"] for r in ok]),
        stopped_by=[r["stopped_by"] for r in ok],
        trace_decreasing=np.array([r["decreasing"] for r in ok]),
        seeds=good_seeds,
        diverged=diverged,
    )


def rate_study(spec: DgpSpec, n_list: Sequence[int], reps: int = 50, solver_cfg=None,
               n_jobs: int = 1) -> list:
    """Median interior MISE of the Landweber estimate for each sample size.

    All sizes share one grid, built for the smallest ``n`` so every sample
    covers it.
    """
    n_list = [int(n) for n in n_list]
    if reps < 2:
        raise ValidationError("rate study needs reps >= 2")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValidationError("n_list must be strictly increasing")
    grid = mc_grid(spec, n_ref=n_list[0])
    rows = []
    for n in n_list:
        mc = run_monte_carlo(replace(spec, n=n), reps, solver_cfg, "landweber", grid, n_jobs)
        rows.append({
            "n": n,
            "median_mise": float(np.median(mc.mise_final)),
            "mean_mise": float(np.mean(mc.mise_final)),
            "median_mise_initial": float(np.median(mc.mise_initial)),
            "median_n_stop": float(np.median(mc.n_stop)),
            "reps": len(mc.mise_final),
        })
    return rows
