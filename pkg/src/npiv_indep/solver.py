"""Landweber-Fridman iteration for ``T(phi) = 0``.

    phi_{j+1} = phi_j - c * T'*_{phi_j}(T(phi_j))

The iteration count is the regularisation parameter. Iterations are capped at
``N_max``, where ``sqrt(N ln N) ~ C n^((rho (1 - 3 nu) - 3) / (3 rho))`` with
``C = alpha (y_max - y_min) / c``, and stop early the first time the empirical
squared norm of ``T(phi_j)`` fails to decrease (a tie counts as a stop, so the
kept part of the trace is strictly decreasing).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DegenerateSampleError, DivergenceError
from .kernels import KernelSpec, silverman_bandwidth
from .operator import Operator, OperatorConfig
from .smoothing import CurveEstimate, Sample, default_grid, nw_regression

__all__ = ["SolverConfig", "FitResult", "compute_n_max", "initialize", "landweber_fit"]

log = logging.getLogger(__name__)

INITIALIZERS = ("nw_of_y_on_z", "zero", "user_curve")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class SolverConfig:
    c: float = 0.5
    alpha: float = 1.0
    rho: int = 8
    nu: float = 0.0
    n_max_override: Optional[int] = None
    initializer: str = "nw_of_y_on_z"
    user_curve: Optional[CurveEstimate] = field(default=None, compare=False)
    h_u: Optional[float] = None
    h_w: Optional[float] = None
    h: Optional[float] = None
    lambda_w: float = 0.0
    indicator_cdf: bool = False
    scan_full_trace: bool = False
    grid_size: int = 101

    def __post_init__(self):
        if not 0.0 < self.c < 1.0:
            raise ConfigError(f"step constant c must lie in (0, 1), got {self.c}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if int(self.rho) != self.rho or self.rho < 2 or self.rho % 2:
            raise ConfigError(f"rho must be an even integer >= 2, got {self.rho}")
        if not 0.0 <= self.nu < 1.0 / 3.0:
            raise ConfigError(f"nu must lie in [0, 1/3), got {self.nu}")
        if self.n_max_override is not None and self.n_max_override < 0:
            raise ConfigError("n_max_override must be non-negative")
        if self.initializer not in INITIALIZERS:
            raise ConfigError(f"unknown initializer {self.initializer!r}")
        if self.initializer == "user_curve" and self.user_curve is None:
            raise ConfigError("initializer 'user_curve' needs user_curve")
        for name in ("h_u", "h_w", "h"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigError(f"bandwidth {name} must be positive")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`landweber_fit`.

    ``trace[j]`` is the empirical squared norm of ``T(phi_j)`` for
    ``j = 0 .. n_stop`` (all iterations when ``scan_full_trace``).
    ``norm_after_stop`` is the first non-decreasing value, which triggered the stop.
    """

    trace: np.ndarray
    n_stop: int
    n_max: int
    curve: CurveEstimate
    stopped_by: str
    initial: CurveEstimate
    norm_after_stop: Optional[float]
    bandwidths: dict


def _n_log_n(N: int) -> float:
    return N * math.log(N) if N >= 2 else 0.0


def n_max_target(n: int, y_range: float, cfg: SolverConfig) -> float:
    """Right-hand side of ``N ln N = (C n^e)^2``."""
    C = cfg.alpha * y_range / cfg.c
    expo = (cfg.rho * (1.0 - 3.0 * cfg.nu) - 3.0) / (3.0 * cfg.rho)
    return (C * n**expo) ** 2


def solve_n_log_n(target: float) -> int:
    """Largest integer ``N >= 1`` with ``N ln N <= target`` (1 if none >= 2)."""
    if target < _n_log_n(2):
        return 1
    lo, hi = 2, 4
    while _n_log_n(hi) <= target:
        lo, hi = hi, hi * 2
    # invariant: N ln N <= target at lo, > target at hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _n_log_n(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def compute_n_max(sample: Sample, cfg: SolverConfig) -> int:
    if sample.n < 10:
        raise DegenerateSampleError("N_max rule needs n >= 10")
    y_range = float(sample.y.max() - sample.y.min())
    return solve_n_log_n(n_max_target(sample.n, y_range, cfg))


def initialize(sample: Sample, cfg: SolverConfig, grid=None) -> CurveEstimate:
    grid = default_grid(sample.z, cfg.grid_size) if grid is None else np.asarray(grid, float)
    if cfg.initializer == "zero":
        return CurveEstimate.zeros(grid, sample.n)
    if cfg.initializer == "user_curve":
        curve = cfg.user_curve
        lo, hi = curve.grid[0], curve.grid[-1]
        if lo > sample.z.min() or hi < sample.z.max():
            raise ConfigError(
                f"user curve grid [{lo:g}, {hi:g}] does not cover the sample "
                f"z-range [{sample.z.min():g}, {sample.z.max():g}]")
        if curve.at_sample.shape != (sample.n,):
            raise ConfigError("user curve must carry one value per sample row")
        return curve
    spec = KernelSpec("gaussian", 2, silverman_bandwidth(sample.z, "regression"))
    return CurveEstimate.from_grid(grid, nw_regression(sample.z, sample.y, spec, grid), sample.z)


def landweber_fit(sample: Sample, cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Run the iteration and apply the stopping rule.

    Bandwidths are fixed from the residuals of the initial curve. The
    returned curve is shifted so the fitted residuals have zero sample mean.
    """
    if sample.n < 10:
        raise DegenerateSampleError("landweber_fit needs n >= 10")
    phi0 = initialize(sample, cfg)
    grid = phi0.grid
    op_cfg = OperatorConfig.from_sample(
        sample, phi0, rho=cfg.rho, h_u=cfg.h_u, h=cfg.h, h_w=cfg.h_w,
        lambda_w=cfg.lambda_w, indicator_cdf=cfg.indicator_cdf)
    op = Operator(sample, op_cfg, grid)
    n_max = cfg.n_max_override if cfg.n_max_override is not None else compute_n_max(sample, cfg)

    values = phi0.values.copy()
    at = phi0.at_sample.copy()
    trace = []
    kept = [(values, at)]  # iterates whose norm is in the trace
    norm_after = None
    stopped_by = "n_max"
    for j in range(n_max + 1):
        ev = op.evaluate(at)
        norm = ev.empirical_sq_norm
        if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            raise DivergenceError(f"empirical norm is {norm!r} at iteration {j}")
        if j > 0 and norm >= trace[-1] and not cfg.scan_full_trace:
            norm_after = norm
            stopped_by = "norm_increase"
            break
        trace.append(norm)
        if cfg.scan_full_trace:
            kept.append((values, at))
        else:
            kept[0] = (values, at)
        if j == n_max:
            break
        step = op.adjoint_grid(ev.at_points, ev.mean_over_w, ev.f_u)
        values = values - cfg.c * step
        at = np.interp(sample.z, grid, values)
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"non-finite iterate at iteration {j + 1}")

    trace = np.asarray(trace)
    if cfg.scan_full_trace:
        n_stop = int(np.argmin(trace))
        values, at = kept[n_stop + 1]
        if n_stop < n_max:
            stopped_by = "norm_increase"
    else:
        n_stop = len(trace) - 1
        values, at = kept[0]
    # E(Y) = E(phi) normalisation
    shift = float(np.mean(sample.y - at))
    curve = CurveEstimate(grid, values + shift, at + shift)
    log.info("landweber: N0=%d of N_max=%d (%s), norm %.3e -> %.3e",
             n_stop, n_max, stopped_by, trace[0], trace[n_stop])
    return FitResult(
        trace=trace, n_stop=n_stop, n_max=n_max, curve=curve, stopped_by=stopped_by,
        initial=phi0, norm_after_stop=norm_after, bandwidths=op_cfg.bandwidths())
