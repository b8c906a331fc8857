"""Kernel density, Nadaraya-Watson and conditional CDF estimators.

Passing ``u_spec=None`` to the CDF estimators swaps the integrated kernel for
the step function ``1{u_i <= u}``; passing ``w_spec=None`` to the continuous
estimator uses point-mass weights ``1{w_i == w}``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateSampleError, MissingCategoryError, ShapeError, ValidationError
from .kernels import KernelSpec, kernel_cdf_eval, kernel_eval

__all__ = [
    "DENSITY_FLOOR",
    "FLOOR_HITS",
    "Sample",
    "CurveEstimate",
    "default_grid",
    "kde",
    "nw_regression",
    "smoothed_cdf",
    "conditional_cdf_continuous",
    "conditional_cdf_discrete",
    "conditional_cdf_multicat",
]

DENSITY_FLOOR = 1e-10

#: how often each estimator hit the density floor since the last reset
FLOOR_HITS: Counter = Counter()


def _flag(name: str, count: int) -> None:
    if count:
        FLOOR_HITS[name] += int(count)


@dataclass
class Sample:
    """Observed triplets ``(y, z, w)`` with an optional binary covariate ``x``.

    Discrete instruments are stored as integer codes ``0 .. L-1`` with every
    category present.
    """

    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    x: Optional[np.ndarray] = None
    w_type: str = "discrete"
    min_n: int = field(default=10, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.w_type not in ("continuous", "discrete"):
            raise ValidationError(f"w_type must be 'continuous' or 'discrete', got {self.w_type!r}")
        n = self.y.shape[0]
        arrays = {"y": self.y, "z": self.z, "w": np.asarray(self.w)}
        if self.x is not None:
            self.x = np.asarray(self.x)
            arrays["x"] = self.x
        for name, a in arrays.items():
            if a.ndim != 1 or a.shape[0] != n:
                raise ShapeError(f"column {name} has shape {a.shape}, expected ({n},)")
            if not np.all(np.isfinite(a.astype(float))):
                raise ValidationError(f"column {name} contains NaN or infinite values")
        if n < self.min_n:
            raise DegenerateSampleError(f"sample has n={n} rows, need at least {self.min_n}")
        if self.w_type == "discrete":
            w = np.asarray(self.w, dtype=float)
            if np.any(w != np.round(w)) or np.any(w < 0):
                raise ValidationError("discrete instrument codes must be non-negative integers")
            self.w = w.astype(np.int64)
            present = np.unique(self.w)
            if present.size and not np.array_equal(present, np.arange(present[-1] + 1)):
                missing = sorted(set(range(present[-1] + 1)) - set(present.tolist()))
                raise MissingCategoryError(f"instrument categories {missing} are empty")
        else:
            self.w = np.asarray(self.w, dtype=float)
        if self.x is not None:
            if not np.all(np.isin(self.x, (0, 1))):
                raise ValidationError("covariate x must be coded 0/1")
            self.x = self.x.astype(np.int64)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_categories(self) -> int:
        if self.w_type != "discrete":
            raise ValidationError("continuous instrument has no categories")
        return int(self.w.max()) + 1

    def category_counts(self) -> np.ndarray:
        return np.bincount(self.w, minlength=self.n_categories)

    def subset(self, mask) -> "Sample":
        mask = np.asarray(mask, dtype=bool)
        w = self.w[mask]
        if self.w_type == "discrete":
            # re-code so categories stay consecutive
            _, w = np.unique(w, return_inverse=True)
        return Sample(
            self.y[mask], self.z[mask], w,
            None if self.x is None else self.x[mask],
            self.w_type, self.min_n,
        )


@dataclass
class CurveEstimate:
    """A curve stored on an evaluation grid plus its values at the sample z's."""

    grid: np.ndarray
    values: np.ndarray
    at_sample: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.at_sample = np.asarray(self.at_sample, dtype=float)
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise ShapeError("grid and values must be 1-d of equal length")
        if self.grid.size > 1 and np.any(np.diff(self.grid) <= 0):
            raise ValidationError("curve grid must be strictly increasing")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.at_sample))):
            raise ValidationError("curve values must be finite")

    @classmethod
    def from_grid(cls, grid, values, z) -> "CurveEstimate":
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        return cls(grid, values, np.interp(np.asarray(z, dtype=float), grid, values))

    @classmethod
    def from_function(cls, fn, grid, z) -> "CurveEstimate":
        return cls(grid, fn(np.asarray(grid, dtype=float)), fn(np.asarray(z, dtype=float)))

    @classmethod
    def zeros(cls, grid, n: int) -> "CurveEstimate":
        return cls(grid, np.zeros(len(grid)), np.zeros(n))

    def __call__(self, z):
        """Linear interpolation on the grid (flat beyond its ends)."""
        return np.interp(np.asarray(z, dtype=float), self.grid, self.values)

    def shifted(self, c: float) -> "CurveEstimate":
        return CurveEstimate(self.grid, self.values + c, self.at_sample + c)


def default_grid(z, num: int = 101) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.linspace(z.min(), z.max(), num)


def _pairwise(a, b):
    return np.asarray(a, dtype=float)[..., None] - np.asarray(b, dtype=float)


def _cdf_terms(u_vals, u_spec, eval_u):
    """Matrix of ``Kbar_h(eval_u - u_i)`` (or step-function indicators)."""
    d = _pairwise(eval_u, u_vals)
    if u_spec is None:
        return (d >= 0).astype(float)
    return kernel_cdf_eval(u_spec, d)


def kde(values, spec: KernelSpec, eval_points) -> np.ndarray:
    """``f(u) = (1/(n h)) sum_i K((u - v_i)/h)``, floored at ``DENSITY_FLOOR``."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise DegenerateSampleError("kde needs at least one value")
    dens = kernel_eval(spec, _pairwise(eval_points, values)).mean(axis=-1)
    low = dens < DENSITY_FLOOR
    _flag("kde", np.count_nonzero(low))
    return np.where(low, DENSITY_FLOOR, dens)


def nw_regression(x_in, y_in, spec: KernelSpec, eval_points) -> np.ndarray:
    """Nadaraya-Watson estimate of ``E[y | x]`` at ``eval_points``.

    Where the kernel mass falls below ``DENSITY_FLOOR`` the global mean of
    ``y_in`` is returned instead.
    """
    x_in = np.asarray(x_in, dtype=float)
    y_in = np.asarray(y_in, dtype=float)
    if x_in.shape != y_in.shape:
        raise ShapeError(f"x_in {x_in.shape} and y_in {y_in.shape} differ in length")
    weights = kernel_eval(spec, _pairwise(eval_points, x_in))
    den = weights.sum(axis=-1)
    num = weights @ y_in
    low = den < DENSITY_FLOOR
    _flag("nw_regression", np.count_nonzero(low))
    safe = np.where(low, 1.0, den)
    return np.where(low, y_in.mean(), num / safe)


def smoothed_cdf(u_vals, u_spec: Optional[KernelSpec], eval_u):
    """Unconditional smoothed CDF ``(1/n) sum_i Kbar_h(u - u_i)``."""
    return _cdf_terms(np.asarray(u_vals, dtype=float), u_spec, eval_u).mean(axis=-1)


def conditional_cdf_continuous(u_vals, w_vals, u_spec, w_spec, eval_u, eval_w):
    """Kernel-weighted CDF of ``u`` given ``w``.

    ``sum_i Kbar_hu(u - u_i) K_hw(w - w_i) / sum_i K_hw(w - w_i)``. Broadcasts
    over ``eval_u`` and ``eval_w``. Falls back to the unconditional CDF (and
    counts the event) where the weight mass is below the floor.
    """
    u_vals = np.asarray(u_vals, dtype=float)
    w_vals = np.asarray(w_vals, dtype=float)
    if u_vals.shape != w_vals.shape:
        raise ShapeError("u_vals and w_vals differ in length")
    eval_u, eval_w = np.broadcast_arrays(np.asarray(eval_u, float), np.asarray(eval_w, float))
    d = _pairwise(eval_w, w_vals)
    if w_spec is None:
        weights = (d == 0).astype(float)
    else:
        weights = kernel_eval(w_spec, d)
    den = weights.sum(axis=-1)
    terms = _cdf_terms(u_vals, u_spec, eval_u)
    low = den < DENSITY_FLOOR
    _flag("conditional_cdf_continuous", np.count_nonzero(low))
    cond = (terms * weights).sum(axis=-1) / np.where(low, 1.0, den)
    out = np.where(low, terms.mean(axis=-1), cond)
    return out[()] if out.ndim == 0 else out


def _category_mask(w_codes, category):
    w_codes = np.asarray(w_codes)
    mask = w_codes == category
    if not mask.any():
        raise MissingCategoryError(f"category {category} has no observations")
    return mask


def conditional_cdf_discrete(u_vals, w_codes, u_spec, eval_u, category: int):
    """``(1/n_j) sum_{i: w_i = j} Kbar_hu(u - u_i)`` (sorting on the instrument)."""
    u_vals = np.asarray(u_vals, dtype=float)
    mask = _category_mask(w_codes, category)
    out = smoothed_cdf(u_vals[mask], u_spec, eval_u)
    return out[()] if np.ndim(out) == 0 else out


def conditional_cdf_multicat(u_vals, w_codes, u_spec, eval_u, category: int,
                             lambda_w: float = 0.0, n_categories: Optional[int] = None):
    """Conditional CDF with discrete-kernel smoothing over categories.

    Observation ``i`` gets weight ``1 - lambda_w`` when it falls in
    ``category`` and ``lambda_w / (L - 1)`` otherwise; weights are normalised
    to sum to one. ``lambda_w = 0`` is exactly ``conditional_cdf_discrete``
    and ``lambda_w = (L-1)/L`` gives the unconditional CDF.
    """
    if not 0.0 <= lambda_w < 1.0:
        raise ValidationError("lambda_w must lie in [0, 1)")
    w_codes = np.asarray(w_codes)
    mask = _category_mask(w_codes, category)
    if lambda_w == 0.0:
        return conditional_cdf_discrete(u_vals, w_codes, u_spec, eval_u, category)
    L = n_categories if n_categories is not None else int(w_codes.max()) + 1
    if L < 2:
        return conditional_cdf_discrete(u_vals, w_codes, u_spec, eval_u, category)
    weights = np.where(mask, 1.0 - lambda_w, lambda_w / (L - 1))
    terms = _cdf_terms(np.asarray(u_vals, dtype=float), u_spec, eval_u)
    out = terms @ weights / weights.sum()
    return out[()] if np.ndim(out) == 0 else out
