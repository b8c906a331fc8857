import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npiv_indep import solver as solver_mod
from npiv_indep.errors import ConfigError, DegenerateSampleError, DivergenceError
from npiv_indep.kernels import KernelSpec, kernel_eval, silverman_bandwidth
from npiv_indep.operator import Operator, OperatorConfig
from npiv_indep.simulate import DgpSpec, generate, true_curve
from npiv_indep.smoothing import CurveEstimate, Sample
from npiv_indep.solver import (
    SolverConfig,
    compute_n_max,
    initialize,
    landweber_fit,
    n_max_target,
    solve_n_log_n,
)


def _brute_n_max(target):
    best = 1
    N = 2
    while N * math.log(N) <= target:
        best = N
        N += 1
    return best


def _range_sample(n, y_range):
    y = np.linspace(0.0, y_range, n)
    return Sample(y, np.arange(n, dtype=float), np.arange(n) % 2)


def test_n_max_default_example():
    # N ln N = (18 * 1000^(5/24))^2 = 5761.625; root N* = 853.64 (mpmath)
    s = _range_sample(1000, 9.0)
    assert n_max_target(1000, 9.0, SolverConfig()) == pytest.approx(5761.62528852611, rel=1e-12)
    assert compute_n_max(s, SolverConfig()) == 853


def test_n_max_floor_clamp():
    assert solve_n_log_n(2 * math.log(2) - 1e-9) == 1
    assert solve_n_log_n(0.0) == 1
    assert solve_n_log_n(2 * math.log(2)) == 2


@given(st.floats(0, 3e5))
def test_n_max_matches_scan(target):
    assert solve_n_log_n(target) == _brute_n_max(target)


def test_n_max_needs_n10():
    s = Sample(np.arange(5.0), np.arange(5.0), np.zeros(5), min_n=2)
    with pytest.raises(DegenerateSampleError):
        compute_n_max(s, SolverConfig())


@pytest.mark.parametrize("kw", [
    dict(c=0.0), dict(c=1.0), dict(alpha=0.0), dict(rho=3), dict(rho=0), dict(nu=1 / 3),
    dict(nu=-0.1), dict(n_max_override=-1), dict(initializer="ols"), dict(initializer="user_curve"),
    dict(h_u=0.0), dict(grid_size=1),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_initializers(small_sample):
    s = small_sample
    z0 = initialize(s, SolverConfig(initializer="zero"))
    assert np.all(z0.values == 0) and np.all(z0.at_sample == 0)
    const = Sample(np.full(s.n, 2.0), s.z, s.w)
    np.testing.assert_allclose(initialize(const, SolverConfig()).values, 2.0, rtol=1e-14)


def test_nw_initializer_duplicate_oracle(dgp1_sample):
    s, _ = dgp1_sample
    phi0 = initialize(s, SolverConfig())
    h = silverman_bandwidth(s.z, "regression")
    for g in phi0.grid[[10, 30, 50, 70, 90]]:
        k = np.exp(-0.5 * ((g - s.z) / h) ** 2)
        assert np.interp(g, phi0.grid, phi0.values) == pytest.approx(np.sum(k * s.y) / np.sum(k), abs=1e-10)


def test_user_curve(small_sample):
    s = small_sample
    narrow = CurveEstimate([0.0, 1.0], [0.0, 0.0], np.zeros(s.n))
    with pytest.raises(ConfigError):
        initialize(s, SolverConfig(initializer="user_curve", user_curve=narrow))
    good = CurveEstimate.from_function(np.sin, np.linspace(s.z.min() - 1, s.z.max() + 1, 51), s.z)
    assert initialize(s, SolverConfig(initializer="user_curve", user_curve=good)) is good


def test_single_category_stops_at_zero(small_sample):
    s = Sample(small_sample.y, small_sample.z, np.zeros(small_sample.n))
    fit = landweber_fit(s, SolverConfig())
    assert fit.n_stop == 0 and fit.stopped_by == "norm_increase"
    shift = fit.curve.values - fit.initial.values
    np.testing.assert_allclose(shift, shift[0], atol=1e-12)


@pytest.fixture(scope="module")
def quick_fit(small_sample):
    return landweber_fit(small_sample, SolverConfig(n_max_override=60))


def test_fit_invariants(quick_fit, small_sample):
    f = quick_fit
    assert f.trace.size == f.n_stop + 1 and f.n_stop <= f.n_max == 60
    assert np.all(np.diff(f.trace) < 0)
    if f.stopped_by == "norm_increase":
        assert f.norm_after_stop >= f.trace[-1]
    assert abs(np.mean(small_sample.y - f.curve.at_sample)) < 1e-8
    np.testing.assert_allclose(f.curve.at_sample, np.interp(small_sample.z, f.curve.grid, f.curve.values),
                               atol=1e-12)


def test_determinism(quick_fit, small_sample):
    again = landweber_fit(small_sample, SolverConfig(n_max_override=60))
    assert again.trace.tobytes() == quick_fit.trace.tobytes()
    assert again.curve.values.tobytes() == quick_fit.curve.values.tobytes()


def test_zero_iterations(small_sample):
    f = landweber_fit(small_sample, SolverConfig(n_max_override=0))
    assert f.n_stop == 0 and f.trace.size == 1 and f.stopped_by == "n_max"


def test_scan_full_trace(small_sample):
    f = landweber_fit(small_sample, SolverConfig(n_max_override=40, scan_full_trace=True))
    assert f.trace.size == 41
    assert f.n_stop == int(np.argmin(f.trace))


def test_divergence_guard(small_sample, monkeypatch):
    monkeypatch.setattr(solver_mod, "DIVERGENCE_LIMIT", 0.0)
    with pytest.raises(DivergenceError, match="iteration 0"):
        landweber_fit(small_sample, SolverConfig(n_max_override=5))


def test_descent_from_perturbed_truth():
    # one step from truth + eps * bump lowers the empirical norm
    hits, reps = 0, 20
    for seed in range(reps):
        spec = DgpSpec("quadratic", n=400, seed=100 + seed)
        s, _ = generate(spec)
        grid = np.linspace(s.z.min(), s.z.max(), 101)
        bump = lambda z: np.exp(-0.5 * (z - 2.3) ** 2)  # noqa: E731
        f = lambda z: true_curve(spec)(z) + 0.3 * bump(z)  # noqa: E731
        phi = CurveEstimate.from_function(f, grid, s.z)
        op = Operator(s, OperatorConfig.from_sample(s, phi), grid)
        ev = op.evaluate(phi.at_sample)
        step = op.adjoint_grid(ev.at_points, ev.mean_over_w, ev.f_u)
        new = op.evaluate(np.interp(s.z, grid, phi.values - 0.5 * step))
        hits += new.empirical_sq_norm < ev.empirical_sq_norm
    assert hits >= 0.9 * reps
