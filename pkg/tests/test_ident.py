import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from npiv_indep.errors import NonIdentifiedError, UnsupportedInstrumentError, ValidationError
from npiv_indep.ident import DensityModel, estimate_density_model, normal_design, pseudo_true
from npiv_indep.kernels import silverman_bandwidth
from npiv_indep.smoothing import Sample

# Riemann sum of the Gram system on 2001 points over [-6, 7], frozen
LAMBDA_N01 = np.array([-0.4751643, 1.9751643])


@pytest.fixture(scope="module")
def design():
    return normal_design([0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [1.0, 2.0])


def test_lambda_oracle(design):
    res = pseudo_true(design, np.linspace(-2, 3, 11))
    np.testing.assert_allclose(res.lambdas, LAMBDA_N01, atol=1e-4)
    np.testing.assert_allclose(res.gram, res.gram.T)


def test_moments_reproduced(design):
    res = pseudo_true(design, np.linspace(-2, 3, 11))
    for l, r in enumerate(design.r):
        m = design._integrate(lambda t: float(res(t)) * float(design.f_z_given_w[l](t)))
        assert m == pytest.approx(r, abs=1e-8)


def test_curve_in_span(design):
    grid = np.linspace(-2, 3, 21)
    res = pseudo_true(design, grid, z=np.array([0.0, 1.0]))
    etas = np.column_stack([design.eta(j, grid) for j in range(2)])
    np.testing.assert_allclose(res.curve.values, etas @ res.lambdas, rtol=1e-12)
    assert res.curve.at_sample.shape == (2,)


def test_independent_instrument_not_identified():
    with pytest.raises(NonIdentifiedError):
        pseudo_true(normal_design([0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [1.0, 2.0]), [0.0])


@given(st.floats(-3, 3), st.floats(0.3, 3))
def test_zero_moments_zero_curve(shift, sd):
    m = normal_design([0.0, shift + 0.5], [1.0, sd], [0.4, 0.6], [0.0, 0.0])
    np.testing.assert_allclose(pseudo_true(m, [0.0]).lambdas, 0.0, atol=1e-12)


def test_constant_moments_give_constant():
    # sum_j p_j eta_j = 1, so equal moments c solve with phi = c
    m = normal_design([0.0, 1.0, 2.5], [1.0, 0.7, 1.3], [0.2, 0.5, 0.3], [1.5, 1.5, 1.5])
    res = pseudo_true(m, np.linspace(-1, 3, 9))
    np.testing.assert_allclose(res.curve.values, 1.5, atol=1e-7)


def test_mirror_symmetry():
    a = pseudo_true(normal_design([-1.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.0, 1.0]), [-0.7, 0.7])
    b = pseudo_true(normal_design([-1.0, 1.0], [1.0, 1.0], [0.5, 0.5], [1.0, 0.0]), [-0.7, 0.7])
    np.testing.assert_allclose(a.curve.values, b.curve.values[::-1], atol=1e-9)


def test_density_model_validation():
    f = lambda t: np.exp(-np.asarray(t) ** 2 / 2) / np.sqrt(2 * np.pi)  # noqa: E731
    with pytest.raises(ValidationError):
        DensityModel(f, [f, f], [0.5, 0.6], [0.0, 0.0], (-5, 5))
    with pytest.raises(ValidationError):
        DensityModel(f, [f, f], [0.5, 0.5], [0.0], (-5, 5))
    with pytest.raises(ValidationError):
        DensityModel(f, [f, f], [0.5, 0.5], [0.0, 0.0], (5, -5))


def test_check_masses_flags_truncation():
    m = normal_design([0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.0, 0.0], support=(-1.0, 2.0))
    with pytest.warns(RuntimeWarning):
        assert "f_z" in m.check_masses()
    assert normal_design([0.0, 1.0], [1.0, 1.0], [0.5, 0.5], [0.0, 0.0]).check_masses() == []


def test_plug_in_recovers_design():
    rng = np.random.default_rng(3)
    n = 5000
    w = rng.integers(0, 2, n)
    z = rng.normal(w.astype(float), 1.0)
    y = 1.0 + w + rng.normal(0, 0.5, n)
    model = estimate_density_model(Sample(y, z, w))
    np.testing.assert_allclose(model.category_probs, 0.5, atol=0.03)
    np.testing.assert_allclose(model.r, [1.0, 2.0], atol=0.05)
    # a Gaussian KDE of a Gaussian sample is Gaussian with variance s^2 + h^2
    mu = [z[w == j].mean() for j in (0, 1)]
    sd = [np.sqrt(z[w == j].var() + silverman_bandwidth(z[w == j], "density") ** 2) for j in (0, 1)]
    oracle = pseudo_true(normal_design(mu, sd, model.category_probs, model.r), [0.0]).lambdas
    np.testing.assert_allclose(pseudo_true(model, [0.0]).lambdas, oracle, atol=0.02)
    # the mixture makes sum_j p_j eta_j = 1 exactly
    t = np.linspace(-2, 3, 7)
    np.testing.assert_allclose(sum(p * model.eta(j, t) for j, p in enumerate(model.category_probs)),
                               1.0, rtol=1e-12)


def test_plug_in_rejects_continuous(small_sample):
    s = Sample(small_sample.y, small_sample.z, small_sample.z, w_type="continuous")
    with pytest.raises(UnsupportedInstrumentError):
        estimate_density_model(s)
