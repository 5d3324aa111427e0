import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rflab import gaussian_model as gm
from rflab.errors import DivergenceError, DomainError

masses = st.floats(1e-300, 1.0, exclude_max=True)
interior = st.floats(1e-12, 1 - 1e-12)
taus = st.floats(1e-3, 1e3)


def test_cdf_reference_values():
    assert gm.phi_cdf(0.0) == 0.5
    assert gm.phi_cdf(np.inf) == 1.0
    assert gm.phi_cdf(-np.inf) == 0.0
    assert gm.phi_cdf(1.0) == pytest.approx(0.8413447460685429, rel=1e-15)


def test_quantile_reference_values():
    assert gm.phi_quantile(0.5) == 0.0
    assert gm.phi_quantile(0.0) == -np.inf
    assert gm.phi_quantile(1.0) == np.inf
    assert gm.phi_quantile(0.8413447460685429) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("bad", [-1e-9, 1.0 + 1e-9, np.nan])
def test_quantile_rejects_non_fractions(bad):
    with pytest.raises(DomainError):
        gm.phi_quantile(bad)


def test_profile_reference_values():
    assert gm.profile_I(0.0) == 0.0
    assert gm.profile_I(1.0) == 0.0
    assert gm.profile_I(0.5) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert gm.profile_I(0.2) == pytest.approx(gm.profile_I(0.8), rel=1e-14)


def test_small_mass_asymptotics():
    a = 1e-8
    assert gm.profile_I(a) / (a * math.sqrt(2 * math.log(1 / a))) == pytest.approx(1.0, rel=0.1)


def test_halfspace_reference_values():
    h = gm.halfspace_reference(0.5, gm.GaussianScale(0.5))
    assert h.threshold == 0.0 and h.perimeter == pytest.approx(0.3989422804014327, rel=1e-15)
    h = gm.halfspace_reference(0.5, gm.GaussianScale(2.0))
    assert h.perimeter == pytest.approx(0.19947114020071635, rel=1e-15)
    h = gm.halfspace_reference(1.0, gm.GaussianScale(1.0))
    assert h.degenerate and h.perimeter == 0.0 and h.threshold == np.inf


def test_halfspace_perimeter_against_hyperplane_quadrature():
    # density of N(0, 2 tau Id_2) integrated over the line x_1 = c
    tau, a = 0.7, 0.3
    h = gm.halfspace_reference(a, gm.GaussianScale(tau, 2))
    dens = lambda y: math.exp(-(h.threshold ** 2 + y * y) / (4 * tau)) / (4 * math.pi * tau)
    val, _ = integrate.quad(dens, -np.inf, np.inf, epsabs=1e-14)
    assert h.perimeter == pytest.approx(val, rel=1e-10)


def test_model_moments():
    assert gm.model_abs_moment(2, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert gm.model_abs_moment(2, 1.0) == pytest.approx(0.5, rel=1e-14)
    assert gm.model_abs_moment(1, 1.0) == pytest.approx(1 / math.sqrt(math.pi), rel=1e-14)
    with pytest.raises(DomainError):
        gm.model_abs_moment(0.5, 1.0)
    assert gm.model_vector_moment(2, 2, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_halfgaussian_exp_moment():
    assert gm.halfgaussian_exp_moment(0.0, 1.0) == 1.0
    assert gm.halfgaussian_exp_moment(1.0, 0.5) == pytest.approx(0.5 + math.exp(0.5) * gm.phi_cdf(1.0))
    assert gm.halfgaussian_exp_moment(1.0, 0.5) == pytest.approx(1.887143, abs=1e-6)
    # 1/2 + e * Phi(sqrt 2), checked independently by quadrature of E exp(G_+)
    quad, _ = integrate.quad(lambda g: math.exp(max(g, 0.0)) * stats.norm.pdf(g, scale=math.sqrt(2)),
                             -40, 40, points=[0.0])
    assert gm.halfgaussian_exp_moment(1.0, 1.0) == pytest.approx(quad, rel=1e-10)
    assert gm.halfgaussian_exp_moment(1.0, 1.0) == pytest.approx(3.0045, abs=1e-4)


def test_halfgaussian_square_moment():
    assert gm.halfgaussian_square_moment(0.0, 1.0) == 1.0
    assert gm.halfgaussian_square_moment(3 / 16, 1.0) == pytest.approx(1.5)
    assert gm.halfgaussian_square_moment(0.1, 1.0) == pytest.approx(1.1455, abs=1e-4)
    with pytest.raises(DivergenceError):
        gm.halfgaussian_square_moment(0.25, 1.0)


def test_lambda_p_closed_forms_and_estimates():
    assert gm.lambda_p(1).value == pytest.approx(math.sqrt(math.pi / 2), rel=1e-15)
    assert gm.lambda_p(2).value == 1.0 and gm.lambda_p(2).exact
    assert gm.lambda_p_estimate(2) == pytest.approx(1.0, abs=1e-6)
    assert gm.lambda_p_estimate(1) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-6)
    p4 = gm.lambda_p(4)
    assert not p4.exact and p4.value > 1.0
    with pytest.raises(DomainError):
        gm.lambda_p(0.5)


@given(interior)
def test_quantile_inverts_cdf(a):
    x = gm.phi_quantile(a)
    assert gm.phi_cdf(x) == pytest.approx(a, rel=1e-12)


@given(st.floats(-37, 37))
def test_cdf_matches_scipy(x):
    # rounding of x is amplified by about x^2 in the relative error of the tail
    rel = 1e-14 * (4 + x * x)
    assert gm.phi_cdf(x) == pytest.approx(stats.norm.cdf(x), rel=rel, abs=1e-300)


@given(masses)
def test_profile_nonnegative_and_bounded(a):
    assert 0.0 <= gm.profile_I(a) <= gm.profile_I(0.5)


@given(st.floats(1e-6, 0.5))
def test_profile_symmetric(a):
    # 1 - a is exact only up to one ulp of 1, which moves I by about that much over a
    b = 1.0 - a
    assert gm.profile_I(1.0 - b) == pytest.approx(gm.profile_I(b), rel=1e-14)


@given(interior)
def test_profile_is_concave_with_known_second_derivative(a):
    # I * I'' = -1 checked by a centred difference away from the endpoints
    if not 1e-4 < a < 1 - 1e-4:
        return
    h = 1e-5 * min(a, 1 - a)
    d2 = (gm.profile_I(a + h) - 2 * gm.profile_I(a) + gm.profile_I(a - h)) / h ** 2
    assert d2 < 0
    assert gm.profile_I(a) * d2 == pytest.approx(-1.0, rel=1e-2)


@given(interior, taus)
def test_halfspace_perimeter_scales_like_inverse_sqrt_tau(a, tau):
    p1 = gm.halfspace_reference(a, gm.GaussianScale(tau)).perimeter
    p4 = gm.halfspace_reference(a, gm.GaussianScale(4 * tau)).perimeter
    assert p1 == pytest.approx(2 * p4, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(0.0, 5.0), st.floats(1e-3, 10.0))
def test_exp_moment_increases_in_lambda(lam, tau):
    assert gm.halfgaussian_exp_moment(lam + 0.1, tau) > gm.halfgaussian_exp_moment(lam, tau)


def test_exp_moment_overflow_is_infinite():
    assert gm.halfgaussian_exp_moment(2.0, 1e3) == math.inf
