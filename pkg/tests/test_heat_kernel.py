import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab import heat_kernel as hk
from rflab.errors import DomainError, StabilityError, UnsupportedFlowError


@pytest.fixture(scope="module")
def euclid():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 256)


@pytest.fixture(scope="module")
def sphere():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.45), 256)


@pytest.fixture(scope="module")
def warped():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.default_warped_profile(), 0.0, 0.3), 128)


def test_euclidean_kernel_is_unit_normal_at_half(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    y = np.linspace(-4, 4, 9)
    assert np.allclose(m.density_at(y), np.exp(-y * y / 2) / math.sqrt(2 * math.pi), rtol=1e-14)
    assert m.expect(lambda p: p[..., 0] ** 2) == pytest.approx(2 * m.tau, rel=1e-12)


def test_large_torus_matches_euclidean_density():
    fl = fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((100.0,)), 0.0, 1.0), 256)
    m = hk.conjugate_kernel(fl, 0.0, 1.0, 0.5)
    y = np.linspace(-5, 5, 21)
    assert np.max(np.abs(m.density_at(y) - np.exp(-y * y / 2) / math.sqrt(2 * math.pi))) < 1e-12


def test_sphere_spectral_and_discrete_routes_agree(sphere):
    a = hk.conjugate_kernel(sphere, 0.0, 0.3, 0.0)
    b = hk.conjugate_kernel(sphere, 0.0, 0.3, 0.0, method="discrete-adjoint")
    assert a.total_mass == pytest.approx(1.0, abs=1e-12)
    assert b.total_mass == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(np.cumsum(a.masses) - np.cumsum(b.masses))) < 1e-3


def test_kernel_argument_errors(sphere, euclid):
    with pytest.raises(DomainError):
        hk.conjugate_kernel(sphere, 0.0, 0.2, 0.3)
    with pytest.raises(UnsupportedFlowError):
        hk.conjugate_kernel(sphere, 1.0, 0.3, 0.0)
    with pytest.raises(UnsupportedFlowError):
        hk.conjugate_kernel(sphere, 0.0, 0.3, 0.0, method="closed-form")
    with pytest.raises(DomainError):
        hk.conjugate_kernel(euclid, 0.0, 3.0, 0.0)


def test_explicit_steps_beyond_positivity_limit_are_refused(warped):
    with pytest.raises(StabilityError):
        hk.propagate(warped, np.ones(128), 0.0, 0.3, steps=2)


def test_torus_semigroup_on_fourier_modes(torus):
    x = torus.grid.centers
    out = hk.SemigroupOperator(torus, 0.0, 0.7).apply(np.cos(3 * x)).values
    assert np.allclose(out, math.exp(-9 * 0.7) * np.cos(3 * x), atol=1e-14)


def test_euclidean_semigroup_of_quadratic():
    # P_{gap} |y|^2 at x equals |x|^2 + 2 n gap
    val = hk.gaussian_semigroup(lambda p: np.sum(p * p, axis=-1), (1.0, 2.0), 0.3)
    assert val == pytest.approx(5.0 + 4 * 0.3, rel=1e-13)


def test_warped_masses_are_positive_and_conserved(warped):
    rec = [0.0, 0.1, 0.2]
    for m in hk.adjoint_masses(warped, hk.evaluation_weights(warped, 0.0), 0.0, 0.3, rec):
        assert m.min() >= 0.0
        assert m.sum() == pytest.approx(1.0, abs=1e-10)


coeffs = st.lists(st.floats(-1, 1), min_size=2, max_size=6)


@settings(max_examples=20, deadline=None)
@given(coeffs, st.sampled_from([0.0, math.pi]), st.sampled_from([0.0, 0.1]))
def test_adjoint_masses_are_the_exact_transpose(warped, a, pole, s):
    # m(s) . u(s) == w . u(t0) for any forward solution on the same step times
    t0 = 0.3
    times, _ = hk.time_grid(warped, s, t0, [s, t0])
    x = warped.grid.centers
    u0 = np.cos(np.multiply.outer(x, np.arange(len(a)))) @ np.array(a)
    u1 = hk.propagate(warped, u0, s, t0, times=times)[0]
    w = hk.evaluation_weights(warped, pole)
    m = hk.adjoint_masses(warped, w, s, t0, times=times)[0]
    assert float(m @ u0) == pytest.approx(float(w @ u1), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 1.5))
def test_torus_kernel_is_probability_with_translation_symmetry(torus, x0, tau):
    m = hk.conjugate_kernel(torus, x0, 3.0, 3.0 - tau)
    assert m.total_mass == pytest.approx(1.0, abs=1e-12)
    assert m.interval_mass(torus.grid.lo, torus.grid.hi) == pytest.approx(1.0, abs=1e-12)
    a = m.interval_mass(x0 - 0.5, x0)
    b = m.interval_mass(x0, x0 + 0.5)
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.44))
def test_sphere_kernel_mass_and_positivity(sphere, tau):
    m = hk.conjugate_kernel(sphere, 0.0, 0.45, 0.45 - tau)
    assert m.total_mass == pytest.approx(1.0, abs=1e-12)
    assert m.masses.min() >= -1e-15
