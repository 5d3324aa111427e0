import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab import gaussian_model as gm
from rflab import score_estimates as se
from rflab.errors import DomainError, UnsupportedFlowError
from rflab.isoperimetry import IntervalSet


@pytest.fixture(scope="module")
def plane():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 256)


@pytest.fixture(scope="module")
def line():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 512)


@pytest.fixture(scope="module")
def sphere_score():
    fl = fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.45), 256)
    return se.score_field(fl, 0.0, 0.3, 0.1, 0.0)


def test_euclidean_score_is_linear(line):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    u = np.linspace(-3, 3, 7)
    assert np.allclose(sc.profile(u), u / (2 * 0.5), atol=1e-9)


def test_score_law_moments(line):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    assert sc.mean() == pytest.approx(0.0, abs=1e-12)
    assert sc.expect(lambda s: s * s) == pytest.approx(1 / (2 * 0.5), rel=1e-6)


def test_optimal_half_line_saturates_the_set_bound(line):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    b = se.set_bound_check(sc, sc.superlevel_set(0.4))
    assert b.value == pytest.approx(b.bound, abs=1e-6)


def test_full_gradient_p2_moment_equals_half_the_dimension(plane):
    sc = se.score_field(plane, (0.0, 0.0), 1.0, 0.5, (1.0, 0.0))
    b = se.moment_check(sc, 2, full_gradient=True)
    assert b.value == pytest.approx(1.0, abs=1e-6)
    assert b.bound == pytest.approx(1.0, abs=1e-12)


def test_directional_p1_moment(line):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    b = se.moment_check(sc, 1)
    assert b.value == pytest.approx(1 / math.sqrt(math.pi), abs=1e-6)
    assert b.bound == pytest.approx(1 / math.sqrt(math.pi), abs=1e-12)


def test_two_sided_tail_set_saturates_the_localized_bound(line):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    rec = se.localized_moment_check(sc, se.two_sided_tail_set(sc, 0.2), 2)
    assert rec.mass == pytest.approx(0.2, abs=1e-12)
    assert rec.value == pytest.approx(rec.bound, abs=1e-6)


def test_argument_validation(line, torus):
    with pytest.raises(DomainError):
        se.score_field(line, 0.0, 1.0, 0.5, 2.0)
    with pytest.raises(DomainError):
        se.score_field(torus, 0.0, 1.0, 0.5, 0.5)
    with pytest.raises(DomainError):
        se.ConvexTest("power", 0.5)
    with pytest.raises(DomainError):
        se.convex_order_check(se.score_field(line, 0.0, 1.0, 0.5), [lambda r: -r * r])
    warped = fg.evolve_ricci_flow(fg.FlowSpec(fg.default_warped_profile(), 0.0, 0.3), 64)
    with pytest.raises(UnsupportedFlowError):
        se.score_field(warped, 0.0, 0.3, 0.1)


def test_sphere_score_matches_the_analytic_derivative(sphere_score):
    exact = se.score_field_exact_sphere(sphere_score)
    assert np.max(np.abs(sphere_score.values - exact)) < 1e-4


def test_sphere_score_has_zero_mean(sphere_score):
    assert float(np.dot(sphere_score.weights, sphere_score.values)) == pytest.approx(0.0, abs=1e-9)


tests_family = st.sampled_from([se.ConvexTest("power", 1.0), se.ConvexTest("power", 3.0),
                                se.ConvexTest("hinge", 0.5), se.ConvexTest("exp", 0.3),
                                se.ConvexTest("max", -0.2), se.ConvexTest("linear", 2.0)])


@settings(max_examples=20, deadline=None)
@given(tests_family, st.floats(0.2, 1.0))
def test_euclidean_convex_order_is_an_equality(line, psi, tau):
    sc = se.score_field(line, 0.0, 2.0, 2.0 - tau)
    (_, val, model), = se.convex_order_check(sc, [psi])
    assert val == pytest.approx(model, rel=1e-6, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(tests_family, st.floats(0.1, 0.4))
@example(se.ConvexTest("hinge", 0.5), 0.1875)
def test_torus_convex_order_holds(torus, psi, tau):
    # for small tau the periodic images are negligible, the exact margin is ~0 and
    # cell-mass quadrature of a kinked test function is only accurate to O(h^2)
    sc = se.score_field(torus, 0.0, 3.0, 3.0 - tau)
    (_, val, model), = se.convex_order_check(sc, [psi])
    assert val <= model + torus.grid.h ** 2 * (1 + abs(model))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.99))
def test_euclidean_partial_sums_are_an_equality(line, a):
    sc = se.score_field(line, 0.0, 1.0, 0.5)
    (_, s, bound), = se.rearrangement_partial_sums(sc, [a])
    assert s == pytest.approx(bound, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.05, 3.0))
def test_torus_set_bound_holds_for_bands(torus, start, width):
    sc = se.score_field(torus, 0.0, 3.0, 2.6)
    b = se.set_bound_check(sc, IntervalSet.band(start, start + width))
    assert b.margin >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.1, 2.0))
def test_sphere_set_bound_holds_for_caps(sphere_score, c, level):
    b = se.set_bound_check(sphere_score, IntervalSet.below(c))
    assert b.margin >= -1e-12


@settings(max_examples=30)
@given(st.floats(0.0, 1.0), st.floats(1.0, 4.0), st.floats(0.1, 2.0))
def test_localized_bound_is_monotone_in_mass(a, p, tau):
    full = gm.model_abs_moment(p, tau)
    assert se.localized_bound(a, p, tau) <= se.localized_bound(min(a + 0.05, 1.0), p, tau) + 1e-15
    assert se.localized_bound(1.0, p, tau) == pytest.approx(full, rel=1e-10)
