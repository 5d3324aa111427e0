import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab.errors import DomainError, FlowSingularityError, GridMismatchError


@pytest.fixture(scope="module")
def warped():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.default_warped_profile(), 0.0, 0.3), 256)


@pytest.fixture(scope="module")
def sphere():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.45), 256)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 1.0), 256)


def test_round_sphere_shrinks_by_the_exact_formula(sphere):
    for t in (0.0, 0.2, 0.4):
        assert np.allclose(sphere.factor(t), 1.0 - 2.0 * t, rtol=1e-14)


def test_round_sphere_extinction_is_rejected():
    with pytest.raises(DomainError):
        fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.5)


def test_static_flows_are_flat(torus):
    m = torus.metric_at(0.7)
    assert np.all(m.factor == 1.0)
    assert m.total_volume == pytest.approx(2 * math.pi, rel=1e-14)


def test_warped_area_decreases_at_rate_8pi(warped):
    a0 = warped.metric_at(0.0).total_volume
    a1 = warped.metric_at(0.3).total_volume
    # total curvature is 4 pi, so d(area)/dt = -8 pi exactly
    assert (a0 - a1) / 0.3 == pytest.approx(8 * math.pi, rel=1e-5)


def test_ricci_residual_is_second_order():
    spec = fg.FlowSpec(fg.default_warped_profile(), 0.0, 0.2)
    r = [fg.evolve_ricci_flow(spec, n).ricci_residual(0.1) for n in (128, 256)]
    assert r[0] / r[1] > 3.0


def test_singularity_before_t_max_is_reported():
    # a thin neck pinches long before the area would vanish
    k = fg.WarpedS2.from_function(lambda x: 1.0 + 0.97 * np.cos(2 * x))
    spec = fg.FlowSpec(k, 0.0, 0.9 * k.extinction_time)
    with pytest.raises(FlowSingularityError):
        fg.evolve_ricci_flow(spec, 128, curvature_ceiling=50.0)


def test_bake_roundtrip(warped):
    back = fg.flow_from_json(warped.to_json())
    for t in (0.0, 0.17, 0.3):
        assert np.array_equal(back.factor(t), warped.factor(t))


def test_field_grid_mismatch(warped, sphere):
    m = warped.metric_at(0.1)
    with pytest.raises(GridMismatchError):
        fg.laplacian(np.ones(10), m)
    with pytest.raises(GridMismatchError):
        fg.laplacian(warped.field(np.ones(256), 0.2), m)


def test_sphere_laplacian_of_first_harmonic(sphere):
    # cos x is an eigenfunction with eigenvalue -2 on the unit sphere
    m = sphere.metric_at(0.0)
    x = sphere.grid.centers
    lap = fg.laplacian(np.cos(x), m).values
    assert np.max(np.abs(lap + 2 * np.cos(x))) < 1e-3


def test_distances(sphere, torus):
    assert sphere.distance(0.0, (0.0, 0.0), (math.pi, 0.0)) == pytest.approx(math.pi, rel=1e-12)
    assert sphere.distance(0.2, (0.0, 0.0), (math.pi, 0.0)) == pytest.approx(math.pi * math.sqrt(0.6), rel=1e-12)
    assert torus.distance(0.0, 0.1, 2 * math.pi - 0.1) == pytest.approx(0.2, abs=1e-12)


coeffs = st.lists(st.floats(-1, 1), min_size=3, max_size=6)


@settings(max_examples=25, deadline=None)
@given(coeffs, coeffs, st.sampled_from([0.0, 0.15, 0.3]))
def test_integration_by_parts_is_exact(warped, a, b, t):
    m = warped.metric_at(t)
    x = warped.grid.centers
    f = np.cos(np.multiply.outer(x, np.arange(len(a)))) @ np.array(a)
    g = np.cos(np.multiply.outer(x, np.arange(len(b)))) @ np.array(b)
    lhs = fg.volume_integral(fg.laplacian(f, m).values * g, m)
    assert lhs == pytest.approx(-fg.dirichlet_form(f, g, m), abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(coeffs, st.floats(0.0, 0.3))
def test_laplacian_annihilates_constants_and_is_symmetric(warped, a, t):
    m = warped.metric_at(t)
    x = warped.grid.centers
    f = np.cos(np.multiply.outer(x, np.arange(len(a)))) @ np.array(a)
    assert np.max(np.abs(fg.laplacian(np.ones_like(x), m).values)) < 1e-9
    assert fg.dirichlet_form(f, f, m) >= 0.0
    assert fg.volume_integral(fg.laplacian(f, m), m) == pytest.approx(0.0, abs=1e-9)


points = st.tuples(st.floats(0, math.pi), st.floats(0, 2 * math.pi))


@settings(max_examples=50, deadline=None)
@given(points, points, points, st.sampled_from([0.0, 0.2, 0.4]))
def test_sphere_distance_is_a_metric(sphere, x, y, z, t):
    d = lambda p, q: sphere.distance(t, p, q)
    assert d(x, y) >= 0.0
    assert d(x, y) == pytest.approx(d(y, x), abs=1e-14)
    assert d(x, y) <= d(x, z) + d(z, y) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_torus_distance_is_periodic(torus, x, y):
    assert torus.distance(0.0, x, y) == pytest.approx(torus.distance(0.0, x + 2 * math.pi, y), abs=1e-12)
    assert torus.distance(0.0, x, y) <= math.pi + 1e-12
