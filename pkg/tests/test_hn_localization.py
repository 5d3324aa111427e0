import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rflab import flow_geometry as fg
from rflab import heat_kernel as hk
from rflab import hn_localization as hn
from rflab.errors import DivergenceError, DomainError


@pytest.fixture(scope="module")
def plane():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 256)


@pytest.fixture(scope="module")
def sphere():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.45), 256)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 512)


def test_hn_constant_values():
    assert hn.hn_constant(1) == 4.0
    assert hn.hn_constant(2) == pytest.approx(8.93480, abs=5e-6)
    with pytest.raises(DomainError):
        hn.hn_constant(0)


def test_euclidean_center_is_the_mean(plane):
    m = hk.conjugate_kernel(plane, (0.3, -0.2), 1.0, 0.5)
    c = hn.find_hn_center(m)
    assert c.point == (0.3, -0.2)
    assert c.second_moment == pytest.approx(2.0, rel=1e-14)  # 2 n tau
    assert c.holds


def test_euclidean_distance_quantile_is_the_chi_quantile(plane):
    m = hk.conjugate_kernel(plane, (0.0, 0.0), 1.0, 0.5)
    c = hn.find_hn_center(m)
    (b, q, bound), = hn.quantile_localization_check(c, m, [0.9])
    assert q == pytest.approx(stats.chi(df=2).ppf(0.9), rel=1e-12)
    assert q <= bound


def test_excess_exponential_moment_reference(plane):
    m = hk.conjugate_kernel(plane, (0.0, 0.0), 1.0, 0.5)
    c = hn.find_hn_center(m)
    row = hn.excess_moment_check(c, m, [1.0])[0]
    assert row.bound == pytest.approx(0.5 + math.exp(0.5) * stats.norm.cdf(1.0), rel=1e-14)
    assert row.value <= row.bound
    with pytest.raises(DivergenceError):
        hn.excess_moment_check(c, m, betas=[0.25])


def test_quantile_levels_are_validated(plane):
    m = hk.conjugate_kernel(plane, (0.0, 0.0), 1.0, 0.5)
    with pytest.raises(DomainError):
        hn.quantile_localization_check(hn.find_hn_center(m), m, [0.3])


def test_torus_center_sits_at_the_basepoint(torus):
    m = hk.conjugate_kernel(torus, 1.0, 3.0, 2.0)
    c = hn.find_hn_center(m)
    # the masses sample the density at cell centres, so symmetry holds to O(h^2)
    assert c.point[0] == pytest.approx(1.0, abs=torus.grid.h ** 2)
    assert c.second_moment <= hn.basepoint_moment(m) + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 1.0), st.lists(st.floats(0.0, 10.0), min_size=1, max_size=8))
def test_euclidean_tail_bounds_hold_and_are_ordered(plane, tau, radii):
    m = hk.conjugate_kernel(plane, (0.0, 0.0), 2.0, 2.0 - tau)
    for row in hn.hn_tail_check(hn.find_hn_center(m), m, radii):
        assert row.holds
        assert row.ordered


@settings(max_examples=20, deadline=None)
@given(st.floats(0.02, 0.44), st.floats(0.0, 3.0))
def test_sphere_tails_below_the_exponential_bound(sphere, tau, r):
    m = hk.conjugate_kernel(sphere, 0.0, 0.45, 0.45 - tau)
    c = hn.find_hn_center(m)
    row = hn.hn_tail_check(c, m, [r])[0]
    assert row.tail <= row.exponential + 1e-12


@settings(max_examples=40)
@given(st.integers(1, 6), st.floats(0.0, 20.0), st.floats(0.01, 5.0))
def test_tail_bounds_are_probabilities_decreasing_in_r(n, r, tau):
    h = hn.hn_constant(n)
    e0, e1 = hn.exp_tail_bound(r, h, tau), hn.exp_tail_bound(r + 0.5, h, tau)
    m0, m1 = hn.median_tail_bound(r, h, tau), hn.median_tail_bound(r + 0.5, h, tau)
    assert 0.0 <= e1 <= e0 <= 1.0
    assert 0.0 <= m1 <= m0 <= 1.0
