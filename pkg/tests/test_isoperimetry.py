import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab import gaussian_model as gm
from rflab import heat_kernel as hk
from rflab import isoperimetry as iso
from rflab.errors import DomainError, PreconditionError


@pytest.fixture(scope="module")
def euclid():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 512)


@pytest.fixture(scope="module")
def sphere():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.45), 256)


def half_line(a, tau):
    return iso.IntervalSet.below(math.sqrt(2 * tau) * gm.phi_quantile(a))


def test_half_line_measure_and_perimeter(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    assert iso.nu_measure(iso.IntervalSet.below(0.0), m) == pytest.approx(0.5, abs=1e-15)
    assert iso.nu_measure(iso.IntervalSet.below(1.0), m) == pytest.approx(0.8413447460685429, rel=1e-14)
    per = iso.weighted_perimeter(iso.IntervalSet.below(0.0), m, "exact")
    assert per == pytest.approx(0.3989422804014327, rel=1e-14)


@pytest.mark.parametrize("a", [0.1, 0.3, 0.5, 0.7, 0.9])
@pytest.mark.parametrize("tau", [0.25, 0.5, 1.0])
def test_half_line_is_sharp(euclid, a, tau):
    m = hk.conjugate_kernel(euclid, 0.0, 2.0, 2.0 - tau)
    E = half_line(a, tau)
    exact = iso.profile_check(E, m, "exact")
    assert exact.perimeter == pytest.approx(exact.bound, rel=1e-8)
    grid = iso.weighted_perimeter(E, m, "grid")
    assert grid == pytest.approx(exact.bound, rel=1e-4)


def test_interval_set_complement_and_wrapping(torus):
    E = iso.IntervalSet.band(3.0, 4.0).normalized(torus)
    assert len(E.intervals) == 2  # wraps across the seam at pi
    C = E.complement(torus)
    total = sum(b - a for a, b in E.intervals + C.intervals)
    assert total == pytest.approx(2 * math.pi, abs=1e-12)
    assert len(E.boundary(torus)) == 2


def test_two_set_requires_positive_distance(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    with pytest.raises(DomainError):
        iso.two_set_check(iso.IntervalSet.below(0.0), iso.IntervalSet.above(0.0), m)


def test_one_sided_precondition(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    A, B = iso.IntervalSet.below(-1.0), iso.IntervalSet.above(1.0)
    with pytest.raises(PreconditionError):
        iso.one_sided_check(A, B, 0.9, m)
    beta = iso.nu_measure(B, m)
    assert iso.one_sided_check(A, B, beta, m) == pytest.approx(0.0, abs=1e-12)


def test_product_chain_reference_point():
    tau = 0.5
    d = 2 * math.sqrt(2 * tau)
    mid, exp = iso.product_chain(d, tau)
    assert mid == pytest.approx(gm.phi_cdf(-1.0) ** 2, rel=1e-14)
    assert mid <= 0.0252 <= exp


def test_linear_observable_quantile_gap_is_exact(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    rep = iso.lipschitz_quantile_check(iso.LinearObservable((1.0,)), 1.0, [(0.1, 0.9)], m)
    _, _, gap, bound = rep.quantile_rows[0]
    assert gap == pytest.approx(bound, rel=1e-14)


def test_cheeger_half_space_attains_the_bound(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    cert = iso.cheeger_constant(m, [iso.IntervalSet.below(c) for c in (-1.0, 0.0, 0.5)], "exact")
    assert cert.ratio == pytest.approx(1 / math.sqrt(math.pi * 0.5), rel=1e-12)
    assert cert.argmin == 1


def test_lipschitz_precondition_on_grids(torus):
    m = hk.conjugate_kernel(torus, 0.0, 1.0, 0.5)
    with pytest.raises(PreconditionError):
        iso.lipschitz_quantile_check(2.0 * np.sin(torus.grid.centers), 1.0, [(0.2, 0.8)], m)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.0, 4.0), st.floats(0.1, 1.0))
def test_half_line_enlargement_is_exact(euclid, a, r, tau):
    m = hk.conjugate_kernel(euclid, 0.0, 2.0, 2.0 - tau)
    row = iso.enlargement_check(half_line(a, tau), m, [r * math.sqrt(tau)])[0]
    assert row.measure == pytest.approx(row.bound, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.05, 2.5), st.lists(st.floats(0.0, 2.0), min_size=1, max_size=5))
def test_torus_band_enlargements_satisfy_the_bound(torus, start, width, radii):
    m = hk.conjugate_kernel(torus, 0.0, 3.0, 2.5)
    for row in iso.enlargement_check(iso.IntervalSet.band(start, start + width), m, radii):
        assert row.margin >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 2.9), st.floats(0.05, 0.4))
def test_sphere_caps_satisfy_the_profile_bound(sphere, c, tau):
    m = hk.conjugate_kernel(sphere, 0.0, 0.45, 0.45 - tau)
    rec = iso.profile_check(iso.IntervalSet.below(c), m)
    assert rec.margin >= -1e-9


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.01, 3.0), st.floats(0.1, 1.0))
@example(1.0, 3.0, 0.125)  # nu(B) ~ 1e-15: upper-tail masses must avoid 1 - Phi cancellation
@example(-3.0, 0.125, 0.109375)  # nu(B) ~ 1 - 4e-10: its quantile comes from the complement
def test_opposing_half_lines(euclid, left, gap, tau):
    m = hk.conjugate_kernel(euclid, 0.0, 2.0, 2.0 - tau)
    rec = iso.two_set_check(iso.IntervalSet.below(left), iso.IntervalSet.above(left + gap), m)
    assert rec.distance == pytest.approx(gap, rel=1e-12)
    assert rec.quantile_margin >= -1e-8
    assert rec.chain_holds


@settings(max_examples=30)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0, 5)), max_size=6))
def test_normalization_is_idempotent(euclid, raw):
    E = iso.IntervalSet(tuple((a, a + w) for a, w in raw))
    n1 = E.normalized(euclid)
    assert n1.normalized(euclid) == n1
    assert all(b1 < a2 for (_, b1), (a2, _) in zip(n1.intervals, n1.intervals[1:]))
