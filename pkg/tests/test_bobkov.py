import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from rflab import bobkov as bk
from rflab import flow_geometry as fg
from rflab import gaussian_model as gm
from rflab import heat_kernel as hk
from rflab.errors import DomainError, UnsupportedFlowError


@pytest.fixture(scope="module")
def euclid():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)


@pytest.fixture(scope="module")
def sphere():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.3), 128)


def cap(x):
    return gm.phi_cdf((1.0 - x) / 0.15)


def test_equality_family_series_is_constant():
    sc = bk.euclidean_monotone_scan(gm.phi_cdf, gm.phi_pdf, 0.0, 0.5, 16)
    assert np.ptp(sc.values) < 1e-6
    assert sc.values[0] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-6)


def test_strict_case_has_positive_margin(euclid):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    rec = bk.bobkov_inequality_check(m, (lambda y: 0.5 + 0.3 * np.tanh(y), lambda y: 0.3 / np.cosh(y) ** 2))
    assert rec.margin > 1e-4


def test_round_sphere_scan_is_monotone_and_matches_defect(sphere):
    sc = bk.monotone_scan(sphere, 0.0, 0.3, cap(sphere.grid.centers), 0.0, 16)
    assert sc.max_violation == 0.0
    assert sc.drop > 0.0
    # the drop equals the time integral of the defect up to discretisation error
    assert sc.drop == pytest.approx(sc.integrated_defect(), rel=0.05)
    assert sc.values[-1] >= sc.final_bound - 1e-3


def test_rigidity_probe_on_a_closed_flow(sphere):
    rep = bk.rigidity_probe(sphere, 0.0, 0.3, cap(sphere.grid.centers), 0.0, 16)
    assert rep.positive


def test_rigidity_probe_rejects_euclidean_space(euclid):
    with pytest.raises(UnsupportedFlowError):
        bk.rigidity_probe(euclid, 0.0, 1.0, gm.phi_cdf(euclid.grid.centers), 0.0, 4)


def test_coefficient_must_be_nonnegative(sphere):
    u = sphere.field(np.full(128, 0.5), 0.3)
    with pytest.raises(DomainError):
        _ = bk.BobkovState(u, t0=0.1).coefficient


def test_defect_rejects_values_outside_the_clamp(sphere):
    m = sphere.metric_at(0.0)
    state = bk.BobkovState(sphere.field(np.linspace(0, 1, 128), 0.0), 0.3)
    with pytest.raises(DomainError):
        bk.bobkov_defect(state, m)


@given(st.floats(0.0, 1.0), st.floats(1e-8, 0.25))
def test_clamp_maps_into_the_interval(v, eps):
    c = float(bk.clamp_values(v, eps))
    assert eps - 1e-15 <= c <= 1 - eps + 1e-15


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-1.0, 1.0), st.floats(0.1, 1.0))
@example(0.375, 0.0, 1.0)  # narrow data: the clamp kink defeats fixed-order Gauss-Hermite
def test_gaussian_cdf_of_affine_data_is_extremal(euclid, width, shift, tau):
    # f = Phi((y - shift) / width) turns the inequality into an equality for every tau
    m = hk.conjugate_kernel(euclid, 0.0, 2.0, 2.0 - tau)
    f = (lambda y: gm.phi_cdf((y - shift) / width), lambda y: gm.phi_pdf((y - shift) / width) / width)
    rec = bk.bobkov_inequality_check(m, f, sharp=True)
    assert rec.margin == pytest.approx(0.0, abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(0.05, 0.6), st.floats(-2.0, 2.0))
def test_lambda_family_holds(euclid, lam, amp, shift):
    m = hk.conjugate_kernel(euclid, 0.0, 1.0, 0.5)
    f = (lambda y: 0.5 + 0.4 * np.tanh(amp * (y - shift)),
         lambda y: 0.4 * amp / np.cosh(amp * (y - shift)) ** 2)
    rec = bk.lambda_family_check(m, f, lam)
    assert rec.holds(1e-9)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=2, max_size=4))
def test_torus_inequality_holds_for_trig_data(coef):
    fl = fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 1.0), 256)
    x = fl.grid.centers
    f = 0.5 + np.sin(np.multiply.outer(x, np.arange(1, len(coef) + 1))) @ np.array(coef) / len(coef)
    m = hk.conjugate_kernel(fl, 0.0, 1.0, 0.4)
    assert bk.bobkov_inequality_check(m, f).holds(1e-9)
