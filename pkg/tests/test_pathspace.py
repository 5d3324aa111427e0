import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab import gaussian_model as gm
from rflab import pathspace as ps
from rflab.errors import DomainError, PreconditionError, UnsupportedFlowError


@pytest.fixture(scope="module")
def plane():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 64)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 2.0), 64)


@pytest.fixture(scope="module")
def ensemble(plane):
    return ps.sample_paths(plane, (0.0, 0.0), 1.0, 0.005, 20_000, 7, record=[0.5, 1.0])


def cdf_of_first_coordinate(tau, width):
    f = lambda x: gm.phi_cdf(x[:, 0] / width)
    g = lambda x: np.stack([gm.phi_pdf(x[:, 0] / width) / width, np.zeros(len(x))], axis=1)
    return ps.one_time(tau, f, g)


def test_same_seed_gives_identical_bytes(plane):
    a = ps.sample_paths(plane, 0.0, 0.5, 0.01, 2500, 11, record=[0.25, 0.5])
    b = ps.sample_paths(plane, 0.0, 0.5, 0.01, 2500, 11, record=[0.25, 0.5])
    c = ps.sample_paths(plane, 0.0, 0.5, 0.01, 2500, 12, record=[0.25, 0.5])
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_chunks_do_not_depend_on_the_total(plane):
    # each full chunk is fixed by the seed and its index alone
    small = ps.sample_paths(plane, 0.0, 0.1, 0.05, ps.CHUNK, 3)
    big = ps.sample_paths(plane, 0.0, 0.1, 0.05, 2 * ps.CHUNK + 17, 3)
    assert np.array_equal(small.at(0.1), big.at(0.1)[:ps.CHUNK])


def test_marginal_variance_is_within_the_band(ensemble):
    for sigma in (0.5, 1.0):
        band = ps.marginal_variance_check(ensemble, sigma)
        assert band.expected == pytest.approx(4 * sigma)
        assert band.holds


def test_torus_marginal_matches_the_wrapped_gaussian(torus):
    ens = ps.sample_paths(torus, 0.0, 1.5, 0.01, 20_000, 5)
    assert ps.marginal_chi2_pvalue(ens, 1.5) > 1e-3
    pos = ens.at(1.5)
    assert np.all((pos >= torus.grid.lo) & (pos < torus.grid.lo + 2 * math.pi))


def test_gaussian_cdf_cylinder_function_is_extremal(ensemble):
    rep = ps.pathspace_bobkov_check(ensemble, cdf_of_first_coordinate(0.5, 1.0))
    assert rep.holds
    assert abs(rep.margin) <= rep.band


def test_h_gradient_of_a_two_time_sum():
    # u = x1 + x2 at times (a, b): |grad^H|^2 = a * 2^2 + (b - a) * 1^2
    F = ps.CylinderFunction((0.2, 0.5), lambda xs: xs[0][:, 0] + xs[1][:, 0],
                            lambda xs: [np.ones_like(xs[0]), np.ones_like(xs[1])])
    x = [np.zeros((3, 1)), np.zeros((3, 1))]
    assert np.allclose(ps.h_gradient_sq(F, x), 0.2 * 4 + 0.3)


def test_curved_flows_are_rejected():
    sphere = fg.evolve_ricci_flow(fg.FlowSpec(fg.RoundSphere(2, 1.0), 0.0, 0.3), 64)
    with pytest.raises(UnsupportedFlowError):
        ps.sample_paths(sphere, 0.0, 0.3, 0.01, 100, 0)


def test_step_precondition(plane):
    ens = ps.sample_paths(plane, 0.0, 0.5, 0.05, 100, 0, record=[0.5])
    with pytest.raises(PreconditionError):
        ps.pathspace_bobkov_check(ens, cdf_of_first_coordinate(0.5, 1.0))
    with pytest.raises(DomainError):
        ps.sample_paths(plane, 0.0, 0.5, 0.03, 100, 0, record=[0.5])
    with pytest.raises(DomainError):
        ps.CylinderFunction((0.4, 0.2), lambda xs: xs[0], lambda xs: xs)


def test_first_step_gradient_bins(ensemble):
    F = ps.CylinderFunction((0.5, 1.0), lambda xs: np.tanh(xs[0][:, 0] - xs[1][:, 0] ** 2 / 4),
                            lambda xs: _two_time_grads(xs))
    for row in ps.first_step_gradient_check(ensemble, F, bins=10):
        assert row.margin >= -row.band


def _two_time_grads(xs):
    s = 1 / np.cosh(xs[0][:, 0] - xs[1][:, 0] ** 2 / 4) ** 2
    z = np.zeros_like(s)
    return [np.stack([s, z], axis=1), np.stack([-s * xs[1][:, 0] / 2, z], axis=1)]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-1.0, 1.0))
def test_one_time_bobkov_holds_within_the_band(ensemble, width, shift):
    f = lambda x: 0.5 + 0.4 * np.tanh((x[:, 0] - shift) / width)
    g = lambda x: np.stack([0.4 / width / np.cosh((x[:, 0] - shift) / width) ** 2, np.zeros(len(x))], axis=1)
    assert ps.pathspace_bobkov_check(ensemble, ps.one_time(1.0, f, g)).holds


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(1, 40))
def test_digest_is_a_function_of_seed_and_size(seed, m):
    flow = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 1.0), 32)
    a = ps.sample_paths(flow, 0.0, 0.2, 0.02, m, seed)
    b = ps.sample_paths(flow, 0.0, 0.2, 0.02, m, seed)
    assert a.digest() == b.digest()
