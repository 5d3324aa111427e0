import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rflab import flow_geometry as fg
from rflab import functional_inequalities as fi
from rflab import gaussian_model as gm
from rflab import heat_kernel as hk
from rflab.errors import DomainError, PreconditionError
from rflab.isoperimetry import IntervalSet

LINEAR = (lambda y: y, lambda y: np.ones_like(y))


@pytest.fixture(scope="module")
def line():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)


@pytest.fixture(scope="module")
def gauss(line):
    return hk.conjugate_kernel(line, 0.3, 1.0, 0.5)


@pytest.fixture(scope="module")
def torus():
    return fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 256)


@pytest.fixture(scope="module")
def tmeasure(torus):
    return hk.conjugate_kernel(torus, 0.0, 1.5, 0.0)


def test_linear_functions_saturate_the_p2_poincare_inequality(gauss):
    c = fi.lp_poincare_check(LINEAR, gauss, 2)
    assert c.lhs == pytest.approx(c.rhs, abs=1e-8)


def test_p1_poincare_is_strict_for_linear_functions(gauss):
    # E|Y - EY| = sqrt(2 tau) sqrt(2/pi) < sqrt(2 tau) sqrt(pi/2)
    c = fi.lp_poincare_check(LINEAR, gauss, 1)
    assert c.lhs == pytest.approx(2 * math.sqrt(0.5 / math.pi), rel=1e-10)
    assert c.margin > 0.1


def test_exponentials_saturate_lsi(gauss):
    lam = 0.7
    c = fi.lsi_check((lambda y: np.exp(lam * y / 2), lambda y: lam / 2 * np.exp(lam * y / 2)), gauss)
    assert c.lhs == pytest.approx(c.rhs, rel=1e-8)


def test_reverse_lsi_equality_for_exponentials(line):
    lam = 0.7
    c = fi.reverse_lsi_check((lambda y: np.exp(lam * y), lambda y: lam * np.exp(lam * y)), line, 0.3, 1.0, 0.5)
    assert c.lhs == pytest.approx(c.rhs, rel=1e-6)


def test_entropy_of_constants_vanishes(tmeasure, torus):
    assert fi.entropy(np.full(torus.grid.size, 3.0), tmeasure) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("a", [0.5, 0.1, 0.01])
def test_faber_krahn_half_lines(gauss, a):
    E = IntervalSet.below(0.3 + float(gm.phi_quantile(a)))
    lam, mass = fi.dirichlet_eigenvalue(E, gauss)
    lam2, _ = fi.dirichlet_eigenvalue(E, gauss, method="eigh")
    assert mass == pytest.approx(a, rel=1e-12)
    assert lam >= fi.faber_krahn_bound(mass, 0.5)
    assert lam == pytest.approx(lam2, rel=1e-8)


def test_half_space_eigenvalue_at_half_mass(gauss):
    # the Dirichlet problem on a half-line of mass 1/2 has the odd Hermite mode: lambda = 1/(2 tau)
    lam, _ = fi.dirichlet_eigenvalue(IntervalSet.below(0.3), gauss)
    assert lam == pytest.approx(1.0, rel=1e-3)


def test_reverse_hypercontractivity_threshold(line):
    sch = fi.ExponentSchedule(0.25, 0.5, 1.0, 1.5)
    assert sch.threshold == pytest.approx(1.5, abs=1e-15)
    rep = fi.reverse_hypercontractivity_check(line, 0.0, 2.0, lambda y: np.exp(0.8 * y), sch)
    early, late = fi.flat_model_norms(0.8, sch)
    assert rep.early == pytest.approx(early, rel=1e-6)
    assert rep.late == pytest.approx(late, rel=1e-6)
    assert early == pytest.approx(late, rel=1e-12)
    with pytest.raises(PreconditionError):
        fi.ExponentSchedule(0.25, 0.5, 1.0, 1.4)
    with pytest.raises(DomainError):
        fi.ExponentSchedule(0.6, 0.5, 1.0, 2.0)


def test_rearrangement_preserves_the_distribution(gauss, tmeasure, torus):
    neg = (lambda y: -y, lambda y: -np.ones_like(y))
    R = fi.gaussian_rearrange(neg, gauss)
    assert fi.equimeasurability_error(neg, gauss, R, np.linspace(-2, 2, 41)) < 1e-6
    h = np.sin(torus.grid.centers)
    Rt = fi.gaussian_rearrange(h, tmeasure)
    assert fi.equimeasurability_error(h, tmeasure, Rt, np.linspace(-0.9, 0.9, 41)) < 1e-6


trig = st.lists(st.floats(-1, 1), min_size=1, max_size=4)


def _trig(x, coef):
    k = np.arange(1, len(coef) + 1)
    return np.cos(np.multiply.outer(x, k)) @ np.array(coef) / len(coef)


@settings(max_examples=30, deadline=None)
@given(trig, st.floats(0.05, 0.95))
def test_torus_lsi(torus, tmeasure, coef, floor):
    u = floor + np.abs(_trig(torus.grid.centers, coef))
    c = fi.lsi_check(u, tmeasure)
    assert c.lhs <= c.rhs + 1e-12


@settings(max_examples=30, deadline=None)
@given(trig, st.sampled_from([1.0, 2.0, 3.0]))
def test_torus_poincare(torus, tmeasure, coef, p):
    h = _trig(torus.grid.centers, coef)
    if np.ptp(h) < 1e-6:
        return
    assert fi.lp_poincare_check(h, tmeasure, p).holds


@settings(max_examples=20, deadline=None)
@given(trig)
def test_torus_polya_szego(torus, tmeasure, coef):
    h = _trig(torus.grid.centers, coef)
    assert fi.polya_szego_check(h, tmeasure, 2).margin >= -1e-9


@settings(max_examples=10, deadline=None)
@given(trig, st.sampled_from([0.3, 0.7]))
def test_lp_norms_below_one_are_nondecreasing(torus, coef, p):
    u = np.exp(_trig(torus.grid.centers, coef))
    norms = fi.fixed_exponent_norms(torus, 0.0, 1.0, u, 0.0, 0.9, p, steps=10)
    assert np.all(np.diff(norms) >= -1e-9)


@settings(max_examples=30)
@given(st.floats(1e-4, 0.5), st.floats(0.1, 2.0))
def test_faber_krahn_bound_decreases_in_mass(a, tau):
    assert fi.faber_krahn_bound(a, tau) >= fi.faber_krahn_bound(min(2 * a, 0.5), tau)
