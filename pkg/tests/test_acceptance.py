"""Acceptance criteria 1-9.

Each test runs the suite checks tagged with its criterion on a cold cache,
adds direct checks at the stated tolerances, enforces the runtime limit and
prints one ``PASS``/``FAIL`` line (collected in the terminal summary).
"""

import math
import time

import numpy as np
import pytest

from rflab import bobkov as bk
from rflab import cli
from rflab import flow_geometry as fg
from rflab import functional_inequalities as fi
from rflab import gaussian_model as gm
from rflab import heat_kernel as hk
from rflab import hn_localization as hn
from rflab import isoperimetry as iso
from rflab import pathspace as ps
from rflab import score_estimates as se
from rflab import suites
from rflab.config import load_config
from rflab.errors import PreconditionError

CFG = load_config(None, suites.suite_names())


def _cold():
    suites.flow.cache_clear()
    suites._ensemble.cache_clear()


def tagged_records(criterion):
    """Records of every registered check tagged with ``criterion``."""
    out = []
    for suite in suites.SUITES.values():
        for chk in suite.checks:
            if chk.criterion == criterion:
                o = suites.Out(CFG, suite.name, criterion)
                chk.fn(o)
                out += [(f"{suite.name}/{chk.name}/{r.name}", r) for r in o.result.records]
    return out


class Criterion:
    """Context manager: time the body, report one line, enforce the limit."""

    def __init__(self, log, number, summary, limit=None):
        self.log, self.number, self.summary, self.limit = log, number, summary, limit

    def __enter__(self):
        _cold()
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        slow = self.limit is not None and elapsed >= self.limit
        ok = exc_type is None and not slow
        detail = f"{elapsed:.1f}s" + (f" (limit {self.limit:.0f}s)" if self.limit else "")
        if exc_type is not None:
            detail += f"; {exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.summary} [{detail}]"
        self.log.append(line)
        print(line)
        if exc_type is None and slow:
            pytest.fail(f"criterion {self.number} took {elapsed:.1f}s, limit {self.limit}s")
        return False


def assert_records(records):
    assert records, "no tagged records"
    bad = [f"{name}: lhs={r.lhs:.6g} rhs={r.rhs:.6g} margin={r.margin:.3g} tol={r.tol:.3g}"
           for name, r in records if not r.passed]
    assert not bad, "\n".join(bad)


def test_criterion_1_euclidean_profile_sharpness(acceptance_log):
    with Criterion(acceptance_log, 1,
                   "half-line perimeter = I(a)/sqrt(2 tau), closed form 1e-8, grid 1e-4", 5.0):
        assert_records(tagged_records(1))
        flow = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)
        for tau in (0.25, 0.5, 1.0):
            m = hk.conjugate_kernel(flow, 0.0, 2.0, 2.0 - tau)
            for a in (0.1, 0.3, 0.5, 0.7, 0.9):
                E = iso.IntervalSet.below(math.sqrt(2 * tau) * gm.phi_quantile(a))
                target = gm.profile_I(a) / math.sqrt(2 * tau)
                assert abs(iso.weighted_perimeter(E, m, "exact") / target - 1) <= 1e-8
                assert abs(iso.weighted_perimeter(E, m, "grid") / target - 1) <= 1e-4


def test_criterion_2_bobkov_monotonicity(acceptance_log):
    with Criterion(acceptance_log, 2,
                   "monotone Bobkov series on shrinking sphere and warped S2, flat family constant", 120.0):
        records = tagged_records(2)
        assert_records(records)
        names = [n for n, _ in records]
        for label in ("round sphere", "warped S2"):
            assert any(label in n and "grid 512" in n and "tol_mono" in n for n in names)
            assert any(label in n and "shrink" in n for n in names)
        sc = bk.euclidean_monotone_scan(gm.phi_cdf, gm.phi_pdf, 0.0, 0.5, 32)
        assert np.ptp(sc.values) <= 1e-6


def test_criterion_3_exact_enlargement(acceptance_log):
    with Criterion(acceptance_log, 3,
                   "half-line enlargement equality 1e-8, torus bands nonnegative at 64 radii", 30.0):
        assert_records(tagged_records(3))
        flow = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)
        for tau in (0.25, 1.0):
            m = hk.conjugate_kernel(flow, 0.0, 2.0, 2.0 - tau)
            radii = np.linspace(0.0, 4 * math.sqrt(tau), 64)
            for row in iso.enlargement_check(iso.IntervalSet.below(0.2), m, radii):
                assert abs(row.measure - row.bound) <= 1e-8
        torus = fg.evolve_ricci_flow(fg.FlowSpec(fg.FlatTorus((2 * math.pi,)), 0.0, 3.0), 512)
        m = hk.conjugate_kernel(torus, 0.0, 3.0, 2.0)
        rows = iso.enlargement_check(iso.IntervalSet.band(-1.0, 0.4), m, np.linspace(0.0, 3.0, 64))
        assert len(rows) == 64 and min(r.margin for r in rows) >= 0.0 - 1e-12


def test_criterion_4_two_set_concentration(acceptance_log):
    with Criterion(acceptance_log, 4,
                   "opposing half-lines quantile equality 1e-8, product chain on 20 distances"):
        assert_records(tagged_records(4))
        tau = 0.5
        for d in np.linspace(0.1, 6.0, 20):
            mid, exp = iso.product_chain(d, tau)
            assert mid <= exp
        mid, _ = iso.product_chain(2 * math.sqrt(2 * tau), tau)
        assert abs(mid - gm.phi_cdf(-1.0) ** 2) <= 1e-15 and mid <= 0.0252


def test_criterion_5_hn_localization(acceptance_log):
    with Criterion(acceptance_log, 5,
                   "H_2 = 8.93480, three tail bounds on 32 radii, excess moment <= 1.8873 + 1e-6"):
        assert_records(tagged_records(5))
        assert abs(hn.hn_constant(2) - 8.93480) <= 5e-6
        plane = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 256)
        m = hk.conjugate_kernel(plane, (0.0, 0.0), 1.0, 0.5)
        c = hn.find_hn_center(m)
        rows = hn.hn_tail_check(c, m, np.linspace(0.0, 8.0, 32))
        assert len(rows) == 32 and all(r.holds for r in rows)
        row = hn.excess_moment_check(c, m, [1.0])[0]
        assert row.value <= 1.8873 + 1e-6


def test_criterion_6_score_suite(acceptance_log):
    with Criterion(acceptance_log, 6,
                   "flat score equalities within 1e-6, sphere and torus bounds nonnegative", 60.0):
        assert_records(tagged_records(6))
        plane = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 256)
        sc = se.score_field(plane, (0.0, 0.0), 1.0, 0.5, (1.0, 0.0))
        b = se.moment_check(sc, 2, full_gradient=True)
        assert abs(b.value - 1.0) <= 1e-6
        assert abs(b.bound - math.gamma(2.0) / math.gamma(1.0)) <= 1e-12


def test_criterion_7_functional_suite(acceptance_log):
    with Criterion(acceptance_log, 7,
                   "rearrangement, LSI, reverse LSI, Poincare, Faber-Krahn, reverse hypercontractivity"):
        assert_records(tagged_records(7))
        line = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(1), 0.0, 2.0), 512)
        m = hk.conjugate_kernel(line, 0.0, 1.0, 0.5)
        lin = (lambda y: y, lambda y: np.ones_like(y))
        c = fi.lp_poincare_check(lin, m, 2)
        assert abs(c.lhs - 1.0) <= 1e-8 and abs(c.rhs - 1.0) <= 1e-8
        for a in (0.5, 0.1, 0.01):
            E = iso.IntervalSet.below(math.sqrt(2 * 0.5) * gm.phi_quantile(a))
            lam, mass = fi.dirichlet_eigenvalue(E, m)
            assert lam >= fi.faber_krahn_bound(mass, 0.5)
        with pytest.raises(PreconditionError):
            fi.ExponentSchedule(0.25, 0.5, 1.0, 1.4)


def test_criterion_8_path_space(acceptance_log):
    with Criterion(acceptance_log, 8,
                   "M=1e5, dt=tau_1/100: one-time equality in band, k=2 beyond band, byte-exact seeds", 180.0):
        records = tagged_records(8)
        assert_records(records)
        assert CFG.paths == 100_000 and CFG.steps_per_slot == 100
        flow = fg.evolve_ricci_flow(fg.FlowSpec(fg.EuclideanExact(2), 0.0, 2.0), 64)
        a = ps.sample_paths(flow, (0.0, 0.0), 1.0, 0.01, 100_000, CFG.seed, record=[1.0])
        b = ps.sample_paths(flow, (0.0, 0.0), 1.0, 0.01, 100_000, CFG.seed, record=[1.0])
        assert a.digest() == b.digest()


@pytest.mark.slow
def test_criterion_9_full_property_suite(acceptance_log, tmp_path, capsys):
    with Criterion(acceptance_log, 9, "`rflab run --suite all` exits 0", 900.0):
        code = cli.main(["run", "--suite", "all", "--out", str(tmp_path)])
        out = capsys.readouterr().out
        with capsys.disabled():
            print(out)
        assert code == 0, out
        assert out.count("PASS ") == len(suites.suite_names())
