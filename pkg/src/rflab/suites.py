"""Registry of check suites run by the command-line front end.

Every check is a function that receives an :class:`Out` collector, reads
the configuration from it and appends records.  Checks are grouped into
suites, run in registration order, and timed individually.
"""

from __future__ import annotations

import math
import time
import traceback
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from . import bobkov as bk
from . import functional_inequalities as fi
from . import gaussian_model as gm
from . import heat_kernel as hk
from . import hn_localization as hn
from . import isoperimetry as iso
from . import pathspace as ps
from . import score_estimates as se
from .config import SuiteConfig
from .errors import DivergenceError, PreconditionError, UnsupportedFlowError
from .flow_geometry import (EuclideanExact, FlatTorus, FlowSpec, RoundSphere, default_warped_profile,
                            dirichlet_form, evolve_ricci_flow, flow_from_json, gradient_norm, hessian_norms,
                            laplacian, volume_integral)
from .report import CheckResult, Record, SuiteReport, close, flag, geq, leq

# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Check:
    name: str
    fn: Callable[["Out"], None]
    criterion: int | None = None


@dataclass
class Suite:
    name: str
    topic: str
    keywords: tuple[str, ...]
    checks: list[Check] = field(default_factory=list)


SUITES: dict[str, Suite] = {}


def _suite(name: str, topic: str, *keywords: str):
    SUITES[name] = Suite(name, topic, (name,) + keywords)


_suite("gaussian_model", "Gaussian profile, quantile and model moments", "profile", "quantile", "moments")
_suite("geometry", "Model flows: Ricci residual, integration by parts, distances", "flow", "ricci", "metric")
_suite("heat_kernel", "Conjugate heat kernel: mass, adjoint identity, gradient contraction",
       "kernel", "conjugate", "semigroup")
_suite("bobkov", "Bobkov functional monotonicity and sharpness", "monotonicity", "sharpness", "defect")
_suite("concentration", "Isoperimetric profile, enlargement and two-set concentration",
       "isoperimetry", "perimeter", "enlargement", "two-set", "cheeger")
_suite("hn", "Localization around a second-moment center and tail bounds", "localization", "center", "tails")
_suite("score", "Score function: set bounds, rearrangement and convex order", "convex-order", "moments")
_suite("functional", "Functional inequalities: rearrangement, log-Sobolev, Poincare, Faber-Krahn, "
       "reverse hypercontractivity", "log-sobolev", "poincare", "faber-krahn", "hypercontractivity",
       "rearrangement")
_suite("pathspace", "Path-space Bobkov inequality and perimeter on static flat geometries",
       "monte-carlo", "paths", "brownian")


def check(suite: str, criterion: int | None = None):
    def deco(fn):
        SUITES[suite].checks.append(Check(fn.__name__.lstrip("_"), fn, criterion))
        return fn
    return deco


def suite_names() -> list[str]:
    return list(SUITES)


def list_suites(filter_text: str | None = None) -> list[Suite]:
    """Suites in registration order, optionally filtered by a case-insensitive keyword."""
    if not filter_text:
        return list(SUITES.values())
    key = filter_text.lower()
    return [s for s in SUITES.values()
            if any(key in k for k in s.keywords) or key in s.topic.lower()]


def resolve(names: list[str]) -> list[str]:
    if "all" in names:
        return suite_names()
    seen = []
    for n in names:
        if n not in seen:
            seen.append(n)
    return seen


class Out:
    """Collects records for one check, applying the configured tolerance scale."""

    def __init__(self, cfg: SuiteConfig, suite: str, criterion: int | None):
        self.cfg, self.suite, self.criterion = cfg, suite, criterion
        self.result = CheckResult()

    def _tol(self, tol):
        return self.cfg.tol(self.suite, tol)

    def leq(self, name, lhs, rhs, tol=0.0, constants=""):
        self.result.records.append(leq(name, lhs, rhs, self._tol(tol), constants, self.criterion))

    def geq(self, name, lhs, rhs, tol=0.0, constants=""):
        self.result.records.append(geq(name, lhs, rhs, self._tol(tol), constants, self.criterion))

    def close(self, name, lhs, rhs, tol, constants="", relative=False):
        self.result.records.append(close(name, lhs, rhs, self._tol(tol), constants, self.criterion, relative))

    def flag(self, name, ok, detail=0.0, constants=""):
        self.result.records.append(flag(name, ok, detail, constants, self.criterion))

    def series(self, name, x, y):
        self.result.series[name] = ([float(v) for v in x], [float(v) for v in y])

    def note(self, **kw):
        self.result.notes.append({k: (float(v) if isinstance(v, (np.floating, np.integer)) else v)
                                  for k, v in kw.items()})


def run_suite(name: str, cfg: SuiteConfig) -> SuiteReport:
    """Run every check of a suite; an exception becomes a failing record."""
    suite = SUITES[name]
    records: list[Record] = []
    series: dict = {}
    notes: list = []
    runtimes: dict[str, float] = {}
    for chk in suite.checks:
        out = Out(cfg, name, chk.criterion)
        start = time.perf_counter()
        try:
            chk.fn(out)
        except Exception as exc:  # a crash is reported as a violation, not swallowed
            out.flag(f"{chk.name}: raised {type(exc).__name__}", False)
            out.note(check=chk.name, error=str(exc), trace=traceback.format_exc(limit=3))
        runtimes[chk.name] = time.perf_counter() - start
        records += [Record(f"{chk.name}/{r.name}", r.lhs, r.rhs, r.margin, r.tol, r.constants, r.criterion)
                    for r in out.result.records]
        series.update({f"{chk.name}/{k}": v for k, v in out.result.series.items()})
        notes += [dict(check=chk.name, **n) if "check" not in n else n for n in out.result.notes]
    return SuiteReport(name, records, series, notes, runtimes)


# ---------------------------------------------------------------------------
# shared fixtures


@lru_cache(maxsize=32)
def flow(spec: FlowSpec, grid: int):
    return evolve_ricci_flow(spec, grid)


def euclid(n: int = 1, grid: int = 512, t_max: float = 2.0):
    return flow(FlowSpec(EuclideanExact(n), 0.0, t_max), grid)


def torus(grid: int = 512, t_max: float = 3.0):
    return flow(FlowSpec(FlatTorus((2.0 * math.pi,)), 0.0, t_max), grid)


def sphere(grid: int = 256, t_max: float = 0.45):
    return flow(FlowSpec(RoundSphere(2, 1.0), 0.0, t_max), grid)


def warped(grid: int = 512, t_max: float = 0.3):
    return flow(FlowSpec(default_warped_profile(), 0.0, t_max), grid)


def rng(cfg: SuiteConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def cos_series(x, coef) -> np.ndarray:
    return np.cos(np.multiply.outer(np.asarray(x), np.arange(len(coef)))) @ np.asarray(coef)


def cap(x, edge: float = 1.0, width: float = 0.15):
    return gm.phi_cdf((edge - np.asarray(x)) / width)


SQ2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# gaussian_model


@check("gaussian_model")
def _profile_shape(o: Out):
    a = (np.arange(10_000) + 0.5) / 10_000
    i = gm.profile_I(a)
    o.leq("symmetry max|I(a)-I(1-a)|", np.max(np.abs(i - gm.profile_I(1.0 - a))), 0.0, 1e-14)
    o.geq("positivity min I", np.min(i), 0.0, 0.0)
    mid = gm.profile_I(0.5 * (a[:-2] + a[2:])) - 0.5 * (i[:-2] + i[2:])
    o.geq("concavity min midpoint gap", np.min(mid), 0.0, 1e-15)
    o.close("I(1/2) = 1/sqrt(2 pi)", gm.profile_I(0.5), 1.0 / SQ2PI, 1e-16)


@check("gaussian_model")
def _derivative_identities(o: Out):
    a = np.linspace(0.02, 0.98, 97)
    h = 1e-5
    d1 = (gm.profile_I(a + h) - gm.profile_I(a - h)) / (2 * h)
    o.close("I' = -quantile (central difference)", np.max(np.abs(d1 + gm.phi_quantile(a))), 0.0, 1e-6)
    second = lambda h: (gm.profile_I(a + h) - 2 * gm.profile_I(a) + gm.profile_I(a - h)) / h ** 2
    # one Richardson step removes the O(h^2) term of the central difference
    d2 = (4 * second(2e-4) - second(4e-4)) / 3
    o.close("I I'' = -1 (central difference)", np.max(np.abs(gm.profile_I(a) * d2 + 1.0)), 0.0, 1e-6)
    o.close("profile_I_prime", np.max(np.abs(gm.profile_I_prime(a) + gm.phi_quantile(a))), 0.0, 1e-15)


@check("gaussian_model")
def _small_mass_asymptotics(o: Out):
    a = 1e-8
    ratio = float(gm.profile_I(a)) / (a * math.sqrt(2 * math.log(1 / a)))
    o.close("I(a)/(a sqrt(2 log 1/a)) at a=1e-8", ratio, 1.0, 0.1)
    o.note(ratio=ratio)


@check("gaussian_model")
def _tail_bound(o: Out):
    u = np.linspace(0.0, 10.0, 1001)
    gap = np.exp(-u * u / 2) - gm.phi_cdf(-u)
    o.geq("min exp(-u^2/2) - Phi(-u) on [0,10]", np.min(gap), 0.0)


@check("gaussian_model")
def _quantile_routes(o: Out):
    a = np.concatenate([np.logspace(-300, -2, 200), np.linspace(0.01, 0.99, 197), 1 - np.logspace(-12, -2, 50)])
    q = gm.phi_quantile(a)
    o.leq("quantile vs scipy ndtri (relative)", np.max(np.abs(q - special.ndtri(a)) / np.maximum(1, np.abs(q))),
          0.0, 1e-13)
    aa = np.linspace(1e-12, 1 - 1e-12, 10_001)
    o.leq("Phi(quantile(a)) - a", np.max(np.abs(gm.phi_cdf(gm.phi_quantile(aa)) - aa)), 0.0, 1e-15)


@check("gaussian_model")
def _score_rearrangement_integral(o: Out):
    worst = 0.0
    for a in (1e-4, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.999):
        val = integrate.quad(lambda r: float(gm.phi_quantile(1 - r)), 0, a, epsabs=1e-14, epsrel=1e-12,
                             limit=200)[0]
        worst = max(worst, abs(val - float(gm.profile_I(a))))
    o.close("int_0^a quantile(1-r) dr = I(a)", worst, 0.0, 1e-8)


@check("gaussian_model")
def _halfspace_reference(o: Out):
    worst = 0.0
    for tau in (0.25, 0.5, 1.0):
        sd = math.sqrt(2 * tau)
        for a in (0.1, 0.3, 0.5, 0.7, 0.9):
            hs = gm.halfspace_reference(a, gm.GaussianScale(tau, 2))
            # independent route: scipy density at the scipy quantile
            per = stats.norm.pdf(stats.norm.ppf(a)) / sd
            worst = max(worst, abs(hs.perimeter / per - 1))
    o.close("half-space perimeter vs scipy route (relative)", worst, 0.0, 1e-12)
    o.flag("endpoint masses are degenerate", gm.halfspace_reference(0.0, gm.GaussianScale(1.0)).degenerate
           and gm.halfspace_reference(1.0, gm.GaussianScale(1.0)).perimeter == 0.0)


@check("gaussian_model")
def _model_moments(o: Out):
    tau = 0.5
    sd = 1 / math.sqrt(2 * tau)
    for p in (1.0, 2.0, 3.5):
        quad = 2 * integrate.quad(lambda z: z ** p * stats.norm.pdf(z, scale=sd), 0, np.inf)[0]
        o.close(f"E|Z|^{p:g} vs quadrature", gm.model_abs_moment(p, tau), quad, 1e-10, relative=True)
    for n, p in ((2, 2.0), (3, 1.0)):
        quad = integrate.quad(lambda r: r ** p * stats.chi.pdf(r, n, scale=sd), 0, np.inf)[0]
        o.close(f"E|W|^{p:g} n={n} vs quadrature", gm.model_vector_moment(p, n, tau), quad, 1e-10, relative=True)
    g = math.sqrt(2 * tau)
    quad = 0.5 + integrate.quad(lambda y: math.exp(y) * stats.norm.pdf(y, scale=g), 0, 40 * g)[0]
    o.close("E exp(G_+) vs quadrature", gm.halfgaussian_exp_moment(1.0, tau), quad, 1e-10)
    quad = 0.5 + integrate.quad(lambda y: math.exp(0.2 * y * y / tau) * stats.norm.pdf(y, scale=g), 0, 40 * g)[0]
    o.close("E exp(beta G_+^2/tau) vs quadrature", gm.halfgaussian_square_moment(0.2, tau), quad, 1e-9)
    try:
        gm.halfgaussian_square_moment(0.25, tau)
        o.flag("divergence at beta = 1/4 is reported", False)
    except DivergenceError:
        o.flag("divergence at beta = 1/4 is reported", True)


# ---------------------------------------------------------------------------
# geometry


@check("geometry")
def _ricci_residual_convergence(o: Out):
    sizes = (128, 256, 512)
    res = []
    for n in sizes:
        fl = warped(n)
        res.append(max(fl.ricci_residual(t) for t in (0.0, 0.15, 0.3)))
    for (n0, r0), (n1, r1) in zip(zip(sizes, res), zip(sizes[1:], res[1:])):
        o.geq(f"residual shrink {n0}->{n1}", r0 / r1, 3.0, 0.0, "second order: ratio 4")
    o.series("residual", [math.log2(n) for n in sizes], [math.log10(r) for r in res])
    o.note(residuals=res)


@check("geometry")
def _integration_by_parts(o: Out):
    r = rng(o.cfg, 1)
    for label, fl, t in (("warped", warped(o.cfg.grid), 0.15), ("round sphere", sphere(o.cfg.grid), 0.2),
                         ("torus", torus(o.cfg.grid), 0.0)):
        m = fl.metric_at(t)
        x = fl.grid.centers
        worst = 0.0
        for _ in range(5):
            f = cos_series(x, r.normal(size=6) / np.arange(1, 7))
            h = cos_series(x, r.normal(size=6) / np.arange(1, 7))
            if fl.grid.kind == "periodic":
                f = f + np.sin(2 * x) * r.normal()
            lhs = volume_integral(laplacian(f, m).values * h, m)
            worst = max(worst, abs(lhs + dirichlet_form(f, h, m)) / max(1.0, abs(lhs)))
        o.close(f"{label}: int (Lap f) h + int <grad f, grad h>", worst, 0.0, 1e-9)


@check("geometry")
def _distance_axioms(o: Out):
    r = rng(o.cfg, 2)
    cases = [("euclidean R^2", euclid(2, 64), lambda: r.normal(size=2), 1.0),
             ("torus", torus(64), lambda: r.uniform(0, 2 * math.pi), 0.0),
             ("round S^2", sphere(64), lambda: (r.uniform(0, math.pi), r.uniform(0, 2 * math.pi)), 0.2)]
    for label, fl, draw, t in cases:
        sym = tri = 0.0
        for _ in range(200):
            x, y, z = draw(), draw(), draw()
            dxy, dyx = fl.distance(t, x, y), fl.distance(t, y, x)
            sym = max(sym, abs(dxy - dyx))
            tri = max(tri, dxy - fl.distance(t, x, z) - fl.distance(t, z, y))
        o.leq(f"{label}: symmetry", sym, 0.0, 1e-14)
        o.leq(f"{label}: triangle excess", tri, 0.0, 1e-12)


@check("geometry")
def _bake_roundtrip(o: Out):
    fl = warped(128)
    back = flow_from_json(fl.to_json())
    diff = max(np.max(np.abs(back.factor(t) - fl.factor(t))) for t in (0.0, 0.1, 0.3))
    o.close("baked flow reproduces the conformal factor", diff, 0.0, 0.0)


# ---------------------------------------------------------------------------
# heat_kernel


@check("heat_kernel")
def _mass_conservation(o: Out):
    for label, fl, t0 in (("warped", warped(o.cfg.grid), 0.3), ("round sphere", sphere(o.cfg.grid), 0.3),
                          ("torus", torus(o.cfg.grid), 1.5)):
        rec = np.linspace(0.0, t0, 17)
        ms = hk.adjoint_masses(fl, hk.evaluation_weights(fl, 0.0), 0.0, t0, list(rec))
        err = max(abs(float(m.sum()) - 1.0) for m in ms)
        o.leq(f"{label}: max |mass - 1|", err, 0.0, 1e-8)


@check("heat_kernel")
def _adjoint_identity(o: Out):
    r = rng(o.cfg, 3)
    t0 = 0.3
    coefs = [r.normal(size=5) / np.arange(1, 6) ** 2 for _ in range(3)]
    levels = ((o.cfg.grid // 2, o.cfg.steps), (o.cfg.grid, 2 * o.cfg.steps))
    worst = []
    for n, steps in levels:
        fl = warped(n)
        rec = np.linspace(0.0, t0, steps + 1)
        dt = rec[1] - rec[0]
        ms = hk.adjoint_masses(fl, hk.evaluation_weights(fl, 0.0), 0.0, t0, list(rec))
        err = 0.0
        for c in coefs:
            h = cos_series(fl.grid.centers, c)
            ints = np.array([float(m @ h) for m in ms])
            deriv = (ints[2:] - ints[:-2]) / (2 * dt)
            # static h: (d_t - Lap) h = -Lap h
            rhs = np.array([-float(ms[k] @ laplacian(h, fl.metric_at(rec[k])).values) for k in range(1, steps)])
            err = max(err, float(np.max(np.abs(deriv - rhs))))
        worst.append(err)
    o.geq(f"residual shrink ({levels[0][0]}, {levels[0][1]} steps) -> ({levels[1][0]}, {levels[1][1]} steps)",
          worst[0] / worst[1], 3.0, 0.0, "O(h^2 + dt^2): ratio 4")
    o.note(residuals=worst)


@check("heat_kernel")
def _gradient_contraction(o: Out):
    for label, fl, t in (("warped", warped(o.cfg.grid), 0.3), ("round sphere", sphere(o.cfg.grid), 0.3)):
        x = fl.grid.centers
        f = np.cos(x) + 0.4 * np.cos(2 * x) ** 2
        g = gradient_norm(f, fl.metric_at(0.0)).values
        u, pg = hk.propagate(fl, np.column_stack([f, g]), 0.0, t)[0].T
        lhs = gradient_norm(u, fl.metric_at(t)).values
        excess = float(np.max(lhs - pg))
        o.leq(f"{label}: max (|grad P f| - P|grad f|)", excess, 0.0, 10 * fl.grid.h ** 2)


@check("heat_kernel")
def _kernel_routes(o: Out):
    sp = sphere(256)
    a = hk.conjugate_kernel(sp, 0.0, 0.3, 0.0)
    b = hk.conjugate_kernel(sp, 0.0, 0.3, 0.0, method="discrete-adjoint")
    f = np.cos(sp.grid.centers) ** 2
    o.close("sphere: spectral vs discrete-adjoint expectation", a.expect(f), b.expect(f), 1e-4)
    tf = torus(o.cfg.grid)
    mt = hk.conjugate_kernel(tf, 0.3, 1.5, 0.5)
    md = hk.conjugate_kernel(tf, 0.3, 1.5, 0.5, method="discrete-adjoint")
    x = tf.grid.centers
    o.close("torus: wrapped vs discrete-adjoint expectation", mt.expect(np.cos(x)), md.expect(np.cos(x)), 1e-4,
            "O(h^2)")
    o.close("torus: E cos(y - x0) = exp(-tau)", mt.expect(np.cos(x - 0.3)), math.exp(-1.0), 1e-10)
    ef = euclid(1, o.cfg.grid)
    me = hk.conjugate_kernel(ef, 0.2, 1.0, 0.5)
    o.close("euclidean: variance 2 tau", me.expect(lambda y: (y[..., 0] - 0.2) ** 2), 1.0, 1e-12)


# ---------------------------------------------------------------------------
# bobkov


def _monotone_study(o: Out, label: str, make, series: bool):
    sizes = (o.cfg.grid // 2, o.cfg.grid)
    scans = []
    for n in sizes:
        fl = make(n)
        scans.append(bk.monotone_scan(fl, 0.0, 0.3, cap(fl.grid.centers), 0.0, o.cfg.steps))
    scales = [make(n).grid.h ** 2 + sc.dt for n, sc in zip(sizes, scans)]
    const = 2.0 * max(sc.max_residual / s for sc, s in zip(scans, scales))
    for n, sc, s in zip(sizes, scans, scales):
        tol_mono = const * s
        o.leq(f"{label} grid {n}: max increase <= tol_mono", sc.max_violation, tol_mono, 0.0,
              f"tol_mono = {const:.4g} (h^2 + dt)")
        o.geq(f"{label} grid {n}: end value >= I(u(x0,t0))", sc.values[-1], sc.final_bound, tol_mono)
    res_shrink = scans[0].max_residual / scans[1].max_residual
    o.geq(f"{label}: defect-identity error shrink {sizes[0]}->{sizes[1]}", res_shrink, 3.0)
    v0, v1 = scans[0].max_violation, scans[1].max_violation
    o.flag(f"{label}: violations shrink >= 3x or vanish", v1 == 0.0 or v0 / v1 >= 3.0, v1)
    fine = scans[1]
    drop, defect = fine.drop, float(np.sum(fine.residuals - np.diff(fine.values[::2])))
    o.close(f"{label}: scan drop = integrated defect", drop, defect, fine.max_residual * fine.residuals.size)
    if series:
        o.series(f"{label} series", fine.times, fine.values)
    o.note(label=label, constant=const, residuals=[sc.max_residual for sc in scans],
           violations=[sc.max_violation for sc in scans])


@check("bobkov", criterion=2)
def _round_sphere_monotone(o: Out):
    _monotone_study(o, "round sphere", lambda n: flow(FlowSpec(RoundSphere(2, 1.0), 0.0, 0.3), n), True)


@check("bobkov", criterion=2)
def _warped_monotone(o: Out):
    _monotone_study(o, "warped S2", lambda n: warped(n), True)


@check("bobkov", criterion=2)
def _euclidean_equality_family(o: Out):
    for c in (0.0, 0.7):
        sc = bk.euclidean_monotone_scan(lambda y: gm.phi_cdf(y - c), lambda y: gm.phi_pdf(y - c), 0.0, 0.5, 32)
        o.leq(f"series spread (shift {c})", float(np.ptp(sc.values)), 0.0, 1e-6)
        o.close(f"series end = I(u(x0,t0)) (shift {c})", sc.values[-1], sc.final_bound, 1e-6)
    o.series("equality family", sc.times, sc.values)


@check("bobkov")
def _euclidean_sharpness(o: Out):
    m = hk.conjugate_kernel(euclid(1, o.cfg.grid), 0.0, 1.0, 0.5)
    rec = bk.bobkov_inequality_check(m, (lambda y: gm.phi_cdf(y), lambda y: gm.phi_pdf(y)), sharp=True)
    o.close("half-space profile: I(E f) vs E sqrt(I(f)^2 + 2 tau |f'|^2)", rec.lhs, rec.rhs, 1e-6)
    rec = bk.lambda_family_check(m, (lambda y: gm.phi_cdf(y / math.sqrt(2)),
                                     lambda y: gm.phi_pdf(y / math.sqrt(2)) / math.sqrt(2)), 1.0)
    o.geq("lambda family (lambda = 1)", rec.rhs, rec.lhs, 1e-9)
    rec = bk.bobkov_inequality_check(m, (lambda y: 0.5 + 0.3 * np.tanh(y), lambda y: 0.3 / np.cosh(y) ** 2))
    o.geq("strict case tanh", rec.rhs, rec.lhs, 1e-12)


@check("bobkov")
def _closed_geometry_inequality(o: Out):
    tf = torus(o.cfg.grid)
    x = tf.grid.centers
    m = hk.conjugate_kernel(tf, 0.0, 0.3, 0.0)
    rec = bk.bobkov_inequality_check(m, 0.5 * (1 + 0.9 * np.sin(x)))
    o.geq("torus", rec.rhs, rec.lhs, 1e-9)
    fl = warped(o.cfg.grid)
    m = hk.conjugate_kernel(fl, 0.0, 0.3, 0.0)
    rec = bk.bobkov_inequality_check(m, cap(fl.grid.centers))
    o.geq("warped S2 cap", rec.rhs, rec.lhs, 1e-6)


def _heat_solution(t, y):
    """An explicit Euclidean heat solution with values in (0, 1) and its derivatives."""
    a, b = 0.2 * np.exp(-t), 0.1 * np.exp(-4 * t)
    u = 0.5 + a * np.sin(y) + b * np.cos(2 * y)
    return u


@check("bobkov")
def _box_identities(o: Out):
    r = rng(o.cfg, 4)
    t0 = 1.0
    pts = np.column_stack([r.uniform(0.05, 0.8, 40), r.uniform(-3, 3, 40)])
    h = 1e-3
    e1 = e2 = 0.0
    for t, y in pts:
        def box(fn):
            dt = (fn(t + h, y) - fn(t - h, y)) / (2 * h)
            lap = (fn(t, y + h) - 2 * fn(t, y) + fn(t, y - h)) / h ** 2
            return dt - lap
        u = lambda t_, y_: _heat_solution(t_, y_)
        du = (u(t, y + h) - u(t, y - h)) / (2 * h)
        d2u = (u(t, y + h) - 2 * u(t, y) + u(t, y - h)) / h ** 2
        ip = float(gm.profile_I_prime(u(t, y)))
        i2 = lambda t_, y_: float(gm.profile_I(u(t_, y_))) ** 2
        e1 = max(e1, abs(box(i2) - 2 * (1 - ip ** 2) * du ** 2))

        def q2(t_, y_):
            g = (u(t_, y_ + h / 4) - u(t_, y_ - h / 4)) / (h / 2)
            return float(gm.profile_I(u(t_, y_))) ** 2 + 2 * (t0 - t_) * g * g
        e2 = max(e2, abs(box(q2) + 2 * ip ** 2 * du ** 2 + 4 * (t0 - t) * d2u ** 2))
    o.close("box I(u)^2 = 2(1 - I'(u)^2)|grad u|^2", e1, 0.0, 1e-5)
    o.close("box Q^2 = -2 I'(u)^2 |grad u|^2 - 2a |Hess u|^2", e2, 0.0, 1e-4)


@check("bobkov")
def _hessian_cauchy_schwarz(o: Out):
    r = rng(o.cfg, 5)
    fl = warped(o.cfg.grid)
    m = fl.metric_at(0.2)
    worst = -math.inf
    for _ in range(5):
        w = cos_series(fl.grid.centers, r.normal(size=5))
        g2, h2, m2 = hessian_norms(w, m)
        worst = max(worst, float(np.max(m2 - h2 * g2)))
    o.leq("max |Hess w(grad w,.)|^2 - |Hess w|^2 |grad w|^2", worst, 0.0, 1e-12)


@check("bobkov")
def _rigidity(o: Out):
    fl = flow(FlowSpec(RoundSphere(2, 1.0), 0.0, 0.3), 256)
    rep = bk.rigidity_probe(fl, 0.0, 0.3, cap(fl.grid.centers), 0.0, 32)
    o.geq("non-affine profile has positive integrated defect", rep.scan_drop, rep.floor)


# ---------------------------------------------------------------------------
# concentration


@check("concentration", criterion=1)
def _euclidean_profile_sharpness(o: Out):
    fl = euclid(1, o.cfg.grid)
    worst = {"exact": 0.0, "grid": 0.0}
    for tau in (0.25, 0.5, 1.0):
        m = hk.conjugate_kernel(fl, 0.0, 1.5, 1.5 - tau)
        for a in (0.1, 0.3, 0.5, 0.7, 0.9):
            E = iso.IntervalSet.below(math.sqrt(2 * tau) * float(gm.phi_quantile(a)))
            ref = float(gm.profile_I(a)) / math.sqrt(2 * tau)
            for src in worst:
                worst[src] = max(worst[src], abs(iso.weighted_perimeter(E, m, src) / ref - 1))
    o.close("closed forms: max relative error", worst["exact"], 0.0, 1e-8)
    o.close(f"grid quadrature ({o.cfg.grid} nodes): max relative error", worst["grid"], 0.0, 1e-4)


@check("concentration")
def _closed_geometry_profile(o: Out):
    ms = hk.conjugate_kernel(sphere(o.cfg.grid), 0.0, 0.3, 0.0)
    mw = hk.conjugate_kernel(warped(o.cfg.grid), 0.0, 0.3, 0.0)
    for label, m in (("sphere", ms), ("warped", mw)):
        for c in (0.3, 0.8, 1.5, 2.5):
            rec = iso.profile_check(iso.IntervalSet.below(c), m)
            o.geq(f"{label} cap {c}: Per >= I(nu)/sqrt(2 tau)", rec.perimeter, rec.bound, 1e-9)
    for c in (0.8, 1.5):
        E = iso.IntervalSet.below(c)
        b = iso.weighted_perimeter(E, ms, "grid")
        rel = iso.weighted_perimeter(E, ms, "relaxation")
        o.close(f"sphere cap {c}: relaxed vs boundary perimeter", rel / b, 1.0, 0.02, relative=True)
    mt = hk.conjugate_kernel(torus(o.cfg.grid), 0.0, 1.5, 0.5)
    cert = iso.cheeger_constant(mt, [iso.IntervalSet.band(a, a + w) for a in (0.0, 1.0, 2.0) for w in (0.5, 2.0)])
    o.geq("torus Cheeger ratio >= 1/sqrt(pi tau)", cert.ratio, cert.bound, 1e-9)


@check("concentration")
def _nested_sets(o: Out):
    m = hk.conjugate_kernel(warped(o.cfg.grid), 0.0, 0.3, 0.0)
    vals = [iso.nu_measure(iso.IntervalSet.band(1.0 - w, 1.0 + w), m) for w in np.linspace(0.0, 1.0, 21)]
    o.geq("nu increases along nested bands", float(np.min(np.diff(vals))), 0.0, 1e-15)


@check("concentration", criterion=3)
def _euclidean_enlargement(o: Out):
    tau = 0.5
    m = hk.conjugate_kernel(euclid(1, o.cfg.grid), 0.0, 1.5, 1.0)
    for c in (-0.3, 0.8):
        rows = iso.enlargement_check(iso.IntervalSet.below(c), m, np.linspace(0, 4 * math.sqrt(tau), 50))
        o.close(f"half-line x<{c}: max |nu(E_r) - bound|", max(abs(r.margin) for r in rows), 0.0, 1e-8)
    o.series("euclidean enlargement", [r.radius for r in rows], [r.measure for r in rows])


@check("concentration", criterion=3)
def _torus_enlargement(o: Out):
    tau = 1.0
    m = hk.conjugate_kernel(torus(o.cfg.grid), 0.0, 1.5, 0.5)
    radii = np.linspace(0, 3.0, 64)
    for a, b in ((1.0, 2.0), (-0.5, 0.5), (2.5, 4.5)):
        rows = iso.enlargement_check(iso.IntervalSet.band(a, b), m, radii)
        o.geq(f"band [{a},{b}): min margin over 64 radii", min(r.margin for r in rows), 0.0, 1e-12, "roundoff")
        # quantile drift is nondecreasing in r
        q = [float(gm.phi_quantile(min(r.measure, 1 - 1e-16))) - r.radius / math.sqrt(2 * tau)
             for r in rows if r.measure < 1 - 1e-12]
        o.geq(f"band [{a},{b}): quantile drift increments", float(np.min(np.diff(q))), 0.0, 1e-9)
    o.series("torus enlargement margin", radii, [r.margin for r in rows])


@check("concentration", criterion=3)
def _sphere_enlargement(o: Out):
    m = hk.conjugate_kernel(sphere(o.cfg.grid), 0.0, 0.3, 0.0)
    rows = iso.enlargement_check(iso.IntervalSet.below(0.5), m, np.linspace(0, 1.5, 16))
    o.geq("cap 0.5: min margin", min(r.margin for r in rows), 0.0, 1e-9)


@check("concentration", criterion=4)
def _two_set(o: Out):
    fl = euclid(1, o.cfg.grid)
    tau = 0.5
    m = hk.conjugate_kernel(fl, 0.0, 1.5, 1.0)
    for a, b in ((-1.0, 0.5), (-0.2, 0.1), (0.3, 2.0)):
        rec = iso.two_set_check(iso.IntervalSet.below(a), iso.IntervalSet.above(b), m)
        o.close(f"opposing half-lines ({a}, {b}): quantile equality", rec.quantile_sum, rec.quantile_bound, 1e-8)
    ds = np.linspace(0.1, 6.0, 20)
    ok = True
    for d in ds:
        mid, ex = iso.product_chain(d, tau)
        prod = float(gm.phi_cdf(-d / (2 * math.sqrt(2 * tau)))) ** 2
        ok &= prod <= mid * (1 + 1e-12) and mid <= ex
    o.flag("product chain on 20-point distance grid", ok)
    d = 2 * math.sqrt(2 * tau)
    mid, ex = iso.product_chain(d, tau)
    o.leq("middle term at d/sqrt(2 tau) = 2", mid, 0.0252, 0.0)
    o.close("middle term = Phi(-1)^2", mid, float(gm.phi_cdf(-1.0)) ** 2, 1e-15)
    o.series("gaussian product", ds, [iso.product_chain(d, tau)[0] for d in ds])


@check("concentration")
def _closed_geometry_two_set(o: Out):
    m = hk.conjugate_kernel(torus(o.cfg.grid), 0.0, 1.5, 1.0)
    rec = iso.two_set_check(iso.IntervalSet.band(-0.5, 0.5), iso.IntervalSet.band(1.5, 2.5), m)
    o.geq("torus bands: quantile margin", rec.quantile_margin, 0.0, 1e-9)
    o.flag("torus bands: product chain", rec.chain_holds)
    ms = hk.conjugate_kernel(sphere(o.cfg.grid), 0.0, 0.3, 0.0)
    A, B = iso.IntervalSet.below(0.6), iso.IntervalSet.above(1.6)
    o.geq("sphere one-sided bound", iso.one_sided_check(A, B, 0.5 * iso.nu_measure(B, ms), ms), 0.0, 1e-9)


@check("concentration")
def _lipschitz_observables(o: Out):
    m = hk.conjugate_kernel(euclid(2, 256), (0.0, 0.0), 1.0, 0.5)
    rep = iso.lipschitz_quantile_check(iso.LinearObservable((1.0,)), 1.0, [(0.1, 0.9), (0.3, 0.5)], m,
                                       [0.5, 1.0], [1.0, 2.0], [0.1, 0.2])
    o.geq("euclidean linear observable: min margin", min(rep.margins()), 0.0, rep.tol)
    sp = sphere(o.cfg.grid)
    ms = hk.conjugate_kernel(sp, 0.0, 0.3, 0.0)
    rep = iso.lipschitz_quantile_check(sp.arclength(0.0, sp.grid.centers), 1.0, [(0.1, 0.9), (0.3, 0.5)], ms,
                                       [0.5, 1.0], [1.0, 2.0], [0.1, 0.2])
    o.geq("sphere distance observable: min margin", min(rep.margins()), 0.0, rep.tol)


# ---------------------------------------------------------------------------
# hn


@check("hn", criterion=5)
def _hn_constant(o: Out):
    o.close("H_2 = 4 + pi^2/2", hn.hn_constant(2), 8.93480, 5e-6)
    o.close("H_1 = 4", hn.hn_constant(1), 4.0, 0.0)


@check("hn", criterion=5)
def _euclidean_tails(o: Out):
    m = hk.conjugate_kernel(euclid(2, 256), (0.0, 0.0), 1.0, 0.5)
    c = hn.find_hn_center(m)
    rows = hn.hn_tail_check(c, m, np.linspace(0, 8, 32))
    o.geq("min (profile bound - tail)", min(r.profile - r.tail for r in rows), 0.0, 1e-12)
    o.geq("min (median bound - tail)", min(r.median - r.tail for r in rows), 0.0, 1e-12)
    o.geq("min (exponential bound - tail)", min(r.exponential - r.tail for r in rows), 0.0, 1e-12)
    o.flag("bounds ordered profile <= median <= exponential", all(r.ordered for r in rows))
    mom = hn.excess_moment_check(c, m, [1.0])
    val = mom[0].value
    o.leq("excess exponential moment (lambda=1, tau=1/2)", val, 1.8873, 1e-6)
    o.close("model value 1/2 + e^{1/2} Phi(1)", mom[0].bound, 0.5 + math.exp(0.5) * float(gm.phi_cdf(1.0)), 1e-14)
    o.geq("excess moment below model value", mom[0].margin, 0.0, 1e-9)
    o.series("tail", [r.radius for r in rows], [r.tail for r in rows])


@check("hn")
def _euclidean_localization(o: Out):
    m = hk.conjugate_kernel(euclid(2, 256), (0.0, 0.0), 1.0, 0.5)
    c = hn.find_hn_center(m)
    o.leq("center second moment <= basepoint second moment", c.second_moment, hn.basepoint_moment(m), 1e-12)
    for b, q, bound in hn.quantile_localization_check(c, m, [0.5, 0.9, 0.99]):
        o.leq(f"distance quantile b={b}", q, bound, 1e-12)
    for r, val, bound in hn.excess_domination_check(c, m, np.linspace(0.05, 4, 20)):
        o.leq(f"nu(Y > {r:.3g}) <= Phi(-r/sqrt(2 tau))", val, bound, 1e-12)
    for row in hn.excess_moment_check(c, m, [0.5, 2.0], [0.1, 3 / 16]):
        o.geq(f"{row.kind} {row.parameter:g}", row.margin, 0.0, 1e-9)


@check("hn")
def _closed_geometry_localization(o: Out):
    for label, fl, x0 in (("torus", torus(o.cfg.grid), 0.3), ("sphere", sphere(o.cfg.grid), 0.0)):
        m = hk.conjugate_kernel(fl, x0, 0.3, 0.0)
        c = hn.find_hn_center(m)
        o.flag(f"{label}: center satisfies second-moment bound", c.holds, c.second_moment)
        o.leq(f"{label}: center moment <= basepoint moment", c.second_moment, hn.basepoint_moment(m), 1e-12)
        rows = hn.hn_tail_check(c, m, np.linspace(0, 3, 32))
        o.flag(f"{label}: tail bounds on 32 radii", all(r.holds for r in rows))
        for row in hn.excess_moment_check(c, m, [1.0], [0.2]):
            o.geq(f"{label}: {row.kind} {row.parameter:g}", row.margin, 0.0, 1e-9)
        for r, val, bound in hn.excess_domination_check(c, m, np.linspace(0.05, 2, 10)):
            o.leq(f"{label}: nu(Y > {r:.3g})", val, bound, 1e-12)


# ---------------------------------------------------------------------------
# score


_CONVEX_TESTS = [se.ConvexTest("power", 2), se.ConvexTest("power", 3), se.ConvexTest("hinge", 0.5),
                 se.ConvexTest("exp", 1.0), se.ConvexTest("max", -0.2), se.ConvexTest("linear", 2.0)]


@check("score", criterion=6)
def _euclidean_equalities(o: Out):
    fl = euclid(2, 512)
    sc = se.score_field(fl, (0.0, 0.0), 1.0, 0.5, (1.0, 0.0))
    o.close("mean zero", sc.mean(), 0.0, 1e-7)
    for lam in (0.0, 0.5, 1.5):
        b = se.set_bound_check(sc, sc.superlevel_set(lam))
        o.close(f"set bound equality on superlevel {lam}", b.value, b.bound, 1e-6)
    for a, ps_, bound in se.rearrangement_partial_sums(sc, [0.1, 0.3, 0.5, 0.9]):
        o.close(f"rearrangement partial sum a={a}", ps_, bound, 1e-6)
    for label, val, model in se.convex_order_check(sc, _CONVEX_TESTS):
        o.close(f"convex order {label}", val, model, 1e-6)
    b = se.moment_check(sc, 2, full_gradient=True)
    o.close("full-gradient p=2 moment = n/2", b.value, 1.0, 1e-6)
    o.close("full-gradient p=2 bound Gamma((n+2)/2)/Gamma(n/2)", b.bound,
            math.gamma(2.0) / math.gamma(1.0), 1e-12)
    o.close("full-gradient p=2 moment = bound", b.value, b.bound, 1e-6)
    for a in (0.05, 0.5, 1.0):
        lm = se.localized_moment_check(sc, se.two_sided_tail_set(sc, a), 3)
        o.close(f"localized moment equality a={a}", lm.value, lm.bound, 1e-6)


@check("score", criterion=6)
def _closed_geometry_bounds(o: Out):
    for label, fl, x0, t in (("torus", torus(o.cfg.grid), 0.3, 1.5), ("sphere", sphere(256), 0.0, 0.3)):
        sc = se.score_field(fl, x0, t, 0.0)
        o.close(f"{label}: mean zero", sc.mean(), 0.0, 1e-7)
        o.geq(f"{label}: set bound", min(se.set_bound_check(sc, sc.superlevel_set(l)).margin
                                         for l in np.linspace(-2, 2, 21)), 0.0, 1e-12)
        o.geq(f"{label}: partial sums", min(r[2] - r[1] for r in se.rearrangement_partial_sums(
            sc, np.linspace(0.01, 0.99, 99))), 0.0, 1e-12)
        o.geq(f"{label}: convex order", min(r[2] - r[1] for r in se.convex_order_check(sc, _CONVEX_TESTS[:-1])),
              0.0, 1e-12)
        for full in (False, True):
            o.geq(f"{label}: p=2 moment (full={full})", se.moment_check(sc, 2, full).margin, 0.0, 1e-12)
        o.geq(f"{label}: localized p=2 moment", se.localized_moment_check(sc, sc.superlevel_set(0.5), 2).margin,
              0.0, 1e-12)


@check("score")
def _hardy_littlewood(o: Out):
    sc = se.score_field(torus(o.cfg.grid), 0.3, 1.5, 0.0)
    worst = 0.0
    for lev in np.linspace(-0.4, 0.4, 9):
        X = sc.superlevel_set(lev)
        val, a = sc.set_integral(X)
        worst = max(worst, abs(val - sc.partial_sum(a)))
    o.close("superlevel integral = partial sum at equal mass", worst, 0.0, 1e-12)
    # Euclidean both directions: equal partial sums and equal convex test values
    e = se.score_field(euclid(2, 512), (0.0, 0.0), 1.0, 0.5, (1.0, 0.0))
    for a, s_, bound in se.rearrangement_partial_sums(e, [0.2, 0.6]):
        o.close(f"euclidean partial sum a={a} (both directions)", s_, bound, 1e-6)
    for label, val, model in se.convex_order_check(e, [se.ConvexTest("hinge", -0.3), se.ConvexTest("power", 1.5)]):
        o.close(f"euclidean {label} (both directions)", val, model, 1e-6)


# ---------------------------------------------------------------------------
# functional


def _lin():
    return (lambda y: y, lambda y: np.ones_like(y))


@check("functional", criterion=7)
def _rearrangement(o: Out):
    m = hk.conjugate_kernel(euclid(2, 512), (0.3, 0.0), 1.0, 0.5)
    neg = (lambda y: -y, lambda y: -np.ones_like(y))
    R = fi.gaussian_rearrange(neg, m)
    levels = rng(o.cfg, 6).uniform(-2, 2, 200)
    o.close("euclidean: equimeasurability at 200 levels", fi.equimeasurability_error(neg, m, R, levels), 0.0, 1e-6)
    tf = torus(256)
    mt = hk.conjugate_kernel(tf, 0.0, 1.5, 0.0)
    h = np.sin(tf.grid.centers)
    Rt = fi.gaussian_rearrange(h, mt)
    o.close("torus: equimeasurability at 200 levels",
            fi.equimeasurability_error(h, mt, Rt, rng(o.cfg, 7).uniform(-1, 1, 200)), 0.0, 1e-6)
    for p in (1, 2, 4):
        o.close(f"euclidean: L^{p} norm preserved", R.lp_norm(p), fi.expect(neg, m, p) ** (1 / p), 1e-8)
    for label, hh in (("linear", _lin()), ("tanh", (np.tanh, lambda y: 1 / np.cosh(y) ** 2))):
        c = fi.polya_szego_check(hh, m, 2)
        o.geq(f"Polya-Szego {label}", c.margin, 0.0, 1e-8)
    o.geq("torus Polya-Szego", fi.polya_szego_check(h, mt, 2).margin, 0.0, 1e-9)
    o.close("coarea: euclidean linear", *(lambda c: (c.lhs, c.rhs))(fi.coarea_profile_check(_lin(), m)), 1e-8)


@check("functional", criterion=7)
def _log_sobolev(o: Out):
    tf = torus(256)
    mt = hk.conjugate_kernel(tf, 0.0, 1.5, 0.0)
    x = tf.grid.centers
    r = rng(o.cfg, 8)
    ratios = []
    for _ in range(100):
        k = np.arange(1, 5)
        u = 1.0 + (r.normal(size=4) @ np.cos(np.outer(k, x) + r.uniform(0, 2 * np.pi, (4, 1)))) / (2 * k.size)
        u = np.abs(u) + 1e-3
        ratios.append(fi.lsi_check(u, mt).ratio)
    o.leq("max LSI ratio over 100 random trig polynomials", max(ratios), 1.0, 0.0)
    m = hk.conjugate_kernel(euclid(2, 512), (0.3, 0.0), 1.0, 0.5)
    lam = 0.7
    c = fi.lsi_check((lambda y: np.exp(lam * y / 2), lambda y: lam / 2 * np.exp(lam * y / 2)), m)
    o.close("euclidean exponential LSI equality", c.lhs, c.rhs, 1e-8, relative=True)
    c = fi.reverse_lsi_check((lambda y: np.exp(lam * y), lambda y: lam * np.exp(lam * y)), euclid(2, 512),
                             0.3, 1.0, 0.5)
    o.close("reverse LSI equality for exponentials", c.lhs, c.rhs, 1e-6, relative=True)
    c = fi.reverse_lsi_check(1 + 0.5 * np.sin(x), tf, 0.0, 1.5, 0.0)
    o.geq("torus reverse LSI", c.margin, 0.0, 1e-9)
    # entropy: nonnegative, zero on constants
    o.geq("entropy of a positive field", fi.entropy(1 + 0.5 * np.sin(x), mt), 0.0)
    o.close("entropy of a constant", fi.entropy(np.full_like(x, 2.0), mt), 0.0, 1e-14)
    # linearization: small perturbations of a constant give LSI ratio -> Poincare ratio
    eps = 1e-3
    g = np.cos(x) + 0.3 * np.sin(2 * x)
    lsi = fi.lsi_check(1 + eps * g, mt)
    poi = fi.lp_poincare_check(g, mt, 2)
    o.close("LSI ratio -> squared Poincare ratio near constants", lsi.ratio, poi.ratio ** 2, 1e-2,
            "perturbation 1e-3", relative=True)


@check("functional", criterion=7)
def _poincare(o: Out):
    m = hk.conjugate_kernel(euclid(2, 512), (0.3, 0.0), 1.0, 0.5)
    tau = 0.5
    var = m.expect(lambda y: y[..., 0] ** 2) - m.expect(lambda y: y[..., 0]) ** 2
    o.close("Var of a linear function = 2 tau", var, 2 * tau, 1e-8)
    c = fi.lp_poincare_check(_lin(), m, 2)
    o.close("p=2 Poincare equality for linear functions", c.lhs, c.rhs, 1e-8)
    c = fi.lp_poincare_check(_lin(), m, 1)
    o.geq("p=1 Poincare for linear functions (strict)", c.margin, 0.0, 1e-12)
    o.close("Lambda_1 = sqrt(pi/2)", gm.lambda_p(1).value, math.sqrt(math.pi / 2), 1e-15)
    o.close("Lambda_1 numerical lower bound", gm.lambda_p_estimate(1), math.sqrt(math.pi / 2), 1e-6)
    o.close("Lambda_2 = 1", gm.lambda_p(2).value, 1.0, 0.0)
    o.close("Lambda_2 numerical (polynomials)", gm.lambda_p_estimate(2), 1.0, 1e-9)
    o.geq("median Poincare p=1", fi.median_poincare_check(_lin(), m, 1).margin, 0.0, 1e-12)
    bump = (lambda y: np.maximum(y - 1.2, 0) ** 2, lambda y: 2 * np.maximum(y - 1.2, 0))
    o.geq("small-support Poincare p=1", fi.small_support_poincare_check(bump, m, 1).margin, 0.0, 1e-12)


@check("functional", criterion=7)
def _faber_krahn(o: Out):
    tau = 0.5
    m = hk.conjugate_kernel(euclid(1, o.cfg.grid), 0.0, 1.0, 0.5)
    for a in (0.5, 0.1, 0.01):
        E = iso.IntervalSet.below(math.sqrt(2 * tau) * float(gm.phi_quantile(a)))
        lam, am = fi.dirichlet_eigenvalue(E, m)
        lam2, _ = fi.dirichlet_eigenvalue(E, m, method="eigh")
        o.geq(f"a={a}: eigenvalue >= bound", lam, fi.faber_krahn_bound(am, tau), 0.0)
        o.close(f"a={a}: inverse iteration vs dense eigensolver", lam, lam2, 1e-8, relative=True)
    ms = hk.conjugate_kernel(sphere(256), 0.0, 0.2, 0.0)
    c = fi.faber_krahn_check(iso.IntervalSet.above(2.0), ms)
    o.geq("sphere cap", c.margin, 0.0, 0.0)


@check("functional", criterion=7)
def _reverse_hypercontractivity(o: Out):
    lam = 0.8
    sch = fi.ExponentSchedule(0.25, 0.5, 1.0, 1.5)
    o.close("threshold ratio (1-p)/(1-q)", sch.threshold, 1.5, 1e-15)
    rep = fi.reverse_hypercontractivity_check(euclid(1, 256), 0.0, 2.0, lambda y: np.exp(lam * y), sch)
    early, late = fi.flat_model_norms(lam, sch)
    o.close("flat model at threshold: early = late", rep.early, rep.late, 1e-6, relative=True)
    o.close("early norm closed form", rep.early, early, 1e-6, relative=True)
    o.close("late norm closed form", rep.late, late, 1e-6, relative=True)
    o.leq("intermediate norms nondecreasing", rep.monotone_violation, 0.0, 1e-9)
    try:
        fi.ExponentSchedule(0.25, 0.5, 1.0, 1.4)
        o.flag("precondition error below the threshold", False)
    except PreconditionError:
        o.flag("precondition error below the threshold", True)
    tf = torus(256)
    x = tf.grid.centers
    rep = fi.reverse_hypercontractivity_check(tf, 0.0, 3.0, np.exp(np.cos(x)), sch)
    o.geq("torus: early >= late", rep.margin, 0.0, 1e-9)
    o.leq("torus: monotone violation", rep.monotone_violation, 0.0, 1e-9)
    o.series("torus norms", rep.times, rep.norms)


@check("functional")
def _monotone_lp_norms(o: Out):
    r = rng(o.cfg, 9)
    for label, fl, t0 in (("torus", torus(256), 1.0), ("warped", warped(256), 0.3)):
        x = fl.grid.centers
        worst = 0.0
        for p in (0.3, 0.7):
            u = np.exp(cos_series(x, r.normal(size=4) * 0.7))
            norms = fi.fixed_exponent_norms(fl, 0.0, t0, u, 0.0, t0 * 0.9, p, steps=20)
            worst = max(worst, float(max(0.0, -np.min(np.diff(norms)))))
        o.leq(f"{label}: largest decrease of ||u||_p, p<1", worst, 0.0, 1e-9)


# ---------------------------------------------------------------------------
# pathspace


TAU1, TAU2 = 0.5, 1.0


@lru_cache(maxsize=4)
def _ensemble(seed: int, paths: int, steps_per_slot: int):
    fl = euclid(2, 64)
    return ps.sample_paths(fl, (0.0, 0.0), TAU2, TAU1 / steps_per_slot, paths, seed, record=[0.25, TAU1, TAU2])


def _ens(o: Out):
    return _ensemble(o.cfg.seed, o.cfg.paths, o.cfg.steps_per_slot)


def _sigmoid_product(a: float, b: float, axes=(0, 1)) -> ps.CylinderFunction:
    i, j = axes
    z = lambda v: 0 * v[:, 0]

    def grads(xs):
        g0 = np.stack([z(xs[0]), z(xs[0])], 1)
        g1 = np.stack([z(xs[0]), z(xs[0])], 1)
        g0[:, i] = a * gm.phi_pdf(a * xs[0][:, i]) * gm.phi_cdf(b * xs[1][:, j])
        g1[:, j] = b * gm.phi_pdf(b * xs[1][:, j]) * gm.phi_cdf(a * xs[0][:, i])
        return [g0, g1]
    return ps.CylinderFunction((TAU1, TAU2), lambda xs: gm.phi_cdf(a * xs[0][:, i]) * gm.phi_cdf(b * xs[1][:, j]),
                               grads)


@check("pathspace", criterion=8)
def _seed_determinism(o: Out):
    e1 = _ens(o)
    e2 = ps.sample_paths(euclid(2, 64), (0.0, 0.0), TAU2, TAU1 / o.cfg.steps_per_slot, o.cfg.paths, o.cfg.seed,
                         record=[0.25, TAU1, TAU2])
    o.flag("identical seed gives identical ensemble digest", e1.digest() == e2.digest())
    e3 = ps.sample_paths(euclid(2, 64), (0.0, 0.0), TAU2, TAU1 / o.cfg.steps_per_slot, 1000, o.cfg.seed + 1,
                         record=[0.25])
    e4 = ps.sample_paths(euclid(2, 64), (0.0, 0.0), TAU2, TAU1 / o.cfg.steps_per_slot, 1000, o.cfg.seed,
                         record=[0.25])
    o.flag("a different seed gives a different digest", e3.digest() != e4.digest())
    o.note(digest=e1.digest(), algorithm=e1.algorithm)


@check("pathspace")
def _marginals(o: Out):
    ens = _ens(o)
    for sigma in (0.25, TAU1, TAU2):
        b = ps.marginal_variance_check(ens, sigma)
        o.close(f"E|X - x|^2 at {sigma} = 2 n sigma", b.value, b.expected, b.band, "3 standard errors")
    tf = torus(64)
    et = ps.sample_paths(tf, 0.0, 3.0, 0.01, o.cfg.paths, o.cfg.seed, record=[1.5, 3.0])
    for sigma in (1.5, 3.0):
        o.geq(f"torus wrapped marginal chi^2 p-value at {sigma}", ps.marginal_chi2_pvalue(et, sigma), 0.01)
    try:
        ps.sample_paths(sphere(64), 0.0, 0.2, 0.01, 10, 1)
        o.flag("curved flows are rejected", False)
    except UnsupportedFlowError:
        o.flag("curved flows are rejected", True)


@check("pathspace", criterion=8)
def _one_time_bobkov(o: Out):
    ens = _ens(o)
    sd = math.sqrt(2 * TAU1)
    f = lambda x: gm.phi_cdf(x[:, 0] / sd)
    df = lambda x: np.stack([gm.phi_pdf(x[:, 0] / sd) / sd, 0 * x[:, 0]], 1)
    F = ps.one_time(TAU1, f, df)
    r = ps.pathspace_bobkov_check(ens, F)
    o.close("one-time half-space: equality within 3 sigma band", r.lhs, r.rhs, r.band, "3 standard errors")
    fd = ps.finite_dimensional_rhs(ens, TAU1, f, df)
    rhs_terms = np.sqrt(gm.profile_I(f(ens.at(TAU1))) ** 2 + 2 * ps.h_gradient_sq(F, [ens.at(TAU1)]))
    o.close("tensorization: path-space rhs = finite-dimensional rhs", float(np.max(np.abs(rhs_terms - fd))), 0.0,
            1e-14)
    c = ps.one_time(TAU1, lambda x: np.full(x.shape[0], 0.3), lambda x: np.zeros_like(x))
    rc = ps.pathspace_bobkov_check(ens, c)
    o.close("constant F: equality at I(c)", rc.lhs, rc.rhs, 1e-15)


@check("pathspace", criterion=8)
def _two_time_bobkov(o: Out):
    ens = _ens(o)
    r = ps.pathspace_bobkov_check(ens, _sigmoid_product(1.0, 1.5))
    o.geq("k=2 coordinate sigmoids: margin beyond band", r.margin, r.band, 0.0, "3 standard errors")
    o.note(lhs=r.lhs, rhs=r.rhs, band=r.band)


@check("pathspace")
def _first_step_gradient(o: Out):
    ens = _ens(o)
    F = _sigmoid_product(1.0, 1.5, axes=(0, 0))
    rows = ps.first_step_gradient_check(ens, F)
    o.geq("min bin margin + band", min(r.margin + r.band for r in rows), 0.0)
    y = ens.at(TAU1)[:5]
    exact = ps.conditional_expectation(F, y)
    nested, err = ps.nested_conditional_expectation(F, euclid(2, 64), y, 20_000, o.cfg.seed)
    o.leq("Markov consistency: nested MC vs exact convolution (in standard errors)",
          float(np.max(np.abs(exact - nested) / err)), 3.0, 0.0, "3 standard errors")


@check("pathspace")
def _perimeter(o: Out):
    ens = _ens(o)
    c = 0.3

    def moll(eps):
        return ps.one_time(TAU1, lambda x: gm.phi_cdf((c - x[:, 0]) / eps),
                           lambda x: np.stack([-gm.phi_pdf((c - x[:, 0]) / eps) / eps, 0 * x[:, 0]], 1))
    p = ps.pathspace_perimeter_check(ens, lambda xs: xs[0][:, 0] <= c, moll, 0.05)
    o.close("one-time half-space: perimeter = bound within band", p.perimeter, p.bound, p.band)

    def moll2(eps):
        return ps.CylinderFunction(
            (TAU1, TAU2), lambda xs: gm.phi_cdf((c - xs[0][:, 0]) / eps) * gm.phi_cdf((c - xs[1][:, 0]) / eps),
            lambda xs: [np.stack([-gm.phi_pdf((c - xs[0][:, 0]) / eps) / eps * gm.phi_cdf((c - xs[1][:, 0]) / eps),
                                  0 * xs[0][:, 0]], 1),
                        np.stack([-gm.phi_pdf((c - xs[1][:, 0]) / eps) / eps * gm.phi_cdf((c - xs[0][:, 0]) / eps),
                                  0 * xs[0][:, 0]], 1)])
    p2 = ps.pathspace_perimeter_check(ens, lambda xs: (xs[0][:, 0] <= c) & (xs[1][:, 0] <= c), moll2, 0.05)
    o.geq("k=2 corner set: perimeter >= bound", p2.perimeter, p2.bound, p2.band)
