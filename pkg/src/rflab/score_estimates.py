"""Logarithmic derivatives of the conjugate heat kernel in the basepoint.

The score ``S_v(y) = <grad_x log K(x, t; y, s), v>`` is computed by central
differences in the basepoint with Richardson extrapolation over the steps
``{4h, 2h}``.  Under ``nu`` it is dominated in convex order by
``Z ~ N(0, 1/(2 tau))``; this module evaluates the set bound, the
rearrangement partial sums, convex test functions, moments, localized moments
and the averaged heat-kernel upper bound.

Three representations are supported:

* Euclidean space: the kernel factorises, so integrals reduce to adaptive
  one-dimensional quadrature along the direction ``v`` (and along the radius
  for the full gradient).
* The flat circle: node samples with the exact wrapped kernel.
* The shrinking round ``S^2`` with a polar basepoint: samples on a polar
  times azimuth grid with the zonal series kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats

from .errors import DomainError, PreconditionError, UnsupportedFlowError
from .flow_geometry import EuclideanFlow, ModelFlow, RoundSphereFlow, TorusFlow
from .gaussian_model import (model_abs_moment, model_vector_moment, phi_cdf, phi_pdf, phi_quantile,
                             profile_I)
from .heat_kernel import (KernelMeasure, conjugate_kernel, sphere_kernel_series,
                          wrapped_gaussian_density)
from .isoperimetry import IntervalSet, nu_measure, one_sided_bound, set_distance


def _richardson(log_k: Callable[[float], np.ndarray], step: float) -> np.ndarray:
    """``d/de log_k(e)`` at 0 from central differences at ``step`` and ``step / 2``."""
    d1 = (log_k(step) - log_k(-step)) / (2.0 * step)
    d2 = (log_k(0.5 * step) - log_k(-0.5 * step)) / step
    return (4.0 * d2 - d1) / 3.0


# ---------------------------------------------------------------------------
# Euclidean representation


@dataclass
class GaussianScoreField:
    """Score of the Euclidean kernel, integrated along the direction ``v``.

    Sets are interval sets in the coordinate ``u = <y - x, v>``.
    """

    measure: KernelMeasure
    direction: np.ndarray
    step: float

    @property
    def tau(self) -> float:
        return self.measure.tau

    @property
    def n(self) -> int:
        return self.measure.gaussian.n

    @property
    def _std(self) -> float:
        return math.sqrt(2.0 * self.tau)

    def _log_kernel(self, base: np.ndarray, y: np.ndarray) -> np.ndarray:
        d2 = np.sum((y - base) ** 2, axis=-1)
        return -d2 / (4.0 * self.tau) - 0.5 * self.n * math.log(4.0 * math.pi * self.tau)

    def profile(self, u) -> np.ndarray:
        """``S_v`` at ``y = x + u v``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        x = np.asarray(self.measure.gaussian.center)
        y = x + u[:, None] * self.direction
        return _richardson(lambda e: self._log_kernel(x + e * self.direction, y), self.step)

    def radial_profile(self, r) -> np.ndarray:
        """``|grad_x log K|`` at distance ``r`` from the basepoint."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        x = np.asarray(self.measure.gaussian.center)
        e = np.zeros(self.n)
        e[0] = 1.0
        y = x + r[:, None] * e
        return np.abs(_richardson(lambda t: self._log_kernel(x + t * e, y), self.step))

    def _integrate(self, fn, lo=-math.inf, hi=math.inf) -> float:
        std = self._std
        lo, hi = max(lo, -40.0 * std), min(hi, 40.0 * std)
        if hi <= lo:
            return 0.0
        pts = [p for p in (0.0,) if lo < p < hi]
        g = lambda u: float(fn(np.array([u]))[0]) * phi_pdf(u / std) / std
        return integrate.quad(g, lo, hi, points=pts or None, epsabs=1e-14, epsrel=1e-12, limit=400)[0]

    def mean(self) -> float:
        return self._integrate(self.profile)

    def expect(self, psi: Callable) -> float:
        return self._integrate(lambda u: psi(self.profile(u)))

    def set_integral(self, X: IntervalSet) -> tuple[float, float]:
        """``(int_X S_v dnu, nu(X))``."""
        val = mass = 0.0
        for a, b in X.intervals:
            val += self._integrate(self.profile, a, b)
            mass += float(phi_cdf(b / self._std) - phi_cdf(a / self._std))
        return val, mass

    def superlevel_set(self, level: float) -> IntervalSet:
        """``{S_v > level}``; the score is affine and increasing in ``u``."""
        s0, s1 = self.profile([0.0, 1.0])
        return IntervalSet.above((level - s0) / (s1 - s0))

    def mass_superlevel(self, a: float) -> IntervalSet:
        """Superlevel set of ``nu``-mass ``a``."""
        return IntervalSet.above(self._std * float(phi_quantile(1.0 - a)))

    def partial_sum(self, a: float) -> float:
        if a <= 0:
            return 0.0
        if a >= 1:
            return self.mean()
        return self.set_integral(self.mass_superlevel(a))[0]

    def abs_moment(self, p: float) -> float:
        return self.tau ** (0.5 * p) * self.expect(lambda s: np.abs(s) ** p)

    def vector_moment(self, p: float) -> float:
        law = stats.chi(df=self.n, scale=self._std)
        g = lambda r: float(self.radial_profile(r)[0]) ** p * law.pdf(r)
        return self.tau ** (0.5 * p) * integrate.quad(g, 0.0, 40.0 * self._std, epsabs=1e-14,
                                                      epsrel=1e-12, limit=400)[0]

    def gradient_form(self, p: float) -> float:
        """``tau^{p/2} int |grad_x K|^p / K^{p-1} dy`` evaluated in the kernel's own variables."""
        area = 2.0 * math.pi ** (0.5 * self.n) / special.gamma(0.5 * self.n)
        gm = self.measure.gaussian

        def g(r):
            k = gm.density(np.asarray(gm.center) + np.eye(self.n)[0] * r)[0]
            grad = float(self.radial_profile(r)[0]) * k
            return grad ** p / k ** (p - 1) * area * r ** (self.n - 1) if k > 0 else 0.0

        return self.tau ** (0.5 * p) * integrate.quad(g, 0.0, 40.0 * self._std, epsabs=1e-14,
                                                      epsrel=1e-12, limit=400)[0]


# ---------------------------------------------------------------------------
# sampled representation


@dataclass
class SampledScoreField:
    """Score values at sample points with their ``nu``-weights.

    Attributes:
        values: ``S_v`` at the samples.
        weights: ``nu``-weights (sum one).
        gradient: ``|grad_x log K|`` at the samples.
        coords: reduced coordinate of each sample (polar angle on the sphere).
        density: kernel density at each sample and ``volume`` the ``dg_s``
            weight, used for the unnormalised gradient form.
    """

    measure: KernelMeasure
    values: np.ndarray
    weights: np.ndarray
    gradient: np.ndarray
    coords: np.ndarray
    density: np.ndarray
    volume: np.ndarray
    step: float
    direction: float = 1.0

    @property
    def tau(self) -> float:
        return self.measure.tau

    @property
    def n(self) -> int:
        return self.measure.flow.n

    def _mask(self, X) -> np.ndarray:
        if isinstance(X, IntervalSet):
            ivs = X.normalized(self.measure.flow).intervals
            m = np.zeros(self.values.size, dtype=bool)
            for a, b in ivs:
                m |= (self.coords >= a) & (self.coords < b)
            return m
        m = np.asarray(X, dtype=bool)
        if m.shape != self.values.shape:
            raise DomainError("sample mask has the wrong shape")
        return m

    def mean(self) -> float:
        return float(np.dot(self.weights, self.values))

    def expect(self, psi: Callable) -> float:
        return float(np.dot(self.weights, psi(self.values)))

    def set_integral(self, X) -> tuple[float, float]:
        m = self._mask(X)
        return float(np.dot(self.weights[m], self.values[m])), float(self.weights[m].sum())

    def superlevel_set(self, level: float) -> np.ndarray:
        return self.values > level

    def partial_sum(self, a: float) -> float:
        """``int_0^a S*``, with the samples sorted by value and the last one split."""
        if a <= 0:
            return 0.0
        order = np.argsort(-self.values, kind="stable")
        v, w = self.values[order], self.weights[order]
        cum = np.cumsum(w)
        k = int(np.searchsorted(cum, a, side="left"))
        if k >= v.size:
            return float(np.dot(w, v))
        before = cum[k - 1] if k > 0 else 0.0
        return float(np.dot(w[:k], v[:k]) + (a - before) * v[k])

    def abs_moment(self, p: float) -> float:
        return self.tau ** (0.5 * p) * self.expect(lambda s: np.abs(s) ** p)

    def vector_moment(self, p: float) -> float:
        return self.tau ** (0.5 * p) * float(np.dot(self.weights, self.gradient ** p))

    def gradient_form(self, p: float) -> float:
        k = self.density
        grad = self.gradient * k
        return self.tau ** (0.5 * p) * float(np.sum(grad ** p / k ** (p - 1) * self.volume))


ScoreField = GaussianScoreField | SampledScoreField


def _default_step(flow: ModelFlow, step: float | None) -> float:
    h = flow.grid.h
    if step is None:
        return 4.0 * h
    if step < h:
        raise DomainError(f"difference step {step} is below the grid spacing {h}")
    return float(step)


def score_field(flow: ModelFlow, x, t: float, s: float, v=1.0, *, step: float | None = None,
                azimuths: int = 64) -> ScoreField:
    """Score of ``K(x, t; ., s)`` in the direction ``v``.

    Args:
        v: unit vector for Euclidean space, ``+1`` or ``-1`` on the circle,
            and on the sphere the azimuth of the meridian along which the
            basepoint moves.
        step: basepoint difference step in ``g_t`` arclength (default four
            grid spacings); Richardson extrapolation uses ``step`` and half.
        azimuths: number of azimuthal samples on the sphere.

    Raises:
        DomainError: if the step is below the grid spacing or ``v`` is not a unit vector.
        UnsupportedFlowError: for flows without a basepoint-differentiable kernel.
    """
    step = _default_step(flow, step)
    if isinstance(flow, EuclideanFlow):
        m = conjugate_kernel(flow, x, t, s)
        d = np.zeros(m.gaussian.n)
        vv = np.atleast_1d(np.asarray(v, dtype=float))
        d[:vv.size] = vv
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise DomainError("direction must be a unit vector")
        return GaussianScoreField(m, d, step)
    if isinstance(flow, TorusFlow):
        if v not in (1.0, -1.0, 1, -1):
            raise DomainError("circle directions are +1 or -1")
        m = conjugate_kernel(flow, x, t, s)
        g = flow.grid
        period = g.length
        xc = float(np.atleast_1d(x)[0])
        tau = t - s
        logk = lambda e: np.log(wrapped_gaussian_density(g.centers, xc + v * e, tau, period))
        vals = _richardson(logk, step)
        dens = m.density_fn(g.centers)
        return SampledScoreField(m, vals, m.masses, np.abs(vals), g.centers.copy(), dens,
                                 np.full(g.size, g.h), step, float(v))
    if isinstance(flow, RoundSphereFlow):
        if flow.n != 2:
            raise UnsupportedFlowError("sphere scores are provided for S^2")
        return _sphere_score(flow, x, t, s, float(v), step, azimuths)
    raise UnsupportedFlowError(f"no score representation for {type(flow).__name__}")


def _sphere_score(flow: RoundSphereFlow, x, t, s, azimuth, step, azimuths) -> SampledScoreField:
    p = float(np.atleast_1d(x)[0])
    north = conjugate_kernel(flow, 0.0, t, s)
    m = conjugate_kernel(flow, p, t, s) if p != 0.0 else north
    g = flow.grid
    theta = g.centers if p == 0.0 else math.pi - g.centers  # angle from the basepoint
    phi = (np.arange(azimuths) + 0.5) * 2.0 * math.pi / azimuths
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    radius_t = math.sqrt(flow.radius_squared(t))
    dens0 = north.density_fn

    def logk(e, rel):
        a = e / radius_t  # arclength to angle on the sphere at time t
        z = np.cos(a) * np.cos(th) + np.sin(a) * np.sin(th) * np.cos(rel)
        return np.log(dens0(np.arccos(np.clip(z, -1.0, 1.0))))

    vals = _richardson(lambda e: logk(e, ph - azimuth), step)
    # |grad| is the derivative toward the sample's own azimuth
    grad = np.abs(_richardson(lambda e: logk(e, np.zeros_like(ph)), step))
    w = np.repeat(m.masses[:, None] / azimuths, azimuths, axis=1)
    vol = np.repeat(m.metric.cell_volume[:, None] / azimuths, azimuths, axis=1)
    coords = np.repeat(g.centers[:, None], azimuths, axis=1)
    dens = dens0(th)
    return SampledScoreField(m, vals.ravel(), w.ravel(), grad.ravel(), coords.ravel(),
                             dens.ravel(), vol.ravel(), step, azimuth)


def score_field_exact_sphere(field: SampledScoreField) -> np.ndarray:
    """Analytic basepoint derivative of the zonal series (independent of differencing)."""
    m = field.measure
    flow = m.flow
    n = 2
    r2s = flow.radius_squared(m.s)
    elapsed = math.log(r2s / flow.radius_squared(m.t0)) / (2.0 * (n - 1))
    weights, _ = sphere_kernel_series(n, elapsed)
    azimuths = field.values.size // flow.grid.size
    theta = flow.grid.centers if m.x0 == 0.0 else math.pi - flow.grid.centers
    phi = (np.arange(azimuths) + 0.5) * 2.0 * math.pi / azimuths
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    z = np.cos(th)
    k = np.zeros_like(z)
    dk = np.zeros_like(z)
    for l, wl in enumerate(weights):
        k += wl * special.eval_legendre(l, z)
        if l >= 1:
            # P_l'(z) from the recurrence (z^2 - 1) P_l' = l (z P_l - P_{l-1})
            dk += wl * l * (z * special.eval_legendre(l, z) - special.eval_legendre(l - 1, z)) / (z * z - 1.0)
    dz = np.sin(th) * np.cos(ph - field.direction)
    radius_t = math.sqrt(flow.radius_squared(m.t0))
    return (dk / k * dz / radius_t).ravel()


# ---------------------------------------------------------------------------
# checks


@dataclass(frozen=True)
class Bound:
    value: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.value


def set_bound_check(score: ScoreField, X) -> Bound:
    """``|int_X S_v dnu| <= I(nu(X)) / sqrt(2 tau)``."""
    val, a = score.set_integral(X)
    a = min(max(a, 0.0), 1.0)
    return Bound(abs(val), float(profile_I(a)) / math.sqrt(2.0 * score.tau))


def rearrangement_partial_sums(score: ScoreField, levels: Sequence[float]) -> list[tuple[float, float, float]]:
    """Rows ``(a, int_0^a S*, I(a)/sqrt(2 tau))``."""
    rows = []
    for a in levels:
        if not 0 < a < 1:
            raise DomainError("rearrangement levels must lie in (0, 1)")
        rows.append((float(a), score.partial_sum(a), float(profile_I(a)) / math.sqrt(2.0 * score.tau)))
    return rows


@dataclass(frozen=True)
class ConvexTest:
    """Convex test function from the built-in family.

    ``kind`` is ``"power"`` (``|r|^p``), ``"hinge"`` (``(r - c)_+``),
    ``"exp"`` (``e^{theta r}``), ``"max"`` (``max(r, c)``) or ``"linear"``
    (``c r``).
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "hinge", "exp", "max", "linear"):
            raise DomainError(f"unknown test function {self.kind!r}")
        if self.kind == "power" and not self.param >= 1:
            raise DomainError("|r|^p is convex only for p >= 1")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return np.abs(r) ** self.param
        if self.kind == "hinge":
            return np.maximum(r - self.param, 0.0)
        if self.kind == "exp":
            return np.exp(self.param * r)
        if self.kind == "max":
            return np.maximum(r, self.param)
        return self.param * r

    def model_value(self, tau: float) -> float:
        """``E psi(Z)`` for ``Z ~ N(0, 1/(2 tau))`` in closed form."""
        sd = 1.0 / math.sqrt(2.0 * tau)
        c = self.param
        if self.kind == "power":
            return model_abs_moment(c, tau)
        if self.kind == "hinge":
            return sd * phi_pdf(c / sd) - c * float(phi_cdf(-c / sd))
        if self.kind == "exp":
            return math.exp(0.5 * c * c * sd * sd)
        if self.kind == "max":
            return c + sd * phi_pdf(c / sd) - c * float(phi_cdf(-c / sd))
        return 0.0


def check_convex(psi: Callable, lo: float, hi: float, samples: int = 257, tol: float = 1e-9) -> None:
    """Reject ``psi`` if a discrete second difference on ``[lo, hi]`` is negative."""
    r = np.linspace(lo, hi, samples)
    v = np.asarray(psi(r), dtype=float)
    d2 = v[2:] - 2.0 * v[1:-1] + v[:-2]
    if np.any(d2 < -tol * (1.0 + np.abs(v[1:-1]))):
        raise DomainError("test function is not convex")


def convex_order_check(score: ScoreField, tests: Sequence) -> list[tuple[str, float, float]]:
    """Rows ``(label, int psi(S_v) dnu, E psi(Z_tau))``.

    Built-in :class:`ConvexTest` instances use closed-form model values;
    arbitrary callables are checked for convexity and integrated against the
    model law numerically.
    """
    tau = score.tau
    sd = 1.0 / math.sqrt(2.0 * tau)
    rows = []
    for psi in tests:
        if isinstance(psi, ConvexTest):
            label, model = f"{psi.kind}({psi.param:g})", psi.model_value(tau)
        else:
            check_convex(psi, -8.0 * sd, 8.0 * sd)
            label = getattr(psi, "__name__", "psi")
            model = integrate.quad(lambda z: float(np.asarray(psi(np.array([z])))[0]) * phi_pdf(z / sd) / sd,
                                   -40 * sd, 40 * sd, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
        rows.append((label, score.expect(psi), model))
    return rows


def moment_check(score: ScoreField, p: float, full_gradient: bool = False) -> Bound:
    """Directional or full-gradient moment against the Gaussian constant."""
    if not p >= 1:
        raise DomainError("moment order must be >= 1")
    if full_gradient:
        n = score.n
        bound = model_vector_moment(p, n, score.tau) * score.tau ** (0.5 * p)
        return Bound(score.vector_moment(p), bound)
    return Bound(score.abs_moment(p), model_abs_moment(p, score.tau) * score.tau ** (0.5 * p))


def localized_bound(a: float, p: float, tau: float) -> float:
    """``(2 tau)^{-p/2} 2 int_{b_a}^inf r^p phi(r) dr`` with ``b_a = Phi^{-1}(1 - a/2)``."""
    if a <= 0:
        return 0.0
    b = float(phi_quantile(1.0 - 0.5 * a)) if a < 1 else 0.0
    # 2 int_b^inf r^p phi = 2^{p/2} Gamma((p+1)/2, b^2/2) / sqrt(pi)
    tail = 2.0 ** (0.5 * p) * special.gamma(0.5 * (p + 1)) * special.gammaincc(0.5 * (p + 1), 0.5 * b * b) / math.sqrt(math.pi)
    return (2.0 * tau) ** (-0.5 * p) * tail


@dataclass(frozen=True)
class LocalizedMoment:
    value: float
    bound: float
    mass: float
    envelope_ratio: float

    @property
    def margin(self) -> float:
        return self.bound - self.value


def localized_moment_check(score: ScoreField, X, p: float) -> LocalizedMoment:
    """``int_X |S_v|^p dnu`` against the rearranged Gaussian tail.

    ``envelope_ratio`` is ``tau^{p/2} value / (a log(2/a)^{p/2})``, the measured
    constant in the logarithmic envelope; it is reported, not bounded.
    """
    if not p >= 1:
        raise DomainError("moment order must be >= 1")
    if isinstance(score, GaussianScoreField):
        val, a = 0.0, 0.0
        for lo, hi in X.intervals:
            val += score._integrate(lambda u: np.abs(score.profile(u)) ** p, lo, hi)
            a += float(phi_cdf(hi / score._std) - phi_cdf(lo / score._std))
    else:
        mask = score._mask(X)
        val = float(np.dot(score.weights[mask], np.abs(score.values[mask]) ** p))
        a = float(score.weights[mask].sum())
    a = min(max(a, 0.0), 1.0)
    env = score.tau ** (0.5 * p) * val / (a * math.log(2.0 / a) ** (0.5 * p)) if a > 0 else math.nan
    return LocalizedMoment(val, localized_bound(a, p, score.tau), a, env)


def two_sided_tail_set(score: GaussianScoreField, a: float) -> IntervalSet:
    """``{|S_v| >= b_a / sqrt(2 tau)}`` in the Euclidean coordinate ``u``; it has mass ``a``."""
    b = float(phi_quantile(1.0 - 0.5 * a))
    u = score._std * b
    return IntervalSet(((-math.inf, -u), (u, math.inf)))


# ---------------------------------------------------------------------------
# averaged heat-kernel bound


def set_volume(E: IntervalSet, flow: ModelFlow, t: float) -> float:
    """``|E|_{g_t}`` for an interval set (length on lines and circles, area on zonal grids)."""
    g = flow.grid
    total = 0.0
    if g.kind == "zonal":
        vol = flow.metric_at(t).cell_volume
        e = g.edges
        for a, b in E.normalized(flow).intervals:
            lo = np.clip(a, e[:-1], e[1:])
            hi = np.clip(b, e[:-1], e[1:])
            if g.dim == 2:
                frac = (np.cos(lo) - np.cos(hi)) / (np.cos(e[:-1]) - np.cos(e[1:]))
            else:
                frac = (hi - lo) / g.h
            total += float(np.dot(vol, frac))
        return total
    for a, b in E.normalized(flow).intervals:
        total += b - a
    return total


@dataclass(frozen=True)
class AverageBound:
    mass: float
    bound: float
    average: float | None = None
    average_bound: float | None = None

    @property
    def margin(self) -> float:
        return self.bound - self.mass

    @property
    def average_margin(self) -> float | None:
        if self.average is None:
            return None
        return self.average_bound - self.average


def average_hk_upper_check(measure: KernelMeasure, A: IntervalSet, B: IntervalSet, beta: float,
                           v0: float | None = None, tol: float = 1e-12) -> AverageBound:
    """``int_A K dg_s <= 1 - Phi(Phi^{-1}(beta) + D / sqrt(2 tau))`` and its volume average.

    Raises:
        PreconditionError: if ``beta`` exceeds ``nu(B)``, the sets touch, or
            ``|A|`` is below the supplied floor ``v0 tau^{n/2}``.
    """
    nb = nu_measure(B, measure)
    if not 0 < beta <= nb + tol:
        raise PreconditionError(f"need 0 < beta <= nu(B) = {nb:.6g}")
    D = set_distance(A, B, measure.flow, measure.s)
    if not D > 0:
        raise PreconditionError("the sets must be at positive distance")
    mass = nu_measure(A, measure)
    bound = one_sided_bound(beta, D, measure.tau)
    if v0 is None:
        return AverageBound(mass, bound)
    n = measure.gaussian.n if measure.gaussian is not None else measure.flow.n
    floor = v0 * measure.tau ** (0.5 * n)
    vol = set_volume(A, measure.flow, measure.s)
    if vol < floor:
        raise PreconditionError(f"|A| = {vol:.6g} is below the floor {floor:.6g}")
    return AverageBound(mass, bound, mass / vol, bound / floor)
