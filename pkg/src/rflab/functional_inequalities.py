"""Functional inequalities derived from the Gaussian profile.

Observables are either grid fields on a :class:`KernelMeasure` or, on
Euclidean closed-form measures, pairs ``(h, dh)`` of callables of the first
coordinate.  Grid fields are read as piecewise-linear functions of the reduced
coordinate, which makes their distribution function ``mu(r) = nu(h > r)``
continuous and lets the level integrals be evaluated exactly for that model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator
from scipy.linalg import eigh_tridiagonal
from scipy.linalg.lapack import dgtsv

from .errors import ConvergenceError, DomainError, PreconditionError, UnsupportedFlowError
from .flow_geometry import (EuclideanFlow, ModelFlow, RoundSphereFlow, TorusFlow, field_values,
                            gradient_norm, sphere_area)
from .gaussian_model import lambda_p, phi_cdf, phi_pdf, phi_quantile, profile_I
from .heat_kernel import (GaussianMeasure, KernelMeasure, adjoint_masses, evaluation_weights,
                          propagate, wrapped_gaussian_density)
from .isoperimetry import IntervalSet, nu_measure

ENTROPY_FLOOR = 1e-300


@dataclass(frozen=True)
class Comparison:
    """One inequality ``lhs <= rhs`` (``sense="<="``) or ``lhs >= rhs``."""

    name: str
    lhs: float
    rhs: float
    sense: str = "<="
    tol: float = 0.0

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs if self.sense == "<=" else self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tol

    @property
    def ratio(self) -> float:
        small, big = (self.lhs, self.rhs) if self.sense == "<=" else (self.rhs, self.lhs)
        return small / big if big != 0 else (0.0 if small == 0 else math.inf)

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "sense": self.sense,
                "margin": self.margin, "tol": self.tol, "holds": bool(self.holds)}


def _is_pair(h) -> bool:
    return isinstance(h, tuple) and len(h) == 2 and callable(h[0])


def _gaussian(measure: KernelMeasure) -> GaussianMeasure:
    if measure.gaussian is None:
        raise DomainError("callable observables need a closed-form Euclidean measure")
    return measure.gaussian


def _line_expect(measure: KernelMeasure, fn: Callable, lo=-math.inf, hi=math.inf,
                 points: Sequence[float] = ()) -> float:
    return _gaussian(measure).line_expect(fn, lo, hi, points)


def expect(h, measure: KernelMeasure, power: float = 1.0, gradient: bool = False) -> float:
    """``int |h|^power dnu`` (or of ``|grad h|`` when ``gradient``)."""
    if _is_pair(h):
        fn = h[1] if gradient else h[0]
        return _line_expect(measure, lambda y: np.abs(fn(y)) ** power)
    vals = gradient_norm(h, measure.metric).values if gradient else field_values(h, measure.grid)
    return float(np.dot(measure.masses, np.abs(vals) ** power))


def _values_expect(h, measure: KernelMeasure, fn: Callable) -> float:
    if _is_pair(h):
        return _line_expect(measure, lambda y: fn(h[0](y)))
    return float(np.dot(measure.masses, fn(field_values(h, measure.grid))))


# ---------------------------------------------------------------------------
# distribution functions


class LevelProfile:
    """``mu(r) = nu(h > r)`` and its rate ``-mu'(r)`` for an observable."""

    def __init__(self, h, measure: KernelMeasure, samples: int = 4001):
        self.measure = measure
        self.tau = measure.tau
        if _is_pair(h):
            gm = _gaussian(measure)
            c, sd = gm.center[0], gm.std
            self._fn, self._dfn = h
            self.xs = np.linspace(c - 12 * sd, c + 12 * sd, samples)
            self.hs = np.asarray(self._fn(self.xs), dtype=float)
            self.kind = "line-exact"
            self._pair = True
        else:
            g = measure.grid
            vals = field_values(h, g)
            x = g.centers
            if g.kind == "periodic":
                self.xs = np.concatenate([x, [x[0] + g.length]])
                self.hs = np.concatenate([vals, [vals[0]]])
            else:
                self.xs, self.hs = x, vals
            self.kind = g.kind
            self._pair = False
        ext = np.sign(np.diff(self.hs))
        turn = np.nonzero(ext[1:] * ext[:-1] < 0)[0] + 1
        crit = self.hs[turn] if self._pair else self.hs
        self.r_min, self.r_max = float(self.hs.min()), float(self.hs.max())
        br = np.unique(np.concatenate([[self.r_min, self.r_max], crit]))
        self.breaks = br[(br >= self.r_min) & (br <= self.r_max)]

    # crossings of the piecewise model
    def _crossings(self, r: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, b = self.hs[:-1] - r, self.hs[1:] - r
        # a sample exactly at the level counts as below it
        idx = np.nonzero((a > 0) != (b > 0))[0]
        x0, x1 = self.xs[idx], self.xs[idx + 1]
        frac = a[idx] / (a[idx] - b[idx])
        xc = x0 + frac * (x1 - x0)
        if self._pair:
            xc = np.array([optimize.brentq(lambda y: float(self._fn(np.array([y]))[0]) - r, p, q, xtol=1e-15)
                           for p, q in zip(x0, x1)])
            slope = np.abs(np.asarray(self._dfn(xc), dtype=float))
        else:
            slope = np.abs(b[idx] - a[idx]) / (x1 - x0)
        up = b[idx] > a[idx]  # h increases through the crossing
        return xc, slope, up

    def _reduced_density(self, x: np.ndarray) -> np.ndarray:
        """``d nu / d x`` in the reduced coordinate, consistent with :meth:`mass_above`."""
        m = self.measure
        if self._pair:
            gm = m.gaussian
            return phi_pdf((x - gm.center[0]) / gm.std) / gm.std
        g = m.grid
        if m.density_fn is not None:
            d = np.asarray(m.density_fn(x), dtype=float)
            if g.kind == "zonal":
                v = m.flow.factor(m.s, x)
                d = d * sphere_area(g.dim - 1) * np.sin(x) ** (g.dim - 1) * v ** (0.5 * g.dim)
            return d
        e = g.edges
        xx = g.lo + np.mod(x - g.lo, g.length) if g.kind == "periodic" else x
        i = np.clip(np.searchsorted(e, xx, side="right") - 1, 0, g.size - 1)
        if g.kind == "zonal" and g.dim == 2:
            return m.masses[i] * np.sin(xx) / (np.cos(e[i]) - np.cos(e[i + 1]))
        return m.masses[i] / g.h

    def superlevel(self, r: float) -> IntervalSet:
        xc, _, up = self._crossings(r)
        lo, hi = (-math.inf, math.inf)
        if not self._pair:
            g = self.measure.grid
            if g.kind == "periodic":
                lo, hi = self.xs[0], self.xs[-1]
            elif g.kind == "zonal":
                lo, hi = 0.0, math.pi
        ivs = []
        start = lo if self.hs[0] > r else None
        for x, u in zip(xc, up):
            if u:
                start = x
            elif start is not None:
                ivs.append((start, x))
                start = None
        if start is not None:
            ivs.append((start, hi))
        if not self._pair and self.measure.grid.kind == "periodic":
            return IntervalSet(tuple(ivs)).normalized(self.measure.flow)
        return IntervalSet(tuple(ivs))

    def mass_above(self, r: float) -> float:
        if r < self.r_min:
            return 1.0
        if r >= self.r_max:
            return 0.0
        E = self.superlevel(r)
        if self._pair:
            gm = self.measure.gaussian
            return float(sum(gm.slab_mass(a, b) for a, b in E.intervals))
        return float(sum(self.measure.interval_mass(a, b) for a, b in E.intervals))

    def rate(self, r: float) -> float:
        """``-mu'(r) = sum over crossings of (d nu/dx) / |dh/dx|``."""
        if not self.r_min < r < self.r_max:
            return 0.0
        xc, slope, _ = self._crossings(r)
        if xc.size == 0:
            return 0.0
        return float(np.sum(self._reduced_density(xc) / slope))

    def level_integral(self, fn: Callable[[float], float], order: int = 6) -> float:
        """``int fn(r) dr`` over ``[r_min, r_max]``, Gauss-Legendre between breakpoints."""
        if self._pair:
            return integrate.quad(fn, self.r_min, self.r_max, points=list(self.breaks[1:-1]) or None,
                                  epsabs=1e-13, epsrel=1e-11, limit=1000)[0]
        x, w = np.polynomial.legendre.leggauss(order)
        br = self.breaks
        total = 0.0
        for a, b in zip(br[:-1], br[1:]):
            if b - a <= 1e-15 * max(1.0, abs(a)):
                continue
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            total += half * sum(wi * fn(mid + half * xi) for xi, wi in zip(x, w))
        return total


# ---------------------------------------------------------------------------
# coarea, rearrangement, Polya-Szego


def coarea_profile_check(h, measure: KernelMeasure, tol: float = 0.0) -> Comparison:
    """``int |grad h| dnu >= (2 tau)^{-1/2} int I(nu(h > r)) dr``."""
    prof = LevelProfile(h, measure)
    rhs = prof.level_integral(lambda r: float(profile_I(min(max(prof.mass_above(r), 0.0), 1.0))))
    rhs /= math.sqrt(2.0 * measure.tau)
    return Comparison("coarea", expect(h, measure, 1.0, gradient=True), rhs, ">=", tol)


@dataclass
class RearrangedFunction:
    """Nonincreasing ``h°`` on the line with ``gamma_tau = N(0, 2 tau)``.

    ``values`` decrease and ``breakpoints`` increase.  For ``kind="step"``
    (grid fields, read as discrete distributions) ``h°`` equals ``values[k]``
    on ``(breakpoints[k-1], breakpoints[k]]`` with ``breakpoints[-1] = inf``
    implied.  For ``kind="smooth"`` (callable observables) it is the monotone
    cubic interpolant through ``(breakpoints, values)``, constant beyond the
    table at ``r_max`` and ``r_min``.
    """

    values: np.ndarray
    breakpoints: np.ndarray
    tau: float
    kind: str
    r_min: float
    r_max: float

    def __post_init__(self):
        self._interp = None
        if self.kind == "smooth" and self.breakpoints.size >= 2:
            self._interp = PchipInterpolator(self.breakpoints, self.values, extrapolate=False)

    @property
    def std(self) -> float:
        return math.sqrt(2.0 * self.tau)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "step":
            k = np.searchsorted(self.breakpoints, z, side="left")
            return self.values[np.minimum(k, self.values.size - 1)]
        if self._interp is None:
            return np.full(z.shape, self.r_max)
        out = self._interp(z)
        out = np.where(z < self.breakpoints[0], self.r_max, out)
        return np.where(z > self.breakpoints[-1], self.r_min, out)

    def _gamma_masses(self) -> np.ndarray:
        cdf = np.concatenate([[0.0], phi_cdf(self.breakpoints[:-1] / self.std), [1.0]])
        return np.diff(cdf)

    def level_mass(self, r: float) -> float:
        """``gamma_tau(h° > r)``, read off the breakpoints."""
        if r < self.r_min:
            return 1.0
        if r >= self.r_max:
            return 0.0
        if self.kind == "step":
            return float(self._gamma_masses()[self.values > r].sum())
        z, vals = self.breakpoints, self.values
        k = int(np.searchsorted(-vals, -r, side="left"))  # first table value <= r
        if k == 0:
            return float(phi_cdf(z[0] / self.std))
        if k >= z.size:
            return float(phi_cdf(z[-1] / self.std))
        zr = optimize.brentq(lambda t: float(self._interp(t)) - r, z[k - 1], z[k], xtol=1e-14)
        return float(phi_cdf(zr / self.std))

    def lp_norm(self, p: float, order: int = 8) -> float:
        """``||h°||_{L^p(gamma_tau)}`` (exact on steps, piecewise Gauss-Legendre otherwise)."""
        if self.kind == "step":
            return float(np.dot(self._gamma_masses(), np.abs(self.values) ** p)) ** (1.0 / p)
        if self._interp is None:
            return abs(self.r_max)
        z = self.breakpoints
        total = (float(phi_cdf(z[0] / self.std)) * abs(self.r_max) ** p
                 + float(phi_cdf(-z[-1] / self.std)) * abs(self.r_min) ** p)
        # Gauss-Legendre on every interpolation interval, split where h° changes sign
        sign = np.nonzero(np.diff(np.sign(self.values)) != 0)[0]
        roots = [optimize.brentq(self._interp, z[k], z[k + 1], xtol=1e-15) for k in sign]
        cuts = np.unique(np.concatenate([z, roots]))
        x, w = np.polynomial.legendre.leggauss(order)
        mid, half = 0.5 * (cuts[1:] + cuts[:-1]), 0.5 * np.diff(cuts)
        nodes = mid[:, None] + half[:, None] * x[None, :]
        f = np.abs(self._interp(nodes)) ** p * phi_pdf(nodes / self.std) / self.std
        total += float(np.sum(half[:, None] * w[None, :] * f))
        return total ** (1.0 / p)


def gaussian_rearrange(h, measure: KernelMeasure, levels: int = 512, refine: int = 6) -> RearrangedFunction:
    """Gaussian rearrangement of ``h`` with respect to ``gamma_tau``.

    Grid fields are rearranged as discrete distributions: the sorted values
    become a step function whose steps carry the matching cell masses.  For
    callable observables the distribution function is tabulated on ``levels``
    equispaced levels, bisected wherever ``nu(h > r)`` jumps by more than
    ``1 / (8 levels)``.
    """
    sd = math.sqrt(2.0 * measure.tau)
    if not _is_pair(h):
        vals = field_values(h, measure.grid)
        order = np.argsort(-vals, kind="stable")
        v, m = vals[order], measure.masses[order]
        uniq, start = np.unique(-v, return_index=True)
        v = -uniq
        m = np.add.reduceat(m, start)
        cum = np.cumsum(m) / m.sum()
        z = np.append(sd * phi_quantile(np.clip(cum[:-1], 1e-300, 1.0 - 1e-16)), math.inf)
        return RearrangedFunction(v, z, measure.tau, "step", float(v[-1]), float(v[0]))
    prof = LevelProfile(h, measure)
    if prof.r_max - prof.r_min <= 0:
        return RearrangedFunction(np.array([prof.r_min]), np.array([math.inf]), measure.tau, "step",
                                  prof.r_min, prof.r_max)
    r = np.unique(np.concatenate([np.linspace(prof.r_min, prof.r_max, levels), prof.breaks]))
    mu = np.array([prof.mass_above(x) for x in r])
    for _ in range(refine):
        big = np.nonzero(np.abs(np.diff(mu)) > 1.0 / (8 * levels))[0]
        if big.size == 0:
            break
        mids = 0.5 * (r[big] + r[big + 1])
        r = np.concatenate([r, mids])
        mu = np.concatenate([mu, [prof.mass_above(x) for x in mids]])
        order = np.argsort(r)
        r, mu = r[order], mu[order]
    inner = (mu > 0) & (mu < 1)
    z = sd * phi_quantile(mu[inner])
    # higher levels have less mass above them, so z decreases along r
    z, keep = np.unique(z, return_index=True)
    return RearrangedFunction(r[inner][keep], z, measure.tau, "smooth", prof.r_min, prof.r_max)


def equimeasurability_error(h, measure: KernelMeasure, rearranged: RearrangedFunction,
                            levels: Sequence[float]) -> float:
    """Largest ``|gamma_tau(h° > r) - nu(h > r)|`` over the given levels.

    Grid fields are compared with their discrete distribution, the one that
    :func:`gaussian_rearrange` rearranges.
    """
    if _is_pair(h):
        prof = LevelProfile(h, measure)
        return max(abs(rearranged.level_mass(r) - prof.mass_above(r)) for r in levels)
    vals = field_values(h, measure.grid)
    return max(abs(rearranged.level_mass(r) - float(measure.masses[vals > r].sum())) for r in levels)


def polya_szego_check(h, measure: KernelMeasure, p: float, tol: float = 0.0) -> Comparison:
    """``int |(h°)'|^p dgamma_tau <= int |grad h|^p dnu``.

    The left side is the one-dimensional coarea integral
    ``int ((2 tau)^{-1/2} I(mu))^p (-mu')^{1-p} dr``, which is exactly the
    Gaussian energy of the rearrangement.
    """
    if not p >= 1:
        raise DomainError("p must be >= 1")
    prof = LevelProfile(h, measure)
    sq = math.sqrt(2.0 * measure.tau)

    def integrand(r):
        per = float(profile_I(min(max(prof.mass_above(r), 0.0), 1.0))) / sq
        if p == 1:
            return per
        rate = prof.rate(r)
        return per ** p * rate ** (1.0 - p) if rate > 0 else 0.0

    lhs = prof.level_integral(integrand)
    return Comparison(f"polya-szego p={p:g}", lhs, expect(h, measure, p, gradient=True), "<=", tol)


# ---------------------------------------------------------------------------
# entropy and log-Sobolev


def entropy(w, measure: KernelMeasure) -> float:
    """``Ent_nu(w)`` with ``0 log 0 = 0``."""
    xlogx = lambda v: np.where(v > 0, v * np.log(np.maximum(v, ENTROPY_FLOOR)), 0.0)
    if _is_pair(w):
        mean = _line_expect(measure, w[0])
        return _line_expect(measure, lambda y: xlogx(np.asarray(w[0](y)))) - float(xlogx(np.array(mean)))
    v = field_values(w, measure.grid)
    if np.any(v < 0):
        raise DomainError("entropy needs a nonnegative function")
    mean = float(np.dot(measure.masses, v))
    return float(np.dot(measure.masses, xlogx(v))) - float(xlogx(np.array(mean)))


def lsi_check(u, measure: KernelMeasure, tol: float = 0.0) -> Comparison:
    """``Ent_nu(u^2) <= 4 tau int |grad u|^2 dnu``."""
    if _is_pair(u):
        fn, dfn = u
        sq = (lambda y: fn(y) ** 2, lambda y: 2.0 * fn(y) * dfn(y))
        ent = entropy(sq, measure)
    else:
        ent = entropy(field_values(u, measure.grid) ** 2, measure)
    dirichlet = expect(u, measure, 2.0, gradient=True)
    return Comparison("log-sobolev", ent, 4.0 * measure.tau * dirichlet, "<=", tol)


def lsi_w_check(w, measure: KernelMeasure, tol: float = 0.0) -> Comparison:
    """``Ent_nu(w) <= tau int |grad w|^2 / w dnu`` for positive ``w``."""
    if _is_pair(w):
        fn, dfn = w
        xs = np.linspace(measure.gaussian.center[0] - 12 * measure.gaussian.std,
                         measure.gaussian.center[0] + 12 * measure.gaussian.std, 2001)
        if np.any(fn(xs) <= 0):
            raise DomainError("the w-form needs w > 0")
        fisher = _line_expect(measure, lambda y: dfn(y) ** 2 / fn(y))
    else:
        v = field_values(w, measure.grid)
        if np.any(v <= 0):
            raise DomainError("the w-form needs w > 0")
        g = gradient_norm(v, measure.metric).values
        fisher = float(np.dot(measure.masses, g * g / v))
    return Comparison("log-sobolev (w)", entropy(w, measure), measure.tau * fisher, "<=", tol)


def reverse_lsi_check(f, flow: ModelFlow, x, t: float, s: float, *, step: float | None = None,
                      tol: float = 0.0) -> Comparison:
    """``Ent_nu(f) >= tau |grad_x P_{s,t} f|^2(x) / P_{s,t} f(x)``.

    The basepoint gradient is a central difference of ``x -> int f dnu_{x,t;s}``
    with Richardson extrapolation over ``{step, step/2}``.  Zonal flows are
    based at a pole, where the gradient of an axially symmetric function
    vanishes.
    """
    from .heat_kernel import conjugate_kernel

    tau = t - s
    m = conjugate_kernel(flow, x, t, s)
    ent = entropy(f, m)
    if _is_pair(f):
        if np.any(f[0](np.linspace(-50, 50, 2001)) <= 0):
            raise DomainError("f must be positive")
        c = float(np.atleast_1d(x)[0])
        delta = step or 1e-2
        pf = lambda e: _line_expect(conjugate_kernel(flow, c + e, t, s), f[0])
        val = pf(0.0)
    elif isinstance(flow, TorusFlow):
        v = field_values(f, flow.grid)
        if np.any(v <= 0):
            raise DomainError("f must be positive")
        g = flow.grid
        c = float(np.atleast_1d(x)[0])
        delta = step or 4.0 * g.h

        def pf(e):
            w = wrapped_gaussian_density(g.centers, c + e, tau, g.length) * g.h
            return float(np.dot(w / w.sum(), v))

        val = pf(0.0)
    else:
        v = field_values(f, flow.grid)
        if np.any(v <= 0):
            raise DomainError("f must be positive")
        val = float(np.dot(m.masses, v))
        return Comparison("reverse log-sobolev", ent, 0.0, ">=", tol)
    d1 = (pf(delta) - pf(-delta)) / (2 * delta)
    d2 = (pf(0.5 * delta) - pf(-0.5 * delta)) / delta
    grad = (4 * d2 - d1) / 3
    return Comparison("reverse log-sobolev", ent, tau * grad * grad / val, ">=", tol)


# ---------------------------------------------------------------------------
# Poincare inequalities


def lp_poincare_check(h, measure: KernelMeasure, p: float, tol: float = 0.0) -> Comparison:
    """``||h - nu h||_p <= sqrt(2 tau) Lambda_p ||grad h||_p``.

    For ``p`` outside ``{1, 2}`` the constant is a numerical estimate and the
    comparison name is marked ``approx``.
    """
    const = lambda_p(p)
    mean = _values_expect(h, measure, lambda v: v)
    lhs = _values_expect(h, measure, lambda v: np.abs(v - mean) ** p) ** (1.0 / p)
    rhs = math.sqrt(2.0 * measure.tau) * const.value * expect(h, measure, p, gradient=True) ** (1.0 / p)
    name = f"poincare p={p:g}" + ("" if const.exact else " approx")
    return Comparison(name, lhs, rhs, "<=", tol)


def support_mass(u, measure: KernelMeasure) -> float:
    """``nu(u > 0)``."""
    if _is_pair(u):
        return LevelProfile(u, measure).mass_above(0.0)
    v = field_values(u, measure.grid)
    return float(measure.masses[v > 0].sum())


def small_support_poincare_check(u, measure: KernelMeasure, p: float, a: float | None = None,
                                 tol: float = 0.0) -> Comparison:
    """``||u||_p <= p sqrt(2 tau) (a / I(a)) ||grad u||_p`` for ``u >= 0`` with small support.

    Raises:
        PreconditionError: if the support mass exceeds ``a`` or ``1/2``.
    """
    if not p >= 1:
        raise DomainError("p must be >= 1")
    supp = support_mass(u, measure)
    a = supp if a is None else a
    if supp > a + 1e-12 or a > 0.5:
        raise PreconditionError(f"support mass {supp:.6g} must be <= a <= 1/2 (a={a})")
    vals = _values_expect(u, measure, lambda v: np.minimum(v, 0.0) ** 2)
    if vals > 0:
        raise DomainError("u must be nonnegative")
    lhs = expect(u, measure, p) ** (1.0 / p)
    if a == 0:
        return Comparison("small-support poincare", lhs, 0.0, "<=", tol)
    const = p * math.sqrt(2.0 * measure.tau) * a / float(profile_I(a))
    return Comparison("small-support poincare", lhs, const * expect(u, measure, p, gradient=True) ** (1.0 / p),
                      "<=", tol)


def median_poincare_check(h, measure: KernelMeasure, p: float, tol: float = 0.0) -> Comparison:
    """``||h - m||_p <= p sqrt(pi tau) ||grad h||_p`` with ``m`` a median."""
    if _is_pair(h):
        prof = LevelProfile(h, measure)
        med = optimize.brentq(lambda r: prof.mass_above(r) - 0.5, prof.r_min, prof.r_max, xtol=1e-14)
    else:
        from .isoperimetry import weighted_quantile
        med = weighted_quantile(field_values(h, measure.grid), measure.masses, 0.5)
    lhs = _values_expect(h, measure, lambda v: np.abs(v - med) ** p) ** (1.0 / p)
    rhs = p * math.sqrt(math.pi * measure.tau) * expect(h, measure, p, gradient=True) ** (1.0 / p)
    return Comparison("median poincare", lhs, rhs, "<=", tol)


# ---------------------------------------------------------------------------
# Faber-Krahn


def faber_krahn_bound(a: float, tau: float) -> float:
    """``(1 / 8 tau) (I(a) / a)^2``."""
    return (float(profile_I(a)) / a) ** 2 / (8.0 * tau)


def dirichlet_operator(measure: KernelMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Weighted Dirichlet form ``int |grad u|^2 dnu`` as a symmetric tridiagonal matrix.

    Edge ``i`` (between cells ``i`` and ``i+1``) has weight
    ``flux / h * sqrt(rho_i rho_{i+1})``.  Returns ``(diag, off)`` for the full
    grid; restricting to a run of cells keeps the diagonal, so edges to cells
    outside the run act as zero boundary values.
    """
    g = measure.grid
    metric = measure.metric
    dens = np.maximum(measure.masses / metric.cell_volume, 0.0)
    off = metric.flux[1:-1] / g.h * np.sqrt(dens[:-1] * dens[1:])
    diag = np.zeros(g.size)
    diag[:-1] += off
    diag[1:] += off
    return diag, off


def inverse_iteration(d: np.ndarray, o: np.ndarray, m: np.ndarray, tol: float = 1e-10,
                      max_iter: int = 500) -> float:
    """Smallest eigenvalue of ``A x = lambda M x`` for tridiagonal ``A`` and diagonal ``M``.

    Shift-free inverse power iteration on ``M^{-1/2} A M^{-1/2}``; stops when the
    Rayleigh quotient changes by less than ``tol`` relatively.

    Raises:
        ConvergenceError: after ``max_iter`` iterations.
    """
    s = 1.0 / np.sqrt(m)
    dd = d * s * s
    oo = -o * s[:-1] * s[1:]
    x = np.ones(dd.size) / math.sqrt(dd.size)
    lam_old = math.inf
    for _ in range(max_iter):
        if dd.size == 1:
            return float(dd[0])
        _, _, _, y, info = dgtsv(oo.copy(), dd.copy(), oo.copy(), x.copy())
        if info != 0:
            raise ConvergenceError(f"tridiagonal solve failed (info={info})")
        x = y / np.linalg.norm(y)
        ax = dd * x
        ax[:-1] += oo * x[1:]
        ax[1:] += oo * x[:-1]
        lam = float(np.dot(x, ax))
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    raise ConvergenceError("inverse iteration did not converge")


def _boundary_weight(measure: KernelMeasure, inner: int, outer: int, b: float) -> float:
    """Stiffness of the one-sided edge from the centre of cell ``inner`` to a zero value at ``b``.

    ``outer`` is the neighbouring cell across the boundary; the density on
    the short edge is interpolated geometrically between the two cells.
    """
    g = measure.grid
    c = g.centers
    dens = np.maximum(measure.masses / measure.metric.cell_volume, 0.0)
    edge = max(inner, outer)
    gap = abs(b - c[inner])
    theta = min(0.5 * gap / g.h, 1.0)
    rho = dens[inner] ** (1.0 - theta) * dens[outer] ** theta
    return float(measure.metric.flux[edge] * rho / max(gap, 1e-12 * g.h))


def dirichlet_eigenvalue(Omega: IntervalSet, measure: KernelMeasure, tol: float = 1e-10,
                         method: str = "inverse") -> tuple[float, float]:
    """``(lambda_1, a)``: first Dirichlet eigenvalue of ``Omega`` in ``L^2(nu)`` and ``a = nu(Omega)``.

    The grid Rayleigh quotient uses the cells whose centres lie in ``Omega``
    and edge weights ``flux * sqrt(rho_i rho_{i+1})``.  The zero boundary value
    is imposed at the true endpoint of each interval (a shortened last edge),
    which keeps the eigenvalue second-order accurate.  ``method="eigh"`` uses
    a dense tridiagonal eigensolver instead of inverse iteration.
    """
    g = measure.grid
    if g.kind == "periodic":
        raise UnsupportedFlowError("Dirichlet problems are set up on line and zonal grids")
    c = g.centers
    diag, off = dirichlet_operator(measure)
    best = math.inf
    for lo, hi in Omega.normalized(measure.flow).intervals:
        run = np.nonzero((c >= lo) & (c < hi))[0]
        if run.size == 0:
            continue
        d, o, m = diag[run].copy(), off[run[:-1]], measure.masses[run]
        first, last = int(run[0]), int(run[-1])
        if first > 0:
            d[0] += _boundary_weight(measure, first, first - 1, lo) - off[first - 1]
        if last < g.size - 1:
            d[-1] += _boundary_weight(measure, last, last + 1, hi) - off[last]
        if method == "eigh":
            s = 1.0 / np.sqrt(m)
            lam = float(eigh_tridiagonal(d * s * s, -o * s[:-1] * s[1:], eigvals_only=True,
                                         select="i", select_range=(0, 0))[0])
        else:
            lam = inverse_iteration(d, o, m, tol)
        best = min(best, lam)
    return best, nu_measure(Omega, measure)


def faber_krahn_check(Omega: IntervalSet, measure: KernelMeasure, tol: float = 1e-10) -> Comparison:
    """``lambda_1(Omega) >= (1/8 tau)(I(a)/a)^2`` with ``a = nu(Omega) <= 1/2``."""
    lam, a = dirichlet_eigenvalue(Omega, measure, tol)
    if not 0 < a <= 0.5 + 1e-12:
        raise PreconditionError(f"nu(Omega) = {a:.6g} must lie in (0, 1/2]")
    return Comparison(f"faber-krahn a={a:.4g}", lam, faber_krahn_bound(min(a, 0.5), measure.tau), ">=", 0.0)


def faber_krahn_log_ratio(eigenvalue: float, a: float, tau: float) -> float:
    """``4 tau lambda_1 / log(1/a)``; the small-mass asymptotic says its liminf is at least one."""
    return 4.0 * tau * eigenvalue / math.log(1.0 / a)


# ---------------------------------------------------------------------------
# reverse hypercontractivity


@dataclass(frozen=True)
class ExponentSchedule:
    """Exponents ``0 < p <= q < 1`` and gaps ``tau1 < tau2`` (``s_i = t0 - tau_i``).

    ``alpha(t) = 1 - c/(t0 - t)`` with ``c = (1 - q) tau2`` runs from ``q`` at
    ``s_2`` to ``p`` at the gap ``tau1' = tau2 (1 - q)/(1 - p)``.

    Raises:
        PreconditionError: if ``tau2 / tau1 < (1 - p)/(1 - q)``.
    """

    p: float
    q: float
    tau1: float
    tau2: float

    def __post_init__(self):
        if not (0 < self.p <= self.q < 1):
            raise DomainError("need 0 < p <= q < 1")
        if not (0 < self.tau1 <= self.tau2):
            raise DomainError("need 0 < tau1 <= tau2")
        need = (1.0 - self.p) / (1.0 - self.q)
        if self.tau2 / self.tau1 < need * (1.0 - 1e-12):
            raise PreconditionError(
                f"reverse hypercontractivity needs tau2/tau1 >= (1-p)/(1-q) = {need:.6g}, "
                f"got {self.tau2 / self.tau1:.6g}")

    @property
    def threshold(self) -> float:
        return (1.0 - self.p) / (1.0 - self.q)

    @property
    def c(self) -> float:
        return (1.0 - self.q) * self.tau2

    @property
    def tau1_prime(self) -> float:
        return self.tau2 * (1.0 - self.q) / (1.0 - self.p)

    def alpha_gap(self, gap: float) -> float:
        """Exponent at ``t0 - t = gap``: ``alpha`` on ``[tau1', tau2]`` and ``p`` after."""
        if gap >= self.tau1_prime:
            return 1.0 - self.c / gap
        return self.p


def lp_norm_weighted(u: np.ndarray, masses: np.ndarray, alpha: float) -> float:
    if np.any(u <= 0):
        raise DomainError("reverse hypercontractivity needs positive data")
    return float(np.dot(masses, u ** alpha)) ** (1.0 / alpha)


@dataclass
class ReverseHCReport:
    early: float   # ||u(s_1)||_{L^p(nu_{s_1})}
    late: float    # ||u(s_2)||_{L^q(nu_{s_2})}
    times: np.ndarray
    norms: np.ndarray
    exponents: np.ndarray
    tol: float

    @property
    def margin(self) -> float:
        return self.early - self.late

    @property
    def monotone_violation(self) -> float:
        d = np.diff(self.norms)
        return float(max(0.0, -d.min())) if d.size else 0.0

    @property
    def holds(self) -> bool:
        return self.margin >= -self.tol and self.monotone_violation <= self.tol


def reverse_hypercontractivity_check(flow: ModelFlow, x0, t0: float, u0, schedule: ExponentSchedule,
                                     steps: int = 40, tol: float = 1e-9) -> ReverseHCReport:
    """Evolve ``u0`` from ``s_2 = t0 - tau2`` to ``s_1 = t0 - tau1`` and compare norms.

    The intermediate quantity ``||u(t)||_{L^{alpha(t)}(nu_t)}`` is recorded on
    ``steps + 1`` times and should be nondecreasing.  ``u0`` is a grid field
    or, on Euclidean space, a callable of the first coordinate evaluated by
    nested Gauss-Hermite quadrature.
    """
    s2, s1 = t0 - schedule.tau2, t0 - schedule.tau1
    times = np.linspace(s2, s1, steps + 1)
    if isinstance(flow, EuclideanFlow) and callable(u0):
        x, w = special.roots_hermitenorm(96)
        w = w / w.sum()
        c = float(np.atleast_1d(x0)[0])
        norms = []
        for t in times:
            gap = t0 - t
            y = c + math.sqrt(2.0 * gap) * x
            el = t - s2
            u = np.array([np.dot(w, u0(yy + math.sqrt(2.0 * el) * x)) for yy in y]) if el > 0 else u0(y)
            norms.append(lp_norm_weighted(np.asarray(u), w, schedule.alpha_gap(gap)))
    else:
        vals = field_values(u0, flow.grid)
        snaps = propagate(flow, vals, s2, s1, record=list(times))
        masses = adjoint_masses(flow, evaluation_weights(flow, x0), s2, t0, record=list(times))
        norms = [lp_norm_weighted(u, m, schedule.alpha_gap(t0 - t)) for u, m, t in zip(snaps, masses, times)]
    norms = np.array(norms)
    alphas = np.array([schedule.alpha_gap(t0 - t) for t in times])
    return ReverseHCReport(float(norms[-1]), float(norms[0]), times, norms, alphas, tol)


def flat_model_norms(lam: float, schedule: ExponentSchedule) -> tuple[float, float]:
    """Closed forms ``(exp(lam^2 (tau2 + (p-1) tau1)), exp(q lam^2 tau2))`` for ``u = e^{lam y}``."""
    p, q, t1, t2 = schedule.p, schedule.q, schedule.tau1, schedule.tau2
    return math.exp(lam * lam * (t2 + (p - 1.0) * t1)), math.exp(q * lam * lam * t2)


def fixed_exponent_norms(flow: ModelFlow, x0, t0: float, u0, s: float, t: float, p: float,
                         steps: int = 40) -> np.ndarray:
    """``r -> ||u(r)||_{L^p(nu_r)}`` on ``[s, t]``; nondecreasing for ``0 < p < 1``."""
    times = np.linspace(s, t, steps + 1)
    snaps = propagate(flow, field_values(u0, flow.grid), s, t, record=list(times))
    masses = adjoint_masses(flow, evaluation_weights(flow, x0), s, t0, record=list(times))
    return np.array([lp_norm_weighted(u, m, p) for u, m in zip(snaps, masses)])
