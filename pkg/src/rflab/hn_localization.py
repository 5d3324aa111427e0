"""Localization of conjugate heat-kernel measures around ``H_n``-centers.

An ``H_n``-center is a point ``z`` whose ``nu``-averaged squared distance is at
most ``H_n tau``.  Around such a point the one-sided concentration estimate
gives Gaussian-profile tails for the distance, quantile bounds and
half-Gaussian exponential moments of the excess distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats

from .errors import DivergenceError, DomainError, RFLabError
from .gaussian_model import (halfgaussian_exp_moment, halfgaussian_square_moment, phi_cdf,
                             phi_quantile)
from .heat_kernel import KernelMeasure
from .isoperimetry import weighted_quantile


class CenterFailure(RFLabError):
    """The defining second-moment inequality failed at the computed minimiser."""


def hn_constant(n: int) -> float:
    """``4 + (n - 1) pi^2 / 2``."""
    if int(n) != n or n < 1:
        raise DomainError(f"dimension must be a positive integer, got {n}")
    return 4.0 + 0.5 * (n - 1) * math.pi ** 2


@dataclass(frozen=True)
class HnCenter:
    point: tuple[float, ...]
    second_moment: float
    hn: float
    tau: float

    @property
    def radius(self) -> float:
        """``sqrt(2 H_n tau)``, the offset in every tail bound."""
        return math.sqrt(2.0 * self.hn * self.tau)

    @property
    def holds(self) -> bool:
        return self.second_moment <= self.hn * self.tau


def _grid_distances(measure: KernelMeasure, z: float) -> np.ndarray:
    g = measure.grid
    c = g.centers
    if g.kind == "zonal":
        s = measure.flow.arclength(measure.s, c)
        if z == 0.0:
            return s
        if z == math.pi:
            return float(measure.flow.arclength(measure.s, math.pi)) - s
        raise DomainError("zonal centres are searched on the symmetry axis (the poles)")
    if g.kind == "periodic":
        d = np.abs(np.mod(c - z + 0.5 * g.length, g.length) - 0.5 * g.length)
        return d
    return np.abs(c - z)


def distance_samples(measure: KernelMeasure, center: HnCenter) -> np.ndarray:
    """``d_s(z, y)`` at the grid nodes."""
    return _grid_distances(measure, center.point[0])


def _grid_moment(measure: KernelMeasure, z: float) -> float:
    return float(np.dot(measure.masses, _grid_distances(measure, z) ** 2))


def find_hn_center(measure: KernelMeasure, strict: bool = True) -> HnCenter:
    """Minimise ``z -> int d_s(z, .)^2 dnu`` and check the defining inequality.

    Closed-form Euclidean measures have their centre at the mean with second
    moment ``2 n tau``.  Zonal measures are searched on the axis (the two
    poles); line and circle grids by a grid scan followed by a bounded
    scalar refinement between the neighbouring nodes.

    Raises:
        CenterFailure: if ``strict`` and the minimum exceeds ``H_n tau``.
    """
    tau = measure.tau
    gm = measure.gaussian
    if gm is not None:
        hn = hn_constant(gm.n)
        z, m2 = tuple(gm.center), 2.0 * gm.n * tau
    else:
        g = measure.grid
        hn = hn_constant(g.dim if g.kind == "zonal" else measure.flow.n)
        if g.kind == "zonal":
            cands = [0.0, math.pi]
            vals = [_grid_moment(measure, p) for p in cands]
            k = int(np.argmin(vals))
            z, m2 = (cands[k],), vals[k]
        else:
            c = g.centers
            vals = np.array([_grid_moment(measure, p) for p in c])
            k = int(np.argmin(vals))
            lo = c[k] - g.h if (k > 0 or g.kind == "periodic") else c[0]
            hi = c[k] + g.h if (k < g.size - 1 or g.kind == "periodic") else c[-1]
            res = optimize.minimize_scalar(lambda p: _grid_moment(measure, p), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-10})
            if res.fun < vals[k]:
                z, m2 = (float(res.x),), float(res.fun)
            else:
                z, m2 = (float(c[k]),), float(vals[k])
    center = HnCenter(z, m2, hn, tau)
    if strict and not center.holds:
        raise CenterFailure(f"second moment {m2:.6g} exceeds H_n tau = {hn * tau:.6g}")
    return center


def basepoint_moment(measure: KernelMeasure) -> float:
    """Second moment about the basepoint itself (an upper bound for the minimum)."""
    if measure.gaussian is not None:
        return 2.0 * measure.gaussian.n * measure.tau
    return _grid_moment(measure, float(np.atleast_1d(measure.x0)[0]))


# ---------------------------------------------------------------------------
# tails


def profile_tail_bound(r: float, A: float, hn: float, tau: float) -> float:
    """``1 - Phi(Phi^{-1}(1 - 1/A) + (r - sqrt(A H_n tau))/sqrt(2 tau))`` for ``r >= sqrt(A H_n tau)``."""
    if not A > 1:
        raise DomainError("A must exceed 1")
    ra = math.sqrt(A * hn * tau)
    if r < ra * (1.0 - 1e-12):
        raise DomainError("the profile form needs r >= sqrt(A H_n tau)")
    return 1.0 - float(phi_cdf(phi_quantile(1.0 - 1.0 / A) + max(r - ra, 0.0) / math.sqrt(2.0 * tau)))


def best_profile_tail_bound(r: float, hn: float, tau: float) -> tuple[float, float]:
    """Optimise the profile form over admissible ``A``; returns ``(bound, A)``."""
    a_max = r * r / (hn * tau)
    if a_max <= 1.0:
        return 1.0, math.nan
    grid = 1.0 + (a_max - 1.0) * np.linspace(1e-6, 1.0, 400)
    vals = np.array([profile_tail_bound(r, A, hn, tau) for A in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda A: profile_tail_bound(r, A, hn, tau), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    if res.fun < vals[k]:
        return float(res.fun), float(res.x)
    return float(vals[k]), float(grid[k])


def median_tail_bound(r: float, hn: float, tau: float) -> float:
    c = math.sqrt(2.0 * hn * tau)
    if r < c:
        return 1.0
    return float(phi_cdf(-(r - c) / math.sqrt(2.0 * tau)))


def exp_tail_bound(r: float, hn: float, tau: float) -> float:
    c = math.sqrt(2.0 * hn * tau)
    return math.exp(-max(r - c, 0.0) ** 2 / (4.0 * tau))


@dataclass(frozen=True)
class TailRow:
    radius: float
    tail: float
    profile: float
    median: float
    exponential: float

    @property
    def holds(self) -> bool:
        return self.tail <= min(self.profile, self.median, self.exponential)

    @property
    def ordered(self) -> bool:
        return self.profile <= self.median + 1e-15 and self.median <= self.exponential + 1e-15


def distance_tail(measure: KernelMeasure, center: HnCenter, r: float) -> float:
    """``nu(M minus B_s(z, r)) = nu(d_s(z, .) >= r)``."""
    gm = measure.gaussian
    if gm is not None:
        return float(1.0 - gm.radial_cdf(r, about=center.point))
    d = distance_samples(measure, center)
    return float(np.sum(measure.masses[d >= r]))


def hn_tail_check(center: HnCenter, measure: KernelMeasure, radii: Sequence[float]) -> list[TailRow]:
    """Tabulate the distance tail against the profile, median and exponential bounds."""
    rows = []
    for r in radii:
        r = float(r)
        prof = best_profile_tail_bound(r, center.hn, center.tau)[0]
        rows.append(TailRow(r, distance_tail(measure, center, r), prof,
                            median_tail_bound(r, center.hn, center.tau),
                            exp_tail_bound(r, center.hn, center.tau)))
    return rows


# ---------------------------------------------------------------------------
# quantiles and moments


def distance_quantile(measure: KernelMeasure, center: HnCenter, b: float) -> float:
    """``inf{r : nu(B_s(z, r)) >= b}``."""
    gm = measure.gaussian
    if gm is not None:
        if tuple(center.point) != tuple(gm.center):
            return float(optimize.brentq(lambda r: gm.radial_cdf(r, about=center.point) - b,
                                         0.0, 100.0 * gm.std))
        return gm.radial_quantile(b)
    return weighted_quantile(distance_samples(measure, center), measure.masses, b)


def quantile_localization_check(center: HnCenter, measure: KernelMeasure,
                                bs: Sequence[float]) -> list[tuple[float, float, float]]:
    """Rows ``(b, q_b, sqrt(2 H_n tau) + sqrt(2 tau) Phi^{-1}(b))``."""
    rows = []
    for b in bs:
        if not 0.5 <= b < 1:
            raise DomainError("quantile levels must lie in [1/2, 1)")
        bound = center.radius + math.sqrt(2.0 * center.tau) * float(phi_quantile(b))
        rows.append((float(b), distance_quantile(measure, center, b), bound))
    return rows


def _radial_expect(measure: KernelMeasure, center: HnCenter, fn) -> float:
    gm = measure.gaussian
    if tuple(center.point) != tuple(gm.center):
        raise DomainError("closed-form radial moments are taken about the Gaussian mean")
    law = stats.chi(df=gm.n, scale=gm.std)
    c = center.radius
    inner = integrate.quad(lambda r: fn(r) * law.pdf(r), 0.0, c, epsabs=1e-14, epsrel=1e-13)[0]
    # beyond 40 standard deviations the chi density underflows before fn overflows
    top = c + 40.0 * gm.std
    outer = integrate.quad(lambda r: fn(r) * law.pdf(r), c, top, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return inner + outer


@dataclass(frozen=True)
class MomentRow:
    kind: str
    parameter: float
    value: float
    bound: float

    @property
    def margin(self) -> float:
        return self.bound - self.value


def excess_moment_check(center: HnCenter, measure: KernelMeasure, lambdas: Sequence[float] = (),
                        betas: Sequence[float] = ()) -> list[MomentRow]:
    """Exponential moments of ``Y = (d_s(z, .) - sqrt(2 H_n tau))_+`` and of the distance itself.

    Raises:
        DivergenceError: for ``beta >= 1/4``.
    """
    tau, c = center.tau, center.radius
    if measure.gaussian is not None:
        expect = lambda fn: _radial_expect(measure, center, fn)
    else:
        d = distance_samples(measure, center)
        expect = lambda fn: float(np.dot(measure.masses, fn(d)))
    rows = []
    for lam in lambdas:
        if lam < 0:
            raise DomainError("lambda must be nonnegative")
        bound = halfgaussian_exp_moment(lam, tau)
        rows.append(MomentRow("excess-exp", lam, expect(lambda r: np.exp(lam * np.maximum(r - c, 0.0))), bound))
        rows.append(MomentRow("distance-exp", lam, expect(lambda r: np.exp(lam * r)), math.exp(lam * c) * bound))
    for beta in betas:
        if beta >= 0.25:
            raise DivergenceError("the squared moment needs beta < 1/4")
        bound = halfgaussian_square_moment(beta, tau)
        rows.append(MomentRow("excess-square", beta,
                              expect(lambda r: np.exp(beta * np.maximum(r - c, 0.0) ** 2 / tau)), bound))
    return rows


def excess_domination_check(center: HnCenter, measure: KernelMeasure,
                            radii: Sequence[float]) -> list[tuple[float, float, float]]:
    """Rows ``(r, nu(Y > r), Phi(-r/sqrt(2 tau)))``."""
    rows = []
    for r in radii:
        r = float(r)
        if measure.gaussian is not None:
            val = float(1.0 - measure.gaussian.radial_cdf(center.radius + r, about=center.point))
        else:
            d = distance_samples(measure, center)
            val = float(np.sum(measure.masses[d - center.radius > r]))
        rows.append((r, val, float(phi_cdf(-r / math.sqrt(2.0 * center.tau)))))
    return rows
