"""Weighted perimeter, the Gaussian profile bound and concentration of measure.

Sets are finite unions of intervals in the reduced coordinate: half-lines and
slabs in Euclidean space (first coordinate), arcs on the circle, and zonal
bands or caps on rotationally symmetric spheres.  For such sets the metric
``r``-neighbourhood is again a union of intervals, obtained exactly by moving
the endpoints by ``r`` in arclength; for zonal sets this is exact because
meridians meet parallels orthogonally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DomainError, PreconditionError
from .flow_geometry import ModelFlow, field_values, gradient_norm, sphere_area
from .gaussian_model import phi_cdf, phi_quantile, profile_I
from .heat_kernel import KernelMeasure

INF = math.inf


# ---------------------------------------------------------------------------
# sets


@dataclass(frozen=True)
class IntervalSet:
    """Union of half-open intervals ``[a, b)`` in the reduced coordinate.

    Intervals may be unsorted or overlapping and, on the circle, may wrap;
    :meth:`normalized` returns the canonical form for a given grid geometry.
    """

    intervals: tuple[tuple[float, float], ...] = ()

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    @classmethod
    def below(cls, c: float) -> "IntervalSet":
        """``{x < c}``; a polar cap of angular radius ``c`` on zonal flows."""
        return cls(((-INF, c),))

    @classmethod
    def above(cls, c: float) -> "IntervalSet":
        return cls(((c, INF),))

    @classmethod
    def band(cls, a: float, b: float) -> "IntervalSet":
        return cls(((a, b),))

    @classmethod
    def whole(cls) -> "IntervalSet":
        return cls(((-INF, INF),))

    def normalized(self, flow: ModelFlow) -> "IntervalSet":
        kind = flow.grid.kind
        lo, hi = _domain(flow)
        out = []
        if kind == "periodic":
            period = flow.grid.length
            for a, b in self.intervals:
                if b - a >= period:
                    return IntervalSet(((lo, hi),))
                if b <= a:
                    continue
                a0 = lo + (a - lo) % period
                b0 = a0 + (b - a)
                if b0 > hi:
                    out += [(a0, hi), (lo, b0 - period)]
                else:
                    out.append((a0, b0))
        else:
            for a, b in self.intervals:
                a, b = max(a, lo), min(b, hi)
                if b > a:
                    out.append((a, b))
        return IntervalSet(tuple(_merge(out)))

    def complement(self, flow: ModelFlow) -> "IntervalSet":
        lo, hi = _domain(flow)
        norm = self.normalized(flow).intervals
        out, cur = [], lo
        for a, b in norm:
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
        if cur < hi:
            out.append((cur, hi))
        return IntervalSet(tuple(out))

    def boundary(self, flow: ModelFlow) -> list[float]:
        """Reduced coordinates of the topological boundary."""
        lo, hi = _domain(flow)
        ivs = self.normalized(flow).intervals
        pts = []
        for a, b in ivs:
            pts += [a, b]
        pts = [p for p in pts if math.isfinite(p)]
        if flow.grid.kind == "periodic":
            # the seam of the circle is not a boundary when both sides are covered
            pts = [p for p in pts if not (p in (lo, hi) and _covers_seam(ivs, lo, hi))]
        else:
            pts = [p for p in pts if p not in (lo, hi)]
        return pts


def _domain(flow: ModelFlow) -> tuple[float, float]:
    g = flow.grid
    if g.kind == "periodic":
        return g.lo, g.hi
    if g.kind == "zonal":
        return 0.0, math.pi
    return -INF, INF


def _covers_seam(ivs, lo, hi) -> bool:
    starts = any(a == lo for a, _ in ivs)
    ends = any(b == hi for _, b in ivs)
    return starts and ends


def _merge(ivs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    ivs = sorted(ivs)
    out: list[list[float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def sublevel_set(values, flow: ModelFlow, level: float) -> IntervalSet:
    """``{h < level}`` for a grid field, with crossings located by linear interpolation."""
    h = field_values(values, flow.grid) - level
    x = flow.grid.centers
    g = flow.grid
    inside = h < 0
    lo, hi = _domain(flow)
    if g.kind == "periodic":
        xs = np.concatenate([x, [x[0] + g.length]])
        hs = np.concatenate([h, [h[0]]])
    else:
        xs, hs = x, h
    cross = []
    for i in range(xs.size - 1):
        if (hs[i] < 0) != (hs[i + 1] < 0):
            cross.append(xs[i] + (xs[i + 1] - xs[i]) * hs[i] / (hs[i] - hs[i + 1]))
    if not cross:
        return IntervalSet.whole() if inside.all() else IntervalSet.empty()
    ivs = []
    if g.kind == "periodic":
        start_inside = hs[0] < 0
        pts = list(cross)
        if start_inside:
            pts = pts[1:] + [pts[0] + g.length]
        for a, b in zip(pts[0::2], pts[1::2]):
            ivs.append((a, b))
        return IntervalSet(tuple(ivs))
    state = inside[0]
    cur = lo if state else None
    for c in cross:
        if state:
            ivs.append((cur, c))
        else:
            cur = c
        state = not state
    if state:
        ivs.append((cur, hi))
    return IntervalSet(tuple(ivs))


def enlarge(E: IntervalSet, flow: ModelFlow, t: float, r: float) -> IntervalSet:
    """Open ``r``-neighbourhood ``{y : d_t(y, E) < r}`` (returned as intervals)."""
    if r < 0:
        raise DomainError("radii must be nonnegative")
    ivs = E.normalized(flow).intervals
    if r == 0 or not ivs:
        return IntervalSet(ivs)
    g = flow.grid
    if g.kind == "periodic":
        return IntervalSet(tuple((a - r, b + r) for a, b in ivs)).normalized(flow)
    if g.kind == "line":
        return IntervalSet(tuple((a - r, b + r) for a, b in ivs)).normalized(flow)
    total = float(flow.arclength(t, math.pi))
    out = []
    for a, b in ivs:
        sa = float(flow.arclength(t, a)) - r
        sb = float(flow.arclength(t, b)) + r
        xa = 0.0 if sa <= 0 else float(flow.arclength_inverse(t, sa))
        xb = math.pi if sb >= total else float(flow.arclength_inverse(t, sb))
        out.append((xa, xb))
    return IntervalSet(tuple(out)).normalized(flow)


def set_distance(A: IntervalSet, B: IntervalSet, flow: ModelFlow, t: float) -> float:
    """``d_t(A, B)`` between two interval sets (0 when they touch or overlap)."""
    ia = A.normalized(flow).intervals
    ib = B.normalized(flow).intervals
    if not ia or not ib:
        return INF
    g = flow.grid

    def s(x):
        if g.kind == "zonal":
            return float(flow.arclength(t, x))
        return x

    best = INF
    for a0, a1 in ia:
        for b0, b1 in ib:
            if g.kind == "periodic":
                for shift in (-g.length, 0.0, g.length):
                    gap = max(b0 + shift - a1, a0 - (b1 + shift), 0.0)
                    best = min(best, gap)
            else:
                gap = max(s(b0) - s(a1), s(a0) - s(b1), 0.0) if math.isfinite(max(abs(a0), abs(a1), abs(b0), abs(b1))) \
                    else max(b0 - a1, a0 - b1, 0.0)
                best = min(best, gap)
    return best


# ---------------------------------------------------------------------------
# measures and perimeters


def nu_measure(E: IntervalSet, measure: KernelMeasure) -> float:
    """``nu(E)``; exact distribution functions are used when available."""
    total = 0.0
    for a, b in E.normalized(measure.flow).intervals:
        total += measure.interval_mass(a, b)
    return float(min(max(total, 0.0), 1.0))


def _area_factor(measure: KernelMeasure, x: float) -> float:
    g = measure.grid
    if g.kind != "zonal":
        return 1.0
    v = float(measure.flow.factor(measure.s, np.array([x]))[0])
    return sphere_area(g.dim - 1) * (math.sqrt(v) * math.sin(x)) ** (g.dim - 1)


def _grid_density(measure: KernelMeasure, x: float) -> float:
    g = measure.grid
    d = measure.masses / measure.metric.cell_volume
    c = g.centers
    if g.kind == "periodic":
        xe = np.concatenate([c[-3:] - g.length, c, c[:3] + g.length])
        de = np.concatenate([d[-3:], d, d[:3]])
        xx = g.lo + (x - g.lo) % g.length
        return float(CubicSpline(xe, de)(xx))
    if g.kind == "zonal":
        xe = np.concatenate([[-c[1], -c[0]], c, [2 * math.pi - c[-1], 2 * math.pi - c[-2]]])
        de = np.concatenate([[d[1], d[0]], d, [d[-1], d[-2]]])
        return float(CubicSpline(xe, de)(x))
    return float(CubicSpline(c, d)(x))


def weighted_perimeter(E: IntervalSet, measure: KernelMeasure, source: str = "auto") -> float:
    """Boundary integral of the kernel density with hypersurface area weights.

    Args:
        source: ``"exact"`` uses the closed-form density, ``"grid"``
            interpolates the grid density, ``"auto"`` prefers the exact one,
            ``"relaxation"`` uses :func:`relaxed_perimeter`.
    """
    if source == "relaxation":
        return relaxed_perimeter(E, measure)
    pts = E.boundary(measure.flow)
    if len(pts) > measure.grid.size // 8:
        warnings.warn("irregular set boundary; falling back to the mollified relaxation", RuntimeWarning)
        return relaxed_perimeter(E, measure)
    total = 0.0
    for x in pts:
        if source == "grid" or (source == "auto" and measure.density_fn is None):
            dens = _grid_density(measure, x)
        else:
            if measure.density_fn is None:
                raise DomainError("no closed-form density for this measure")
            dens = float(measure.density_at(np.array([x]))[0])
        total += dens * _area_factor(measure, x)
    return total


def _mollified_indicator(E: IntervalSet, measure: KernelMeasure, width: float) -> np.ndarray:
    flow = measure.flow
    g = flow.grid
    x = g.centers
    if g.kind == "zonal":
        s = flow.arclength(measure.s, x)
    else:
        s = x
    f = np.zeros(g.size)
    for a, b in E.normalized(flow).intervals:
        sa = flow.arclength(measure.s, a) if g.kind == "zonal" else a
        sb = flow.arclength(measure.s, b) if g.kind == "zonal" else b
        if g.kind == "periodic":
            for shift in (-g.length, 0.0, g.length):
                f += phi_cdf((s - sa - shift) / width) - phi_cdf((s - sb - shift) / width)
        else:
            lo_term = 1.0 if not math.isfinite(sa) or (g.kind == "zonal" and a == 0.0) else phi_cdf((s - sa) / width)
            hi_term = 0.0 if not math.isfinite(sb) or (g.kind == "zonal" and b == math.pi) else phi_cdf((s - sb) / width)
            f += lo_term - hi_term
    return f


def relaxed_perimeter(E: IntervalSet, measure: KernelMeasure, multiples: Sequence[int] = (4, 2, 1)) -> float:
    """Perimeter by the mollified-gradient relaxation.

    The indicator is smoothed at arclength widths ``k h`` for ``k`` in
    ``multiples``; consecutive pairs are Richardson-extrapolated in the width
    squared and the smallest extrapolant is returned.
    """
    metric = measure.metric
    h_arc = float(np.min(np.sqrt(metric.factor))) * measure.grid.h
    vals = []
    for k in multiples:
        f = _mollified_indicator(E, measure, k * h_arc)
        vals.append(float(np.dot(measure.masses, gradient_norm(f, metric).values)))
    extrap = [(4.0 * vals[i + 1] - vals[i]) / 3.0 for i in range(len(vals) - 1)]
    return float(min(extrap)) if extrap else vals[0]


@dataclass(frozen=True)
class ProfileRecord:
    perimeter: float
    bound: float

    @property
    def margin(self) -> float:
        return self.perimeter - self.bound


def profile_check(E: IntervalSet, measure: KernelMeasure, source: str = "auto") -> ProfileRecord:
    """``Per_nu(E) >= I(nu(E)) / sqrt(2 tau)``."""
    a = nu_measure(E, measure)
    per = weighted_perimeter(E, measure, source) if E.boundary(measure.flow) else 0.0
    return ProfileRecord(per, profile_I(a) / math.sqrt(2.0 * measure.tau))


# ---------------------------------------------------------------------------
# concentration


@dataclass(frozen=True)
class EnlargementRow:
    radius: float
    measure: float
    bound: float

    @property
    def margin(self) -> float:
        return self.measure - self.bound


def enlargement_bound(a: float, r: float, tau: float) -> float:
    """``Phi(Phi^{-1}(a) + r / sqrt(2 tau))``."""
    return float(phi_cdf(phi_quantile(a) + r / math.sqrt(2.0 * tau)))


def enlargement_check(E: IntervalSet, measure: KernelMeasure, radii: Iterable[float]) -> list[EnlargementRow]:
    """Tabulate ``nu(E_r)`` against ``Phi(Phi^{-1}(nu(E)) + r/sqrt(2 tau))``."""
    a = nu_measure(E, measure)
    rows = []
    for r in radii:
        er = enlarge(E, measure.flow, measure.s, float(r))
        rows.append(EnlargementRow(float(r), nu_measure(er, measure), enlargement_bound(a, float(r), measure.tau)))
    return rows


@dataclass(frozen=True)
class TwoSetRecord:
    distance: float
    quantile_sum: float
    quantile_bound: float
    product: float
    gaussian_product: float
    exponential_product: float

    @property
    def quantile_margin(self) -> float:
        return self.quantile_bound - self.quantile_sum

    @property
    def chain_holds(self) -> bool:
        return self.product <= self.gaussian_product <= self.exponential_product


def product_chain(d: float, tau: float) -> tuple[float, float]:
    """``(Phi(-d / (2 sqrt(2 tau)))^2, exp(-d^2 / (8 tau)))``."""
    return (float(phi_cdf(-d / (2.0 * math.sqrt(2.0 * tau))) ** 2), math.exp(-d * d / (8.0 * tau)))


def set_quantile(E: IntervalSet, measure: KernelMeasure) -> float:
    """``Phi^{-1}(nu(E))``; heavy sets go through the complement, whose small mass is exact."""
    a = nu_measure(E, measure)
    if a > 0.5:
        c = nu_measure(E.complement(measure.flow), measure)
        return -float(phi_quantile(c)) if c > 0 else INF
    return float(phi_quantile(a)) if a > 0 else -INF


def two_set_check(A: IntervalSet, B: IntervalSet, measure: KernelMeasure) -> TwoSetRecord:
    """``Phi^{-1}(nu A) + Phi^{-1}(nu B) <= -d/sqrt(2 tau)`` and the product chain.

    Raises:
        DomainError: if the sets touch.
    """
    d = set_distance(A, B, measure.flow, measure.s)
    if not d > 0:
        raise DomainError("two-set concentration needs sets at positive distance")
    na, nb = nu_measure(A, measure), nu_measure(B, measure)
    qs = set_quantile(A, measure) + set_quantile(B, measure) if na > 0 and nb > 0 else -INF
    g, e = product_chain(d, measure.tau)
    return TwoSetRecord(d, qs, -d / math.sqrt(2.0 * measure.tau), na * nb, g, e)


def one_sided_bound(beta: float, d: float, tau: float) -> float:
    return 1.0 - float(phi_cdf(phi_quantile(beta) + d / math.sqrt(2.0 * tau)))


def one_sided_check(A: IntervalSet, B: IntervalSet, beta: float, measure: KernelMeasure,
                    tol: float = 1e-12) -> float:
    """Margin of ``nu(A) <= 1 - Phi(Phi^{-1}(beta) + d/sqrt(2 tau))``.

    Raises:
        PreconditionError: if ``beta`` exceeds ``nu(B)`` or is not positive.
    """
    nb = nu_measure(B, measure)
    if not 0 < beta <= nb + tol:
        raise PreconditionError(f"need 0 < beta <= nu(B) = {nb:.6g}, got beta={beta}")
    d = set_distance(A, B, measure.flow, measure.s)
    if not d > 0:
        raise DomainError("one-sided concentration needs sets at positive distance")
    return one_sided_bound(beta, d, measure.tau) - nu_measure(A, measure)


# ---------------------------------------------------------------------------
# Lipschitz observables


def weighted_quantile(values: np.ndarray, masses: np.ndarray, a: float) -> float:
    """``inf{r : nu(F <= r) >= a}`` for a discrete measure."""
    order = np.argsort(values, kind="stable")
    v = np.asarray(values)[order]
    cum = np.cumsum(np.asarray(masses)[order])
    cum /= cum[-1]
    i = int(np.searchsorted(cum, a - 1e-13, side="left"))
    return float(v[min(i, v.size - 1)])


@dataclass(frozen=True)
class LinearObservable:
    """``F(y) = <direction, y> + offset`` on Euclidean space."""

    direction: tuple[float, ...]
    offset: float = 0.0

    @property
    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.direction))


@dataclass
class LipschitzReport:
    quantile_rows: list[tuple[float, float, float, float]]  # (a, b, gap, bound)
    tail_rows: list[tuple[float, float, float]]             # (r, max tail, bound)
    exp_rows: list[tuple[float, float, float]]              # (lambda, value, bound)
    square_rows: list[tuple[float, float, float]]           # (beta, value, bound)
    median: float
    tol: float

    def margins(self) -> list[float]:
        out = [b - g for _, _, g, b in self.quantile_rows]
        out += [b - v for _, v, b in self.tail_rows]
        out += [b - v for _, v, b in self.exp_rows]
        out += [b - v for _, v, b in self.square_rows]
        return out

    @property
    def holds(self) -> bool:
        return min(self.margins(), default=0.0) >= -self.tol


def verify_lipschitz(values: np.ndarray, flow: ModelFlow, t: float, L: float, rel_slack: float = 1e-9) -> float:
    """Largest difference quotient between neighbouring cells; raises if above ``L``."""
    g = flow.grid
    x = g.centers
    if g.kind == "zonal":
        s = flow.arclength(t, x)
    else:
        s = x
    dv = np.abs(np.diff(values))
    ds = np.diff(s)
    if g.kind == "periodic":
        dv = np.append(dv, abs(values[0] - values[-1]))
        ds = np.append(ds, g.length - (x[-1] - x[0]))
    q = float(np.max(dv / ds)) if dv.size else 0.0
    if q > L * (1 + rel_slack) + 1e-15:
        raise PreconditionError(f"observable is not {L}-Lipschitz on the grid (quotient {q:.6g})")
    return q


def lipschitz_quantile_check(F, L: float, pairs: Sequence[tuple[float, float]], measure: KernelMeasure,
                             radii: Sequence[float] = (), lambdas: Sequence[float] = (),
                             betas: Sequence[float] = (), tol: float | None = None) -> LipschitzReport:
    """Quantile gaps, median tails and exponential integrability of a Lipschitz ``F``.

    ``F`` is a grid field (checked to be ``L``-Lipschitz on neighbouring cells)
    or a :class:`LinearObservable` on a closed-form Euclidean measure, for
    which every quantity is evaluated exactly.
    """
    tau = measure.tau
    sq = math.sqrt(2.0 * tau)
    if isinstance(F, LinearObservable):
        gm = measure.gaussian
        if gm is None:
            raise DomainError("linear observables need a closed-form Euclidean measure")
        e = np.zeros(gm.n)
        e[:len(F.direction)] = F.direction
        Lf = F.lipschitz
        if Lf > L * (1 + 1e-12):
            raise PreconditionError("observable is not L-Lipschitz")
        m = float(np.dot(e, gm.center) + F.offset)
        std = Lf * sq
        quant = lambda a: m + std * float(phi_quantile(a))
        tail = lambda r: float(phi_cdf(-r / std)) if std > 0 else 0.0
        expm = lambda lam: 2.0 * math.exp(tau * Lf * Lf * lam * lam) * float(phi_cdf(lam * std))
        sqm = lambda beta: (1.0 - 4.0 * beta * Lf * Lf / (L * L)) ** -0.5 if L > 0 else 1.0
        tol = 1e-12 if tol is None else tol
    else:
        vals = field_values(F, measure.grid)
        verify_lipschitz(vals, measure.flow, measure.s, L)
        w = measure.masses
        m = weighted_quantile(vals, w, 0.5)
        quant = lambda a: weighted_quantile(vals, w, a)

        def tail(r):
            return max(float(np.sum(w[vals >= m + r])), float(np.sum(w[vals <= m - r])))

        dev = np.abs(vals - m)
        expm = lambda lam: float(np.dot(w, np.exp(lam * dev)))
        sqm = lambda beta: float(np.dot(w, np.exp(beta * dev ** 2 / (tau * L * L)))) if L > 0 else 1.0
        h_arc = float(np.max(np.sqrt(measure.metric.factor))) * measure.grid.h
        tol = (2.0 * L * h_arc) if tol is None else tol
    qrows = []
    for a, b in pairs:
        if not 0 < a < b < 1:
            raise DomainError("quantile pairs need 0 < a < b < 1")
        gap = quant(b) - quant(a)
        qrows.append((a, b, gap, L * sq * float(phi_quantile(b) - phi_quantile(a))))
    trows = [(r, tail(r), 1.0 - float(phi_cdf(r / (L * sq))) if L > 0 else 0.0) for r in radii]
    erows = [(lam, expm(lam), 2.0 * math.exp(tau * L * L * lam * lam) * float(phi_cdf(lam * L * sq)))
             for lam in lambdas]
    srows = []
    for beta in betas:
        if not 0 <= beta < 0.25:
            raise DomainError("beta must lie in [0, 1/4)")
        srows.append((beta, sqm(beta), (1.0 - 4.0 * beta) ** -0.5))
    return LipschitzReport(qrows, trows, erows, srows, m, tol)


# ---------------------------------------------------------------------------
# Cheeger constant


@dataclass(frozen=True)
class CheegerCertificate:
    ratio: float
    bound: float
    argmin: int

    @property
    def margin(self) -> float:
        return self.ratio - self.bound


def cheeger_constant(measure: KernelMeasure, candidates: Sequence[IntervalSet],
                     source: str = "auto") -> CheegerCertificate:
    """Minimum of ``Per / min(nu, 1 - nu)`` over candidates against ``1/sqrt(pi tau)``."""
    best, arg = INF, -1
    for i, E in enumerate(candidates):
        a = nu_measure(E, measure)
        if not 0 < a < 1:
            raise PreconditionError("Cheeger candidates need 0 < nu(E) < 1")
        ratio = weighted_perimeter(E, measure, source) / min(a, 1.0 - a)
        if ratio < best:
            best, arg = ratio, i
    return CheegerCertificate(best, 1.0 / math.sqrt(math.pi * measure.tau), arg)
