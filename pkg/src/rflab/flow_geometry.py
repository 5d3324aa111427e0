"""Model Ricci flows in reduced coordinates and metric-aware discrete calculus.

Every grid-based geometry is a conformal multiple of a static reference metric
on a one-dimensional reduced coordinate ``x``:

* ``periodic``: the circle of length ``P`` (flat torus, ``n = 1``);
* ``line``: an interval with Neumann ends (1-D marginal of Euclidean space);
* ``zonal``: the polar angle ``x in (0, pi)`` of ``S^n``, with reference metric
  ``dx^2 + sin(x)^2 dOmega^2`` and axially symmetric fields only.

The time-``t`` metric is ``v(x, t)`` times the reference metric.  Fields are
sampled at cell centres and the Laplacian is a finite-volume operator, so it is
symmetric in the volume-weighted inner product and integrates exactly by parts
against :func:`dirichlet_form`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre
from scipy import fft, integrate, interpolate, sparse, special

from .errors import (DomainError, FlowSingularityError, GridMismatchError,
                     UnsupportedFlowError)

FLOW_SCHEMA_VERSION = 1


def sphere_area(k: int) -> float:
    """Area of the unit ``S^k`` (``|S^0| = 2``)."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / math.gamma((k + 1) / 2.0)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred grid in the reduced coordinate.

    Attributes:
        kind: ``"periodic"``, ``"line"`` or ``"zonal"``.
        size: number of cells.
        lo: left edge of the first cell.
        hi: right edge of the last cell.
        dim: manifold dimension (1 for ``periodic`` and ``line``).
    """

    kind: str
    size: int
    lo: float
    hi: float
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ("periodic", "line", "zonal"):
            raise DomainError(f"unknown grid kind {self.kind!r}")
        if self.size < 4:
            raise DomainError("a grid needs at least 4 cells")
        if self.kind == "zonal" and self.dim < 2:
            raise DomainError("zonal grids describe S^n with n >= 2")

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.size

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @cached_property
    def edges(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.size + 1)

    @cached_property
    def centers(self) -> np.ndarray:
        return self.lo + self.h * (np.arange(self.size) + 0.5)

    @cached_property
    def ref_volume(self) -> np.ndarray:
        """Reference volume of each cell (exact cell integrals)."""
        if self.kind != "zonal":
            return np.full(self.size, self.h)
        e = self.edges
        n = self.dim
        if n == 2:
            vol = np.cos(e[:-1]) - np.cos(e[1:])
        elif n == 3:
            prim = 0.5 * e - 0.25 * np.sin(2.0 * e)
            vol = np.diff(prim)
        else:
            g, w = np.polynomial.legendre.leggauss(16)
            mid = 0.5 * (e[:-1] + e[1:])[:, None] + 0.5 * self.h * g[None, :]
            vol = 0.5 * self.h * (np.sin(mid) ** (n - 1) @ w)
        return sphere_area(n - 1) * vol

    @cached_property
    def ref_flux(self) -> np.ndarray:
        """Reference flux coefficient at the ``size + 1`` edges."""
        if self.kind == "zonal":
            fl = sphere_area(self.dim - 1) * np.sin(self.edges) ** (self.dim - 1)
            fl[0] = fl[-1] = 0.0
            return fl
        fl = np.ones(self.size + 1)
        if self.kind == "line":
            fl[0] = fl[-1] = 0.0
        return fl

    def same_as(self, other: "Grid") -> bool:
        return (self.kind == other.kind and self.size == other.size and self.dim == other.dim
                and self.lo == other.lo and self.hi == other.hi)

    def locate(self, x) -> np.ndarray:
        """Index of the cell containing ``x`` (wrapped for periodic grids)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "periodic":
            x = self.lo + np.mod(x - self.lo, self.length)
        idx = np.floor((x - self.lo) / self.h).astype(int)
        return np.clip(idx, 0, self.size - 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size, "lo": self.lo, "hi": self.hi, "dim": self.dim}


def periodic_grid(period: float, size: int) -> Grid:
    """Circle of length ``period`` with a cell centred at 0."""
    h = period / size
    lo = -0.5 * period - 0.5 * h if size % 2 == 0 else -0.5 * period
    return Grid("periodic", size, lo, lo + period)


def line_grid(lo: float, hi: float, size: int) -> Grid:
    return Grid("line", size, lo, hi)


def centered_line_grid(half_width: float, size: int) -> Grid:
    """Line grid of spacing ``2 half_width / size`` with a cell centred at 0."""
    h = 2.0 * half_width / size
    return Grid("line", size, -half_width - 0.5 * h, half_width - 0.5 * h)


def zonal_grid(size: int, dim: int = 2) -> Grid:
    return Grid("zonal", size, 0.0, math.pi, dim)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Real values at the cell centres of a grid at a fixed time."""

    values: np.ndarray
    grid: Grid
    time: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise GridMismatchError(f"field has shape {vals.shape}, grid has {self.grid.size} cells")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", vals)


def field_values(f, grid: Grid | None = None) -> np.ndarray:
    """Return the value array of a field or array, checking the grid."""
    if isinstance(f, DiscreteField):
        if grid is not None and not f.grid.same_as(grid):
            raise GridMismatchError("field and metric live on different grids")
        return f.values
    arr = np.asarray(f, dtype=float)
    if grid is not None and arr.shape != (grid.size,):
        raise GridMismatchError(f"array of shape {arr.shape} does not match a grid of {grid.size} cells")
    return arr


# ---------------------------------------------------------------------------
# metric samples and calculus


@dataclass(frozen=True, eq=False)
class MetricSample:
    """Conformal factor of the metric at one time.

    Attributes:
        grid: the reduced grid.
        time: the flow time.
        factor: conformal factor ``v`` at the cell centres.
        factor_edges: ``v`` at the cell edges.
        factor_slope: ``dv/dx`` at the cell centres.
    """

    grid: Grid
    time: float
    factor: np.ndarray
    factor_edges: np.ndarray
    factor_slope: np.ndarray

    def __post_init__(self):
        if np.any(self.factor <= 0) or np.any(self.factor_edges <= 0):
            raise DomainError("metric coefficients must be strictly positive")

    @property
    def dim(self) -> int:
        return self.grid.dim

    @cached_property
    def cell_volume(self) -> np.ndarray:
        return self.factor ** (0.5 * self.dim) * self.grid.ref_volume

    @cached_property
    def flux(self) -> np.ndarray:
        return self.factor_edges ** (0.5 * (self.dim - 2)) * self.grid.ref_flux

    @property
    def total_volume(self) -> float:
        return float(self.cell_volume.sum())

    @cached_property
    def stiffness(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric tridiagonal ``S`` with ``Laplacian = diag(V)^{-1} S``.

        Returns the diagonal and the off-diagonal coupling of cell ``i`` to
        ``i + 1`` (length ``size``; the last entry couples across the periodic
        seam and is zero otherwise).
        """
        h = self.grid.h
        kappa = self.flux / h
        right = kappa[1:]
        left = kappa[:-1]
        if self.grid.kind == "periodic":
            left = np.roll(right, 1)
        return -(left + right), right.copy()

    @cached_property
    def arclength_edges(self) -> np.ndarray:
        """Distance along the reduced coordinate from the first edge."""
        seg = np.sqrt(self.factor) * self.grid.h
        return np.concatenate([[0.0], np.cumsum(seg)])


def _check(field, metric: MetricSample) -> np.ndarray:
    vals = field_values(field, metric.grid)
    if isinstance(field, DiscreteField) and abs(field.time - metric.time) > 1e-12:
        raise GridMismatchError(f"field at time {field.time} paired with metric at {metric.time}")
    return vals


def _ghosts(f: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    if kind == "periodic":
        return np.roll(f, 1), np.roll(f, -1)
    left = np.concatenate([[f[0]], f[:-1]])
    right = np.concatenate([f[1:], [f[-1]]])
    return left, right


def coordinate_derivative(field, metric: MetricSample) -> np.ndarray:
    """Centred ``df/dx``; even reflection at poles, one-sided at line ends."""
    f = _check(field, metric)
    h = metric.grid.h
    left, right = _ghosts(f, metric.grid.kind)
    d = (right - left) / (2.0 * h)
    if metric.grid.kind == "line":
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
        d[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * h)
    return d


def coordinate_second_derivative(field, metric: MetricSample) -> np.ndarray:
    f = _check(field, metric)
    h = metric.grid.h
    left, right = _ghosts(f, metric.grid.kind)
    d2 = (right - 2.0 * f + left) / (h * h)
    if metric.grid.kind == "line":
        d2[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
        d2[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    return d2


def gradient_norm(field, metric: MetricSample) -> DiscreteField:
    """Pointwise ``|grad f|`` in the time-``t`` metric."""
    d = coordinate_derivative(field, metric)
    return DiscreteField(np.abs(d) / np.sqrt(metric.factor), metric.grid, metric.time)


def laplacian(field, metric: MetricSample) -> DiscreteField:
    """Finite-volume Laplace-Beltrami operator."""
    f = _check(field, metric)
    diag, off = metric.stiffness
    sf = diag * f + off * np.roll(f, -1) + np.roll(off, 1) * np.roll(f, 1)
    return DiscreteField(sf / metric.cell_volume, metric.grid, metric.time)


def dirichlet_form(f, g, metric: MetricSample) -> float:
    """Edge-based ``int <grad f, grad g> dV``, the exact adjoint of :func:`laplacian`."""
    fv = _check(f, metric)
    gv = _check(g, metric)
    _, off = metric.stiffness
    return float(np.sum(off * (np.roll(fv, -1) - fv) * (np.roll(gv, -1) - gv)))


def volume_integral(field, metric: MetricSample) -> float:
    """Cell-volume quadrature ``int f dV``."""
    f = _check(field, metric)
    return float(np.dot(metric.cell_volume, f))


def hessian_norms(field, metric: MetricSample) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hessian quantities of an axially symmetric ``w``.

    Returns:
        ``(|grad w|^2, |Hess w|^2, |Hess w(grad w, .)|^2)`` at the cell centres.
    """
    w = _check(field, metric)
    v = metric.factor
    wx = coordinate_derivative(w, metric)
    wxx = coordinate_second_derivative(w, metric)
    hxx = (wxx - 0.5 * metric.factor_slope / v * wx) / v
    grad2 = wx * wx / v
    hess2 = hxx * hxx
    if metric.grid.kind == "zonal":
        x = metric.grid.centers
        # Hess_{angle}/B with B = v sin^2 x
        hang = (0.5 * metric.factor_slope / (v * v) + np.cos(x) / (np.sin(x) * v)) * wx
        hess2 = hess2 + (metric.dim - 1) * hang * hang
    return grad2, hess2, grad2 * hxx * hxx


# ---------------------------------------------------------------------------
# flow descriptions


@dataclass(frozen=True)
class EuclideanExact:
    """Static Euclidean space ``R^n``."""

    n: int = 1


@dataclass(frozen=True)
class FlatTorus:
    """Static flat torus with the given periods."""

    periods: tuple[float, ...] = (2.0 * math.pi,)

    @property
    def n(self) -> int:
        return len(self.periods)


@dataclass(frozen=True)
class RoundSphere:
    """Shrinking round sphere ``g(t) = (r0^2 - 2(n-1)t) g_{S^n(1)}``."""

    n: int = 2
    initial_radius: float = 1.0

    @property
    def extinction_time(self) -> float:
        return self.initial_radius ** 2 / (2.0 * (self.n - 1))


@dataclass(frozen=True)
class WarpedS2:
    """Rotationally symmetric ``S^2`` with metric ``v(x) (dx^2 + sin^2 x dtheta^2)``.

    ``samples`` holds ``v`` at the polar cell centres ``(k + 1/2) pi / M``;
    the profile between samples is the cosine-series interpolant, which is the
    natural smooth extension of an axially symmetric function on the sphere.
    """

    samples: tuple[float, ...]

    n = 2

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 8:
            raise DomainError("WarpedS2 needs at least 8 profile samples")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise DomainError("the conformal factor must be positive")

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], samples: int = 256) -> "WarpedS2":
        x = (np.arange(samples) + 0.5) * math.pi / samples
        return cls(tuple(float(y) for y in fn(x)))

    @classmethod
    def from_warping(cls, r: Sequence[float], psi: Sequence[float], samples: int = 256) -> "WarpedS2":
        """Convert ``dr^2 + psi(r)^2 dtheta^2`` on ``[0, D]`` to conformal form.

        Uses ``log tan(x/2) = int dr / psi`` (the constant fixed so that the
        midpoint of ``r`` maps to the equator) and ``v = psi^2 / sin^2 x``.
        The interpolation of ``v`` near the poles uses the smooth-closure
        limit ``v -> psi'(0)^2``.
        """
        r = np.asarray(r, dtype=float)
        psi = np.asarray(psi, dtype=float)
        inner = psi > 0
        ri, pi_ = r[inner], psi[inner]
        mid = np.argmin(np.abs(ri - 0.5 * (r[0] + r[-1])))
        prim = integrate.cumulative_trapezoid(1.0 / pi_, ri, initial=0.0)
        prim -= prim[mid]
        x = 2.0 * np.arctan(np.exp(prim))
        v = pi_ ** 2 / np.sin(x) ** 2
        slope0 = np.gradient(psi, r)[0]
        slope1 = -np.gradient(psi, r)[-1]
        xs = np.concatenate([[0.0], x, [math.pi]])
        vs = np.concatenate([[slope0 ** 2], v, [slope1 ** 2]])
        target = (np.arange(samples) + 0.5) * math.pi / samples
        return cls(tuple(float(y) for y in np.interp(target, xs, vs)))

    def factor_function(self) -> Callable[[np.ndarray], np.ndarray]:
        s = np.asarray(self.samples, dtype=float)
        m = s.size
        c = fft.dct(s, type=2) / m
        k = np.arange(m)

        def v(x):
            x = np.asarray(x, dtype=float)
            out = np.cos(np.multiply.outer(x, k)) @ c - 0.5 * c[0]
            return out

        def slope(x):
            x = np.asarray(x, dtype=float)
            return -np.sin(np.multiply.outer(x, k)) @ (k * c)

        v.slope = slope
        return v

    @property
    def area(self) -> float:
        v = self.factor_function()
        return float(integrate.quad(lambda x: v(x) * math.sin(x), 0.0, math.pi, limit=200)[0] * 2 * math.pi)

    @property
    def extinction_time(self) -> float:
        return self.area / (8.0 * math.pi)


FlowKind = EuclideanExact | FlatTorus | RoundSphere | WarpedS2


def kind_name(kind) -> str:
    return type(kind).__name__


@dataclass(frozen=True)
class FlowSpec:
    """A model Ricci flow on the interval ``[t_min, t_max]``."""

    kind: FlowKind
    t_min: float = 0.0
    t_max: float = 1.0

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise DomainError("time interval must satisfy t_min < t_max")
        if isinstance(self.kind, (RoundSphere, WarpedS2)) and self.t_max >= self.kind.extinction_time:
            raise DomainError(
                f"t_max={self.t_max} is not below the extinction time {self.kind.extinction_time:.6g}")

    @property
    def n(self) -> int:
        return self.kind.n

    @property
    def static(self) -> bool:
        return isinstance(self.kind, (EuclideanExact, FlatTorus))


# ---------------------------------------------------------------------------
# flows


class ModelFlow:
    """A flow together with its reduced grid; queryable by :meth:`metric_at`."""

    def __init__(self, spec: FlowSpec, grid: Grid):
        self.spec = spec
        self.grid = grid

    @property
    def kind(self):
        return self.spec.kind

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def t_min(self) -> float:
        return self.spec.t_min

    @property
    def t_max(self) -> float:
        return self.spec.t_max

    def _check_time(self, t: float):
        if not (self.t_min - 1e-12 <= t <= self.t_max + 1e-12):
            raise DomainError(f"time {t} outside the flow interval [{self.t_min}, {self.t_max}]")

    def factor(self, t: float, x=None) -> np.ndarray:
        raise NotImplementedError

    def factor_slope(self, t: float, x=None) -> np.ndarray:
        x = self.grid.centers if x is None else x
        return np.zeros_like(np.asarray(x, dtype=float))

    def factor_table(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Conformal factor at centres and edges for many times, shape ``(len(times), .)``."""
        times = np.asarray(times, dtype=float)
        vc = np.array([self.factor(t) for t in times])
        ve = np.array([self.factor(t, self.grid.edges) for t in times])
        return vc, ve

    def metric_at(self, t: float) -> MetricSample:
        self._check_time(t)
        return MetricSample(self.grid, float(t), self.factor(t), self.factor(t, self.grid.edges),
                            self.factor_slope(t))

    def arclength(self, t: float, x) -> np.ndarray:
        """Distance from the first grid edge to reduced coordinate ``x``."""
        raise NotImplementedError

    def arclength_inverse(self, t: float, s) -> np.ndarray:
        raise NotImplementedError

    def distance(self, t: float, x, y) -> float:
        raise NotImplementedError

    def field(self, values, t: float) -> DiscreteField:
        return DiscreteField(np.asarray(values, dtype=float), self.grid, t)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray], t: float) -> DiscreteField:
        return self.field(fn(self.grid.centers), t)


class _StaticFlatFlow(ModelFlow):
    def factor(self, t, x=None):
        x = self.grid.centers if x is None else x
        return np.ones_like(np.asarray(x, dtype=float))

    def factor_table(self, times):
        m = np.size(times)
        return np.ones((m, self.grid.size)), np.ones((m, self.grid.size + 1))

    def arclength(self, t, x):
        return np.asarray(x, dtype=float) - self.grid.lo

    def arclength_inverse(self, t, s):
        return np.asarray(s, dtype=float) + self.grid.lo


class EuclideanFlow(_StaticFlatFlow):
    """Static ``R^n``; the grid is the line of the first coordinate."""

    def distance(self, t, x, y):
        self._check_time(t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return float(np.linalg.norm(x - y))


class TorusFlow(_StaticFlatFlow):
    """Static flat torus."""

    def distance(self, t, x, y):
        self._check_time(t)
        periods = np.asarray(self.kind.periods)
        d = np.mod(np.atleast_1d(np.asarray(x, dtype=float)) - np.atleast_1d(np.asarray(y, dtype=float)), periods)
        d = np.minimum(d, periods - d)
        return float(np.linalg.norm(d))


def _sphere_points(n: int, p) -> np.ndarray:
    """Unit vectors from polar angles; ``p`` is a polar angle or a unit vector."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.size == 1:
        out = np.zeros(n + 1)
        out[0] = math.cos(p[0])
        out[1] = math.sin(p[0])
        return out
    if p.size == n + 1:
        return p / np.linalg.norm(p)
    if n == 2 and p.size == 2:
        return np.array([math.cos(p[0]), math.sin(p[0]) * math.cos(p[1]), math.sin(p[0]) * math.sin(p[1])])
    raise DomainError("points on S^n are given by a polar angle, (polar, azimuth) or a unit vector")


class RoundSphereFlow(ModelFlow):
    """Exact shrinking round sphere."""

    def radius_squared(self, t: float) -> float:
        k = self.kind
        return k.initial_radius ** 2 - 2.0 * (k.n - 1) * t

    def factor(self, t, x=None):
        x = self.grid.centers if x is None else x
        return np.full(np.shape(x), self.radius_squared(t))

    def factor_table(self, times):
        times = np.asarray(times, dtype=float)
        r2 = self.kind.initial_radius ** 2 - 2.0 * (self.kind.n - 1) * times
        return (np.repeat(r2[:, None], self.grid.size, axis=1),
                np.repeat(r2[:, None], self.grid.size + 1, axis=1))

    def arclength(self, t, x):
        return math.sqrt(self.radius_squared(t)) * np.asarray(x, dtype=float)

    def arclength_inverse(self, t, s):
        return np.asarray(s, dtype=float) / math.sqrt(self.radius_squared(t))

    def distance(self, t, x, y):
        self._check_time(t)
        a = _sphere_points(self.n, x)
        b = _sphere_points(self.n, y)
        ang = math.atan2(np.linalg.norm(np.cross(a, b)) if a.size == 3 else
                         math.sqrt(max(0.0, 1.0 - float(np.dot(a, b)) ** 2)), float(np.dot(a, b)))
        return math.sqrt(self.radius_squared(t)) * ang

    def scalar_curvature(self, t):
        n = self.n
        return n * (n - 1) / self.radius_squared(t)


def round_laplacian_operator(grid: Grid) -> sparse.csr_matrix:
    """Sparse finite-volume Laplacian of the unit round sphere on a zonal grid."""
    h = grid.h
    kappa = grid.ref_flux / h
    vol = grid.ref_volume
    diag = -(kappa[:-1] + kappa[1:]) / vol
    up = kappa[1:-1] / vol[:-1]
    low = kappa[1:-1] / vol[1:]
    return sparse.diags([low, diag, up], [-1, 0, 1], format="csr")


class WarpedFlow(ModelFlow):
    """Numerically evolved rotationally symmetric ``S^2``.

    The conformal factor solves ``dv/dt = Lap_round(log v) - 2`` (the reduced
    Ricci flow), integrated by BDF with the exact tridiagonal Jacobian and
    stored on a uniform time grid; queries use a cubic spline in time.
    """

    def __init__(self, spec: FlowSpec, grid: Grid, times: np.ndarray, values: np.ndarray,
                 curvature_ceiling: float):
        super().__init__(spec, grid)
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.curvature_ceiling = curvature_ceiling
        self._spline = interpolate.CubicSpline(self.times, self.values, axis=0)
        self._dspline = self._spline.derivative()
        edge_vals = np.array([self._interp_x(row, grid.edges) for row in self.values])
        slope_vals = np.array([self._interp_x(row, grid.centers, 1) for row in self.values])
        self._edge_spline = interpolate.CubicSpline(self.times, edge_vals, axis=0)
        self._slope_spline = interpolate.CubicSpline(self.times, slope_vals, axis=0)

    def _interp_x(self, vals: np.ndarray, x, nu: int = 0) -> np.ndarray:
        # even reflection through both poles
        xc = self.grid.centers
        xe = np.concatenate([[-xc[1], -xc[0]], xc, [2 * math.pi - xc[-1], 2 * math.pi - xc[-2]]])
        ve = np.concatenate([[vals[1], vals[0]], vals, [vals[-1], vals[-2]]])
        return interpolate.CubicSpline(xe, ve)(x, nu)

    def factor(self, t, x=None):
        if x is None:
            return self._spline(t)
        if x is self.grid.edges:
            return self._edge_spline(t)
        return self._interp_x(self._spline(t), x)

    def factor_slope(self, t, x=None):
        if x is None:
            return self._slope_spline(t)
        return self._interp_x(self._spline(t), x, 1)

    def factor_table(self, times):
        times = np.asarray(times, dtype=float)
        return self._spline(times), self._edge_spline(times)

    def factor_rate(self, t) -> np.ndarray:
        return self._dspline(t)

    def arclength(self, t, x):
        m = self.metric_at(t)
        return np.interp(x, self.grid.edges, m.arclength_edges)

    def arclength_inverse(self, t, s):
        m = self.metric_at(t)
        return np.interp(s, m.arclength_edges, self.grid.edges)

    def distance(self, t, x, y):
        """Meridian distance; exact when one point is a pole or both share a meridian."""
        self._check_time(t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        pole = lambda p: p[0] in (0.0, math.pi)
        same_meridian = x.size == 1 and y.size == 1 or (x.size == 2 and y.size == 2 and x[1] == y[1])
        if not (same_meridian or pole(x) or pole(y)):
            raise UnsupportedFlowError("WarpedS2 distances are available along meridians and from the poles")
        return float(abs(self.arclength(t, x[0]) - self.arclength(t, y[0])))

    def gauss_curvature(self, t) -> np.ndarray:
        v = self.factor(t)
        lap = round_laplacian_operator(self.grid) @ np.log(v)
        return (1.0 - 0.5 * lap) / v

    def total_area(self, t) -> float:
        return float(np.dot(self.grid.ref_volume, self.factor(t)))

    def ricci_residual(self, t, degree: int = 40) -> float:
        """``max |d_t g + 2 Ric| / |g|`` against a spectral continuum Laplacian.

        ``log v`` is fitted by a Legendre series in ``cos x`` whose round
        Laplacian is exact; the time derivative comes from the stored family.
        The result measures the spatial truncation error of the discrete flow.
        """
        v = self.factor(t)
        z = np.cos(self.grid.centers)
        coef = legendre.legfit(z, np.log(v), degree)
        ell = np.arange(coef.size)
        lap = legendre.legval(z, -ell * (ell + 1) * coef)
        rate = self.factor_rate(t)
        return float(np.max(np.abs(rate - lap + 2.0) / v))

    def to_json(self) -> str:
        return json.dumps({
            "schema": FLOW_SCHEMA_VERSION,
            "kind": "WarpedS2",
            "samples": list(self.kind.samples),
            "t_min": self.t_min,
            "t_max": self.t_max,
            "grid": self.grid.to_dict(),
            "curvature_ceiling": self.curvature_ceiling,
            "times": self.times.tolist(),
            "values": self.values.tolist(),
        })


def _evolve_warped(spec: FlowSpec, grid: Grid, store_dt: float, curvature_ceiling: float,
                   rtol: float, atol: float) -> WarpedFlow:
    kind: WarpedS2 = spec.kind
    v0 = kind.factor_function()(grid.centers)
    lap = round_laplacian_operator(grid)

    def rhs(t, v):
        return lap @ np.log(v) - 2.0

    def jac(t, v):
        return lap @ sparse.diags(1.0 / v)

    def blowup(t, v):
        k = (1.0 - 0.5 * (lap @ np.log(np.maximum(v, 1e-300)))) / v
        return curvature_ceiling - np.max(k)

    blowup.terminal = True
    nstore = max(2, int(math.ceil((spec.t_max - spec.t_min) / store_dt)) + 1)
    times = np.linspace(spec.t_min, spec.t_max, nstore)
    sol = integrate.solve_ivp(rhs, (spec.t_min, spec.t_max), v0, method="BDF", t_eval=times,
                              jac=jac, events=blowup, rtol=rtol, atol=atol)
    if sol.status == 1 or (sol.t_events and sol.t_events[0].size):
        tb = float(sol.t_events[0][0])
        raise FlowSingularityError(
            f"curvature exceeds {curvature_ceiling} at t={tb:.6g}, before t_max={spec.t_max}")
    if sol.status != 0:
        raise FlowSingularityError(f"flow integration failed: {sol.message}")
    return WarpedFlow(spec, grid, sol.t, sol.y.T.copy(), curvature_ceiling)


def evolve_ricci_flow(spec: FlowSpec, grid_size: int = 512, *, euclid_half_width: float = 12.0,
                      store_dt: float = 1e-3, curvature_ceiling: float = 1e4,
                      rtol: float = 1e-10, atol: float = 1e-12) -> ModelFlow:
    """Build the metric family of a flow on a reduced grid.

    Exact kinds return closed-form families; ``WarpedS2`` is integrated in
    time and raises :class:`FlowSingularityError` when the curvature exceeds
    ``curvature_ceiling`` before ``t_max``.
    """
    kind = spec.kind
    if isinstance(kind, EuclideanExact):
        return EuclideanFlow(spec, centered_line_grid(euclid_half_width, grid_size))
    if isinstance(kind, FlatTorus):
        if kind.n != 1:
            raise UnsupportedFlowError("grid-based torus geometry is one-dimensional")
        return TorusFlow(spec, periodic_grid(kind.periods[0], grid_size))
    if isinstance(kind, RoundSphere):
        return RoundSphereFlow(spec, zonal_grid(grid_size, kind.n))
    if isinstance(kind, WarpedS2):
        return _evolve_warped(spec, zonal_grid(grid_size, 2), store_dt, curvature_ceiling, rtol, atol)
    raise UnsupportedFlowError(f"unknown flow kind {kind!r}")


def metric_at(flow: ModelFlow, t: float) -> MetricSample:
    """Metric of a flow family at time ``t``."""
    return flow.metric_at(t)


def distance(flow: ModelFlow, t: float, x, y) -> float:
    return flow.distance(t, x, y)


def flow_from_json(text: str) -> WarpedFlow:
    """Reload a baked ``WarpedS2`` family written by :meth:`WarpedFlow.to_json`."""
    data = json.loads(text)
    if data.get("schema") != FLOW_SCHEMA_VERSION or data.get("kind") != "WarpedS2":
        raise DomainError("unsupported flow container")
    spec = FlowSpec(WarpedS2(tuple(data["samples"])), data["t_min"], data["t_max"])
    g = data["grid"]
    grid = Grid(g["kind"], g["size"], g["lo"], g["hi"], g["dim"])
    return WarpedFlow(spec, grid, np.array(data["times"]), np.array(data["values"]),
                      data["curvature_ceiling"])


def default_warped_profile(samples: int = 256) -> WarpedS2:
    """Smooth, north-south asymmetric perturbation of the unit round sphere."""
    return WarpedS2.from_function(lambda x: 1.0 + 0.3 * np.cos(x) + 0.2 * np.cos(2.0 * x), samples)
