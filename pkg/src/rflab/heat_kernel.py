"""Conjugate heat-kernel measures and the forward heat semigroup.

Forward evolution ``du/dt = Lap_{g_t} u`` uses Crank-Nicolson on curved and
line grids (the operator is re-assembled at both ends of every step) and an
exact Fourier multiplier on the flat circle.  The conjugate kernel measures
``nu_{x0,t0;s}`` come in four flavours:

``closed-form``
    Euclidean space; a Gaussian with covariance ``2 tau``.
``wrapped``
    Flat circle; the periodised Gaussian.
``spectral``
    Shrinking round sphere; a zonal harmonic series.
``discrete-adjoint``
    Any grid flow; the transpose of the discrete forward propagator applied to
    the evaluation functional at the basepoint.  Pairing it with a forward
    evolution reproduces ``(P_{s,t0} f)(x0)`` to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special, stats
from scipy.interpolate import CubicSpline
from scipy.linalg.lapack import dgtsv

from .errors import DomainError, GridMismatchError, StabilityError, UnsupportedFlowError
from .flow_geometry import (DiscreteField, EuclideanFlow, Grid, ModelFlow, RoundSphereFlow,
                            TorusFlow, WarpedFlow, field_values, sphere_area)
from .gaussian_model import phi_cdf, phi_pdf

# ---------------------------------------------------------------------------
# closed-form Gaussian


@dataclass(frozen=True)
class GaussianMeasure:
    """``N(center, 2 tau Id_n)``, the Euclidean conjugate kernel measure."""

    center: tuple[float, ...]
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("tau must be positive")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def std(self) -> float:
        return math.sqrt(2.0 * self.tau)

    def density(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        d2 = np.sum((y - np.asarray(self.center)) ** 2, axis=-1)
        return (4.0 * math.pi * self.tau) ** (-0.5 * self.n) * np.exp(-d2 / (4.0 * self.tau))

    def nodes(self, order: int = 64) -> tuple[np.ndarray, np.ndarray]:
        """Tensor Gauss-Hermite nodes ``(m, n)`` and weights summing to one."""
        x, w = special.roots_hermitenorm(order)
        w = w / w.sum()
        pts = np.array(list(product(x, repeat=self.n)))
        wts = np.prod(np.array(list(product(w, repeat=self.n))), axis=1)
        return np.asarray(self.center) + self.std * pts, wts

    def expect(self, fn: Callable[[np.ndarray], np.ndarray], order: int = 64) -> float:
        """``int fn dnu`` by Gauss-Hermite quadrature; ``fn`` maps ``(m, n)`` points to ``(m,)``."""
        if self.n > 3:
            raise UnsupportedFlowError("tensor quadrature is provided up to n = 3")
        pts, wts = self.nodes(order)
        return float(np.dot(wts, fn(pts)))

    def line_expect(self, fn: Callable[[np.ndarray], np.ndarray], lo: float = -math.inf, hi: float = math.inf,
                    points: Sequence[float] = ()) -> float:
        """``int fn(y_1) dnu`` over ``lo < y_1 < hi`` by adaptive quadrature against the first marginal.

        Unlike :meth:`expect` this stays accurate for integrands with kinks,
        such as clamped data.
        """
        c, sd = self.center[0], self.std
        lo, hi = max(lo, c - 40 * sd), min(hi, c + 40 * sd)
        if hi <= lo:
            return 0.0
        g = lambda y: float(np.asarray(fn(np.array([y])))[0]) * phi_pdf((y - c) / sd) / sd
        pts = [p for p in points if lo < p < hi] or None
        return integrate.quad(g, lo, hi, points=pts, epsabs=1e-14, epsrel=1e-12, limit=500)[0]

    def slab_mass(self, lo: float, hi: float, axis: int = 0) -> float:
        """Mass of ``{lo <= y_axis < hi}``, computed in the nearer tail to avoid cancellation."""
        c = self.center[axis]
        a, b = (lo - c) / self.std, (hi - c) / self.std
        if a > 0:
            return float(phi_cdf(-a) - phi_cdf(-b))
        return float(phi_cdf(b) - phi_cdf(a))

    def radial_cdf(self, r, about: Sequence[float] | None = None) -> np.ndarray:
        """``nu(|y - about| <= r)``; chi law about the centre, noncentral otherwise."""
        r = np.asarray(r, dtype=float)
        scale = 2.0 * self.tau
        if about is None:
            return stats.chi2.cdf(r * r / scale, self.n)
        delta = float(np.sum((np.asarray(about) - np.asarray(self.center)) ** 2)) / scale
        if delta == 0.0:
            return stats.chi2.cdf(r * r / scale, self.n)
        return stats.ncx2.cdf(r * r / scale, self.n, delta)

    def radial_quantile(self, b: float) -> float:
        return float(math.sqrt(2.0 * self.tau * stats.chi2.ppf(b, self.n)))


def gaussian_semigroup(fn: Callable[[np.ndarray], np.ndarray], x, gap: float, order: int = 64) -> float:
    """``(P_{s,t} fn)(x)`` on static ``R^n`` with ``gap = t - s``."""
    x = tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist())
    if gap == 0:
        return float(fn(np.array([x]))[0])
    return GaussianMeasure(x, gap).expect(fn, order)


# ---------------------------------------------------------------------------
# operators and time grids


def _operator(flow: ModelFlow, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell volumes, stiffness diagonal and stiffness coupling at time ``t``."""
    vol, diag, off = _operator_block(flow, np.array([t]))
    return vol[0], diag[0], off[0]


def _operator_block(flow: ModelFlow, times: np.ndarray):
    g = flow.grid
    v, ve = flow.factor_table(times)
    vol = v ** (0.5 * g.dim) * g.ref_volume
    kappa = ve ** (0.5 * (g.dim - 2)) * g.ref_flux / g.h
    right = kappa[:, 1:]
    left = np.roll(right, 1, axis=1) if g.kind == "periodic" else kappa[:, :-1]
    return vol, -(left + right), right


def _operators(flow: ModelFlow, times: np.ndarray, reverse: bool = False, chunk: int = 256):
    """Yield the operator at each step time, assembling in vectorised chunks."""
    order = range(times.size - 1, -1, -1) if reverse else range(times.size)
    order = list(order)
    for start in range(0, len(order), chunk):
        idx = order[start:start + chunk]
        vol, diag, off = _operator_block(flow, times[idx])
        for j in range(len(idx)):
            yield vol[j], diag[j], off[j]


def stable_step(flow: ModelFlow, s: float, t: float, cfl: float = 0.5) -> float:
    """Largest step keeping the explicit half of Crank-Nicolson positive, times ``2 cfl``."""
    worst = 0.0
    for r in np.linspace(s, t, 9):
        vol, diag, _ = _operator(flow, float(r))
        worst = max(worst, float(np.max(-diag / vol)))
    return 2.0 * cfl / worst


def time_grid(flow: ModelFlow, s: float, t: float, record: Sequence[float] | None = None,
              cfl: float = 0.5, steps: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Step times from ``s`` to ``t`` passing through every record time.

    Returns:
        ``(times, record_index)`` where ``times[record_index[j]] == record[j]``.
    """
    if not s <= t:
        raise DomainError("time grids run forward: need s <= t")
    marks = np.unique(np.concatenate([[s, t], np.asarray(record if record is not None else [], float)]))
    if marks[0] < s - 1e-14 or marks[-1] > t + 1e-14:
        raise DomainError("record times must lie in [s, t]")
    if steps is not None:
        dtmax = (t - s) / max(int(steps), 1)
    else:
        dtmax = stable_step(flow, s, t, cfl) if t > s else 1.0
    pieces = [np.array([marks[0]])]
    for a, b in zip(marks[:-1], marks[1:]):
        k = max(1, int(math.ceil((b - a) / dtmax - 1e-9)))
        pieces.append(np.linspace(a, b, k + 1)[1:])
    times = np.concatenate(pieces)
    rec = np.asarray(record if record is not None else [], float)
    idx = np.array([int(np.argmin(np.abs(times - r))) for r in rec], dtype=int)
    return times, idx


def _apply_s(diag, off, u):
    """Multiply by the symmetric stiffness matrix (periodic coupling included)."""
    if u.ndim == 1:
        out = diag * u
        out[:-1] += off[:-1] * u[1:]
        out[1:] += off[:-1] * u[:-1]
        if off[-1] != 0.0:
            out[-1] += off[-1] * u[0]
            out[0] += off[-1] * u[-1]
        return out
    return (diag[:, None] * u + off[:, None] * np.roll(u, -1, axis=0)
            + np.roll(off, 1)[:, None] * np.roll(u, 1, axis=0))


def _solve(vol, diag, off, dt, rhs):
    lower = -0.5 * dt * off[:-1]
    out = dgtsv(lower, vol - 0.5 * dt * diag, lower, rhs)
    if out[4] != 0:
        raise StabilityError("tridiagonal solve failed; reduce the time step")
    return out[3]


def _check_positive(times, flow):
    dt = float(np.max(np.diff(times))) if times.size > 1 else 0.0
    if dt == 0.0:
        return
    lim = stable_step(flow, float(times[0]), float(times[-1]), cfl=1.0)
    if dt > lim * (1 + 1e-9):
        need = int(math.ceil((times[-1] - times[0]) / lim))
        raise StabilityError(
            f"step {dt:.3g} exceeds the positivity limit {lim:.3g}; use at least {need} steps")


def _torus_multiplier(grid: Grid, gap: float) -> np.ndarray:
    k = 2.0 * math.pi * np.fft.rfftfreq(grid.size, d=grid.h)
    return np.exp(-k * k * gap)


def propagate(flow: ModelFlow, values, s: float, t: float, record: Sequence[float] | None = None,
              cfl: float = 0.5, steps: int | None = None, times: np.ndarray | None = None) -> list[np.ndarray]:
    """Forward heat evolution from time ``s`` to ``t``.

    Args:
        values: initial data (array or field) at time ``s``; a 2-D array
            evolves several columns at once.
        record: times at which to return snapshots (defaults to ``[t]``).
        times: explicit step times (overrides ``cfl`` and ``steps``).

    Returns:
        Snapshots at the record times, in order.
    """
    u = np.array(field_values(values), dtype=float)
    rec = [t] if record is None else list(record)
    if isinstance(flow, TorusFlow):
        uh = np.fft.rfft(u, axis=0)
        out = []
        for r in rec:
            mult = _torus_multiplier(flow.grid, r - s)
            out.append(np.fft.irfft(uh * (mult if u.ndim == 1 else mult[:, None]), n=flow.grid.size, axis=0))
        return out
    if times is None:
        times, idx = time_grid(flow, s, t, rec, cfl, steps)
    else:
        idx = np.array([int(np.argmin(np.abs(times - r))) for r in rec], dtype=int)
    if steps is not None:
        _check_positive(times, flow)
    if flow.grid.kind == "periodic":
        raise UnsupportedFlowError("Crank-Nicolson on periodic grids is only needed for evolving metrics")
    snaps = {}
    want = set(idx.tolist())
    if 0 in want:
        snaps[0] = u.copy()
    ops = _operators(flow, times)
    op0 = next(ops)
    for k in range(1, times.size):
        dt = float(times[k] - times[k - 1])
        op1 = next(ops)
        vol0, d0, o0 = op0
        vol1, d1, o1 = op1
        su = _apply_s(d0, o0, u)
        if u.ndim == 1:
            rhs = vol1 * (u + 0.5 * dt * su / vol0)
        else:
            rhs = vol1[:, None] * (u + 0.5 * dt * su / vol0[:, None])
        u = _solve(vol1, d1, o1, dt, rhs)
        op0 = op1
        if k in want:
            snaps[k] = u.copy()
    return [snaps[int(i)] for i in idx]


def adjoint_masses(flow: ModelFlow, weights: np.ndarray, s: float, t0: float,
                   record: Sequence[float] | None = None, cfl: float = 0.5,
                   times: np.ndarray | None = None) -> list[np.ndarray]:
    """Transpose of :func:`propagate`: cell masses at earlier times.

    ``weights`` is a covector at time ``t0`` (for instance the evaluation
    functional at the basepoint).  The returned masses ``m(r)`` satisfy
    ``m(r) . u(r) = weights . u(t0)`` for every forward solution ``u`` on the
    same step times.
    """
    m = np.array(weights, dtype=float)
    rec = [s] if record is None else list(record)
    if isinstance(flow, TorusFlow):
        mh = np.fft.rfft(m)
        return [np.fft.irfft(mh * _torus_multiplier(flow.grid, t0 - r), n=flow.grid.size) for r in rec]
    if times is None:
        times, idx = time_grid(flow, s, t0, rec, cfl)
    else:
        idx = np.array([int(np.argmin(np.abs(times - r))) for r in rec], dtype=int)
    want = set(idx.tolist())
    snaps = {}
    last = times.size - 1
    if last in want:
        snaps[last] = m.copy()
    ops = _operators(flow, times, reverse=True)
    op1 = next(ops)
    for k in range(last, 0, -1):
        dt = float(times[k] - times[k - 1])
        op0 = next(ops)
        vol1, d1, o1 = op1
        vol0, d0, o0 = op0
        z = _solve(vol1, d1, o1, dt, m)
        y = vol1 * z
        m = y + 0.5 * dt * _apply_s(d0, o0, y / vol0)
        op1 = op0
        if k - 1 in want:
            snaps[k - 1] = m.copy()
    return [snaps[int(i)] for i in idx]


@dataclass(frozen=True)
class SemigroupOperator:
    """The forward heat propagator ``P_{s,t}`` of a flow."""

    flow: ModelFlow
    source: float
    target: float
    cfl: float = 0.5
    steps: int | None = None

    def __post_init__(self):
        if self.target < self.source:
            raise DomainError("P_{s,t} requires s <= t")
        self.flow._check_time(self.source)
        self.flow._check_time(self.target)

    def apply(self, f) -> DiscreteField:
        if isinstance(f, DiscreteField) and abs(f.time - self.source) > 1e-12:
            raise GridMismatchError("the field must be sampled at the source time")
        vals = field_values(f, self.flow.grid)
        if self.target == self.source:
            return DiscreteField(vals.copy(), self.flow.grid, self.target)
        out = propagate(self.flow, vals, self.source, self.target, cfl=self.cfl, steps=self.steps)[0]
        return DiscreteField(out, self.flow.grid, self.target)


def heat_evolve(op: SemigroupOperator, f) -> DiscreteField:
    """Apply ``P_{s,t}`` to a field sampled at time ``s``."""
    return op.apply(f)


def evaluation_weights(flow: ModelFlow, x0) -> np.ndarray:
    """Nonnegative covector reproducing the value at ``x0`` to second order."""
    g = flow.grid
    w = np.zeros(g.size)
    if g.kind == "zonal":
        p = float(np.atleast_1d(x0)[0])
        if p == 0.0:
            w[0] = 1.0
        elif p == math.pi:
            w[-1] = 1.0
        else:
            raise UnsupportedFlowError("zonal kernels must be based at a pole")
        return w
    x = float(np.atleast_1d(x0)[0])
    c = g.centers
    if g.kind == "periodic":
        x = g.lo + 0.5 * g.h + np.mod(x - g.lo - 0.5 * g.h, g.length)
    pos = (x - c[0]) / g.h
    i = int(math.floor(pos))
    frac = pos - i
    if g.kind == "periodic":
        w[i % g.size] += 1.0 - frac
        w[(i + 1) % g.size] += frac
    else:
        if not (c[0] <= x <= c[-1]):
            raise DomainError("basepoint outside the grid")
        i = min(i, g.size - 2)
        frac = pos - i
        w[i] += 1.0 - frac
        w[i + 1] += frac
    return w


# ---------------------------------------------------------------------------
# kernel measures


@dataclass(frozen=True, eq=False)
class KernelMeasure:
    """The probability measure ``nu_{x0,t0;s}`` on a flow.

    Attributes:
        flow: the flow.
        x0: basepoint (reduced coordinate, or a coordinate tuple for ``R^n``).
        t0: base time.
        s: evaluation time.
        masses: quadrature weights at the cell centres (sum one).
        method: ``closed-form``, ``wrapped``, ``spectral`` or ``discrete-adjoint``.
        cdf: exact ``x -> nu({reduced coordinate < x})`` when available.
        density_fn: exact density against ``dg_s`` as a function of the
            reduced coordinate, when available.
        gaussian: the Euclidean closed form.
        truncation_error: bound on neglected series terms (spectral only).
    """

    flow: ModelFlow
    x0: object
    t0: float
    s: float
    masses: np.ndarray
    method: str
    cdf: Callable | None = None
    density_fn: Callable | None = None
    gaussian: GaussianMeasure | None = None
    truncation_error: float = 0.0

    @property
    def tau(self) -> float:
        return self.t0 - self.s

    @property
    def grid(self) -> Grid:
        return self.flow.grid

    @cached_property
    def metric(self):
        return self.flow.metric_at(self.s)

    @cached_property
    def density(self) -> np.ndarray:
        """Density against ``dg_s`` at the cell centres."""
        if self.density_fn is not None:
            return np.asarray(self.density_fn(self.grid.centers), dtype=float)
        return self.masses / self.metric.cell_volume

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def density_at(self, x) -> np.ndarray:
        """Density at arbitrary reduced coordinates (cubic interpolation on grids)."""
        if self.density_fn is not None:
            return np.asarray(self.density_fn(np.asarray(x, dtype=float)), dtype=float)
        g = self.grid
        c, d = g.centers, self.density
        if g.kind == "periodic":
            xe = np.concatenate([c[-3:] - g.length, c, c[:3] + g.length])
            de = np.concatenate([d[-3:], d, d[:3]])
            x = g.lo + np.mod(np.asarray(x, dtype=float) - g.lo, g.length)
            return CubicSpline(xe, de)(x)
        if g.kind == "zonal":
            xe = np.concatenate([[-c[0]], c, [2 * math.pi - c[-1]]])
            de = np.concatenate([[d[0]], d, [d[-1]]])
            return CubicSpline(xe, de)(x)
        return CubicSpline(c, d)(x)

    def expect(self, h) -> float:
        """``int h dnu`` for a grid field/array, or a callable on ``R^n`` for closed forms."""
        if callable(h) and not isinstance(h, np.ndarray):
            if self.gaussian is not None:
                return self.gaussian.expect(h)
            return float(np.dot(self.masses, h(self.grid.centers)))
        vals = field_values(h, self.grid)
        if isinstance(h, DiscreteField) and abs(h.time - self.s) > 1e-12:
            raise GridMismatchError("observable and measure live at different times")
        return float(np.dot(self.masses, vals))

    def interval_mass(self, a: float, b: float) -> float:
        """``nu({a <= x < b})`` for reduced coordinates ``a <= b``."""
        if b <= a:
            return 0.0
        if self.gaussian is not None:
            return self.gaussian.slab_mass(a, b)
        if self.cdf is not None:
            return float(self.cdf(b) - self.cdf(a))
        g = self.grid
        e = g.edges
        if g.kind == "periodic":
            total = 0.0
            shift = math.floor((a - g.lo) / g.length) * g.length
            a, b = a - shift, b - shift
            while a < g.hi:
                total += self._mass_in(max(a, g.lo), min(b, g.hi))
                a, b = g.lo, b - g.length
                if b <= g.lo:
                    break
            return total
        return self._mass_in(max(a, e[0]), min(b, e[-1]))

    def _mass_in(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        g = self.grid
        e = g.edges
        lo = np.clip(a, e[:-1], e[1:])
        hi = np.clip(b, e[:-1], e[1:])
        if g.kind == "zonal":
            frac = self._zonal_fraction(lo, hi)
        else:
            frac = (hi - lo) / g.h
        return float(np.dot(self.masses, frac))

    def _zonal_fraction(self, lo, hi):
        g = self.grid
        e = g.edges
        if g.dim == 2:
            part = np.cos(lo) - np.cos(hi)
            whole = np.cos(e[:-1]) - np.cos(e[1:])
            return part / whole
        return (hi - lo) / g.h


def _torus_image_count(period: float, tau: float, tol: float = 1e-17) -> int:
    std = math.sqrt(2.0 * tau)
    # images beyond m periods contribute less than Phi(-(m - 1/2) P / std)
    m = 1
    while phi_cdf(-(m - 0.5) * period / std) > tol and m < 10000:
        m += 1
    return m


def wrapped_gaussian_density(x, x0: float, tau: float, period: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = _torus_image_count(period, tau)
    shifts = period * np.arange(-m, m + 1)
    d = np.mod(x - x0 + 0.5 * period, period) - 0.5 * period
    z = d[..., None] + shifts
    return np.sum(np.exp(-z * z / (4.0 * tau)), axis=-1) / math.sqrt(4.0 * math.pi * tau)


def wrapped_gaussian_cdf(x, x0: float, tau: float, lo: float, period: float) -> np.ndarray:
    """``nu([lo, x))`` for the wrapped Gaussian on the circle ``[lo, lo + P)``."""
    x = np.asarray(x, dtype=float)
    m = _torus_image_count(period, tau) + 1
    std = math.sqrt(2.0 * tau)
    shifts = period * np.arange(-m, m + 1)
    c = x0 + shifts
    full = np.floor((x - lo) / period)
    xr = x - full * period
    part = np.sum(phi_cdf((xr[..., None] - c) / std) - phi_cdf((lo - c) / std), axis=-1)
    return full + part


def gegenbauer_normalized(n: int, ell: int, z: np.ndarray) -> np.ndarray:
    """``C_ell^{(n-1)/2}(z) / C_ell^{(n-1)/2}(1)`` (Legendre polynomials for ``n = 2``)."""
    if n == 2:
        return special.eval_legendre(ell, z)
    lam = 0.5 * (n - 1)
    return special.eval_gegenbauer(ell, lam, z) / special.eval_gegenbauer(ell, lam, 1.0)


def harmonic_dimension(n: int, ell: int) -> float:
    """Dimension of degree-``ell`` spherical harmonics on ``S^n``."""
    if ell == 0:
        return 1.0
    return (2 * ell + n - 1) * math.comb(ell + n - 2, ell) / (n - 1) if n > 1 else 2.0


def sphere_kernel_series(n: int, elapsed: float, tol: float = 1e-13, ell_min: int = 64,
                         ell_cap: int = 4000) -> tuple[np.ndarray, float]:
    """Mode weights ``N(n, l) exp(-l (l + n - 1) E)`` and the neglected tail bound."""
    ell = ell_min
    while True:
        ls = np.arange(ell + 1)
        dims = np.array([harmonic_dimension(n, int(l)) for l in ls])
        w = dims * np.exp(-ls * (ls + n - 1) * elapsed)
        tail = sum(harmonic_dimension(n, l) * math.exp(-l * (l + n - 1) * elapsed)
                   for l in range(ell + 1, ell + 200))
        if tail < tol or ell >= ell_cap:
            return w, tail
        ell = min(2 * ell, ell_cap)


def _round_sphere_measure(flow: RoundSphereFlow, x0, t0: float, s: float, tol: float,
                          ell_min: int) -> KernelMeasure:
    n = flow.n
    p = float(np.atleast_1d(x0)[0])
    if p not in (0.0, math.pi):
        raise UnsupportedFlowError("round-sphere kernels are computed for polar basepoints")
    r2s = flow.radius_squared(s)
    elapsed = math.log(r2s / flow.radius_squared(t0)) / (2.0 * (n - 1))
    weights, tail = sphere_kernel_series(n, elapsed, tol, ell_min)
    area = sphere_area(n) * r2s ** (0.5 * n)
    sign = 1.0 if p == 0.0 else -1.0
    ls = np.arange(weights.size)

    def density(x):
        z = sign * np.cos(np.asarray(x, dtype=float))
        out = np.zeros_like(z)
        for l, wl in zip(ls, weights):
            out = out + wl * gegenbauer_normalized(n, int(l), z)
        return out / area

    def cap_mass(x):
        """Mass of the polar cap around the basepoint of angular radius ``x``."""
        x = np.asarray(x, dtype=float)
        if n == 2:
            z = np.cos(x)
            out = 0.5 * (1.0 - z)
            for l in range(1, ls.size):
                prim = (special.eval_legendre(l + 1, z) - special.eval_legendre(l - 1, z)) / (2 * l + 1)
                out = out - 0.5 * weights[l] * prim
            return out
        g, gw = np.polynomial.legendre.leggauss(64)
        xs = np.atleast_1d(x)
        res = np.empty(xs.shape)
        for i, xi in enumerate(xs.ravel()):
            th = 0.5 * xi * (g + 1.0)
            val = np.zeros_like(th)
            for l, wl in zip(ls, weights):
                val += wl * gegenbauer_normalized(n, int(l), np.cos(th))
            res.ravel()[i] = 0.5 * xi * np.dot(gw, val * np.sin(th) ** (n - 1)) * sphere_area(n - 1) / sphere_area(n)
        return res.reshape(np.shape(x))

    if p == 0.0:
        cdf = cap_mass
    else:
        cdf = lambda x: 1.0 - cap_mass(math.pi - np.asarray(x, dtype=float))
    e = flow.grid.edges
    masses = np.diff(cdf(e))
    return KernelMeasure(flow, x0, t0, s, masses, "spectral", cdf=cdf, density_fn=density,
                         truncation_error=tail / area)


def conjugate_kernel(flow: ModelFlow, x0, t0: float, s: float, *, method: str | None = None,
                     spectral_tol: float = 1e-13, ell_min: int = 64, cfl: float = 0.5,
                     bump_cells: float = 10.0) -> KernelMeasure:
    """Conjugate heat-kernel measure ``nu_{x0,t0;s}``.

    Args:
        flow: a model flow.
        x0: basepoint; zonal flows require a pole (``0`` or ``pi``).
        t0: base time.
        s: evaluation time, ``s < t0``.
        method: override the default representation; ``"discrete-adjoint"``
            is available on every grid flow and ``"bump"`` starts the discrete
            conjugate evolution from a Gaussian bump of width
            ``bump_cells * h^2`` instead of the point functional.

    Raises:
        DomainError: if ``s >= t0`` or a time leaves the flow interval.
    """
    if not s < t0:
        raise DomainError(f"need s < t0, got s={s}, t0={t0}")
    flow._check_time(s)
    flow._check_time(t0)
    tau = t0 - s
    method = method or {EuclideanFlow: "closed-form", TorusFlow: "wrapped",
                        RoundSphereFlow: "spectral", WarpedFlow: "discrete-adjoint"}[type(flow)]
    g = flow.grid
    if method == "closed-form":
        if not isinstance(flow, EuclideanFlow):
            raise UnsupportedFlowError("closed forms exist only on Euclidean space")
        center = tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist())
        if len(center) == 1 and flow.n > 1:
            center = center + (0.0,) * (flow.n - 1)
        gm = GaussianMeasure(center, tau)
        c0 = center[0]
        dens = lambda x: np.exp(-(np.asarray(x) - c0) ** 2 / (4 * tau)) / math.sqrt(4 * math.pi * tau)
        w = dens(g.centers) * g.h
        w = w / w.sum()
        cdf = lambda x: phi_cdf((np.asarray(x, dtype=float) - c0) / gm.std)
        return KernelMeasure(flow, center, t0, s, w, method, cdf=cdf, density_fn=dens, gaussian=gm)
    if method == "wrapped":
        if not isinstance(flow, TorusFlow):
            raise UnsupportedFlowError("wrapped Gaussians live on the flat torus")
        period = flow.kind.periods[0]
        xc = float(np.atleast_1d(x0)[0])
        dens = lambda x: wrapped_gaussian_density(x, xc, tau, period)
        w = dens(g.centers) * g.h
        w = w / w.sum()
        cdf = lambda x: wrapped_gaussian_cdf(x, xc, tau, g.lo, period)
        return KernelMeasure(flow, xc, t0, s, w, method, cdf=cdf, density_fn=dens)
    if method == "spectral":
        if not isinstance(flow, RoundSphereFlow):
            raise UnsupportedFlowError("the spectral series is available on the round sphere")
        return _round_sphere_measure(flow, x0, t0, s, spectral_tol, ell_min)
    if method == "discrete-adjoint":
        m = adjoint_masses(flow, evaluation_weights(flow, x0), s, t0, [s], cfl)[0]
        return KernelMeasure(flow, x0, t0, s, m, method)
    if method == "bump":
        width = bump_cells * g.h ** 2
        t_init = t0 - width
        if t_init <= s:
            raise DomainError("bump initialisation needs tau > bump width")
        metric = flow.metric_at(t_init)
        p = float(np.atleast_1d(x0)[0])
        if g.kind == "zonal":
            d = flow.arclength(t_init, g.centers) - flow.arclength(t_init, p)
        elif g.kind == "periodic":
            d = np.mod(g.centers - p + 0.5 * g.length, g.length) - 0.5 * g.length
        else:
            d = g.centers - p
        bump = np.exp(-d * d / (4.0 * width)) * metric.cell_volume
        bump /= bump.sum()
        m = adjoint_masses(flow, bump, s, t_init, [s], cfl)[0]
        return KernelMeasure(flow, x0, t0, s, m, method)
    raise DomainError(f"unknown kernel method {method!r}")


def nu_expect(measure: KernelMeasure, h) -> float:
    """``int h dnu`` for a field at the measure's time."""
    return measure.expect(h)


def kernel_snapshot_csv(measure: KernelMeasure) -> str:
    """CSV text with columns ``x, density``."""
    lines = ["x,density"]
    for x, d in zip(measure.grid.centers, measure.density):
        lines.append(f"{x:.17g},{d:.17g}")
    return "\n".join(lines) + "\n"
