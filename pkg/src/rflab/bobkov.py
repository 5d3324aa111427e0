"""Bobkov's functional along the heat flow.

For a heat solution ``u`` with values in ``(0, 1)`` and a base time ``t0``,

    Q(., t) = sqrt(I(u)^2 + a(t) |grad u|^2),   a(t) = lam + 2 (t0 - t),

and ``t -> int Q dnu_t`` is nonincreasing.  The pointwise rate of decrease is
expressed through ``w = Phi^{-1}(u)`` and ``L = sqrt(1 + a |grad w|^2)``.
This module evaluates ``Q`` and that rate on grids, runs the monotonicity scan
by pairing forward heat solutions with discrete-adjoint kernel masses, and
offers closed-form Euclidean counterparts computed by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import DomainError, PreconditionError, UnsupportedFlowError
from .flow_geometry import (DiscreteField, MetricSample, ModelFlow, coordinate_derivative,
                            field_values, gradient_norm, hessian_norms)
from .gaussian_model import phi_cdf, phi_pdf, phi_quantile, profile_I
from .heat_kernel import (KernelMeasure, adjoint_masses, evaluation_weights, propagate,
                          time_grid)

DEFAULT_CLAMP = 1e-6


@dataclass(frozen=True, eq=False)
class BobkovState:
    """A heat solution snapshot with the coefficient ``a(t) = lam + 2 (t0 - t)``."""

    u: DiscreteField
    t0: float
    lam: float = 0.0
    clamp: float = DEFAULT_CLAMP

    @property
    def time(self) -> float:
        return self.u.time

    @property
    def coefficient(self) -> float:
        a = self.lam + 2.0 * (self.t0 - self.u.time)
        if a < -1e-14:
            raise DomainError("a(t) must be nonnegative: need t <= t0 + lam/2")
        return max(a, 0.0)

    def check_clamp(self):
        u = self.u.values
        lo, hi = self.clamp * (1 - 1e-12), 1.0 - self.clamp * (1 - 1e-12)
        if np.any(u < lo) or np.any(u > hi):
            raise DomainError(f"u leaves [{self.clamp}, 1 - {self.clamp}]")


def clamp_values(f, eps: float):
    """The reduction ``f -> (1 - 2 eps) f + eps`` into ``[eps, 1 - eps]``."""
    return (1.0 - 2.0 * eps) * np.asarray(f, dtype=float) + eps


def q_from_values(u: np.ndarray, grad2: np.ndarray, a: float) -> np.ndarray:
    return np.sqrt(np.square(profile_I(np.clip(u, 0.0, 1.0))) + a * grad2)


def q_value(state: BobkovState, metric: MetricSample) -> DiscreteField:
    """Pointwise ``Q = sqrt(I(u)^2 + a |grad u|^2)``."""
    g = gradient_norm(state.u, metric).values
    return DiscreteField(q_from_values(state.u.values, g * g, state.coefficient), metric.grid, metric.time)


@dataclass(frozen=True)
class DefectField:
    """Pointwise Bobkov defect and its strengthened lower bound."""

    defect: np.ndarray
    lower_bound: np.ndarray
    hess2: np.ndarray
    time: float


def bobkov_defect(state: BobkovState, metric: MetricSample) -> DefectField:
    """``(a I(u)/L) (|Hess w|^2 - a |Hess w(grad w, .)|^2 / L^2)`` with ``w = Phi^{-1}(u)``.

    The Hessian is taken of ``w`` directly.  Also returns the lower bound
    ``(a I(u)/L) |Hess w|^2 / L^2``.

    Raises:
        DomainError: if ``u`` leaves the clamp interval.
    """
    state.check_clamp()
    a = state.coefficient
    u = state.u.values
    w = phi_quantile(u)
    grad2, hess2, mixed2 = hessian_norms(w, metric)
    L2 = 1.0 + a * grad2
    L = np.sqrt(L2)
    pref = a * profile_I(u) / L
    defect = pref * (hess2 - a * mixed2 / L2)
    lower = pref * hess2 / L2
    return DefectField(defect, lower, hess2, metric.time)


# ---------------------------------------------------------------------------
# monotonicity scan


@dataclass
class ScanResult:
    """Series ``t -> int Q dnu_t`` on record times from ``s`` to ``t0``."""

    times: np.ndarray
    values: np.ndarray
    tol_mono: float
    final_bound: float
    defect_integrals: np.ndarray | None = None
    lower_integrals: np.ndarray | None = None
    grid_size: int = 0
    dt: float = 0.0
    method: str = ""

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def violations(self) -> np.ndarray:
        """Per-step increases (positive parts of the increments)."""
        return np.maximum(self.increments, 0.0)

    @property
    def max_violation(self) -> float:
        return float(self.violations.max()) if self.values.size > 1 else 0.0

    @property
    def worst_step(self) -> int:
        return int(np.argmax(self.increments)) if self.values.size > 1 else 0

    @property
    def drop(self) -> float:
        return float(self.values[0] - self.values[-1])

    @property
    def monotone(self) -> bool:
        return self.max_violation <= self.tol_mono

    @property
    def final_ok(self) -> bool:
        return self.values[-1] >= self.final_bound - self.tol_mono

    def integrated_defect(self) -> float:
        """Time integral of ``int defect dnu_t`` by the trapezoid rule."""
        if self.defect_integrals is None:
            return float("nan")
        return float(np.trapezoid(self.defect_integrals, self.times))

    def integrated_lower(self) -> float:
        if self.lower_integrals is None:
            return float("nan")
        return float(np.trapezoid(self.lower_integrals, self.times))

    @property
    def residuals(self) -> np.ndarray:
        """Per-pair defect-identity residuals ``V(t_{k+2}) - V(t_k) + int D dt`` (Simpson).

        Zero in the continuum; measures the discretization error of the scan.
        Requires an even number of record intervals.
        """
        d = self.defect_integrals
        if d is None or (self.values.size - 1) % 2:
            return np.array([])
        h = self.times[1] - self.times[0]
        simpson = (d[0:-2:2] + 4.0 * d[1:-1:2] + d[2::2]) * h / 3.0
        return np.diff(self.values[::2]) + simpson

    @property
    def max_residual(self) -> float:
        r = self.residuals
        return float(np.max(np.abs(r))) if r.size else float("nan")

    def failure_report(self) -> str:
        if self.monotone:
            return "monotone"
        k = self.worst_step
        return (f"increase {self.increments[k]:.3e} > tol_mono {self.tol_mono:.3e} "
                f"between t={self.times[k]:.6g} and t={self.times[k + 1]:.6g}")

    def csv(self) -> str:
        rows = ["t,value"] + [f"{t:.17g},{v:.17g}" for t, v in zip(self.times, self.values)]
        return "\n".join(rows) + "\n"


def tol_mono_for(grid_h: float, dt: float, constant: float) -> float:
    """``tol_mono = C (h^2 + dt)``."""
    return constant * (grid_h ** 2 + dt)


def monotone_scan(flow: ModelFlow, x0, t0: float, f, s: float | None = None, steps: int = 64, *,
                  lam: float = 0.0, clamp: float = DEFAULT_CLAMP, tol_constant: float = 1.0,
                  cfl: float = 0.5, with_defect: bool = True) -> ScanResult:
    """Evaluate ``t -> int Q(., t) dnu_t`` at ``steps + 1`` equally spaced times.

    ``u`` is the forward heat evolution of ``f`` from ``s``; ``nu_t`` is the
    discrete-adjoint conjugate kernel based at ``(x0, t0)`` on the same step
    times, so the final value equals ``I(u(x0, t0))`` up to the evaluation
    functional.  ``f`` is clamped into ``[clamp, 1 - clamp]``.
    """
    if isinstance(f, DiscreteField):
        s = f.time if s is None else s
    if s is None:
        raise DomainError("the initial time s is required for array data")
    if not s < t0:
        raise DomainError("need s < t0")
    vals = clamp_values(field_values(f, flow.grid), clamp)
    record = np.linspace(s, t0, steps + 1)
    if flow.grid.kind == "periodic":
        times, idx = record, np.arange(record.size)
    else:
        times, idx = time_grid(flow, s, t0, record, cfl)
    us = propagate(flow, vals, s, t0, record, times=times)
    ms = adjoint_masses(flow, evaluation_weights(flow, x0), s, t0, record, times=times)
    values = np.empty(record.size)
    dint = np.empty(record.size) if with_defect else None
    lint = np.empty(record.size) if with_defect else None
    for j, (t, u, m) in enumerate(zip(record, us, ms)):
        metric = flow.metric_at(float(t))
        st = BobkovState(DiscreteField(u, flow.grid, float(t)), t0, lam, clamp)
        values[j] = float(np.dot(m, q_value(st, metric).values))
        if with_defect:
            d = bobkov_defect(BobkovState(DiscreteField(np.clip(u, clamp, 1 - clamp), flow.grid, float(t)),
                                          t0, lam, clamp), metric)
            dint[j] = float(np.dot(m, d.defect))
            lint[j] = float(np.dot(m, d.lower_bound))
    u_final = float(np.dot(evaluation_weights(flow, x0), us[-1]))
    dt = float(np.max(np.diff(times))) if times.size > 1 else 0.0
    if flow.grid.kind == "periodic":
        dt = 0.0
    tol = tol_mono_for(flow.grid.h, dt, tol_constant)
    return ScanResult(record, values, tol, float(profile_I(u_final)), dint, lint,
                      flow.grid.size, dt, "grid")


def euclidean_monotone_scan(f: Callable, grad_f: Callable, x0: float, tau: float, steps: int = 64,
                            *, lam: float = 0.0, order: int = 96, tol: float = 1e-9) -> ScanResult:
    """Closed-form Euclidean scan for ``f`` depending on one coordinate.

    ``u(t, y) = E f(y + sqrt(2 (t - s)) Z)`` and its derivative are computed by
    nested Gauss-Hermite quadrature, and ``nu_t = N(x0, 2 (t0 - t))``.
    """
    x, w = special.roots_hermitenorm(order)
    w = w / w.sum()
    gaps = np.linspace(0.0, tau, steps + 1)  # t - s
    values = np.empty(gaps.size)
    for j, gap in enumerate(gaps):
        remaining = tau - gap
        y = x0 + math.sqrt(2.0 * remaining) * x
        if gap > 0:
            inner = y[:, None] + math.sqrt(2.0 * gap) * x[None, :]
            u = f(inner) @ w
            du = grad_f(inner) @ w
        else:
            u = f(y)
            du = grad_f(y)
        a = lam + 2.0 * remaining
        q = np.sqrt(profile_I(np.clip(u, 0, 1)) ** 2 + a * du * du)
        values[j] = float(np.dot(w, q))
    u_final = float(f(np.array([x0]))[0]) if tau == 0 else float(
        np.dot(w, f(x0 + math.sqrt(2.0 * tau) * x)))
    return ScanResult(gaps, values, tol, float(profile_I(u_final)), method="closed-form")


# ---------------------------------------------------------------------------
# inequality checks


@dataclass(frozen=True)
class InequalityRecord:
    """``lhs <= rhs`` with ``margin = rhs - lhs``."""

    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float) -> bool:
        return self.margin >= -tol


def _measure_grad2(measure: KernelMeasure, vals: np.ndarray) -> np.ndarray:
    g = gradient_norm(vals, measure.metric).values
    return g * g


def _is_pair(f) -> bool:
    return isinstance(f, tuple) and len(f) == 2 and callable(f[0])


def _pair_expect(measure: KernelMeasure, fn) -> float:
    """``int fn(y_1) dnu`` for callable data; adaptive, so clamping kinks are resolved."""
    if measure.gaussian is None:
        raise DomainError("callable data requires a closed-form Euclidean measure")
    return measure.gaussian.line_expect(fn)


def _bobkov_once(measure: KernelMeasure, f, eps: float, lam: float = 0.0) -> InequalityRecord:
    tau = measure.tau
    if _is_pair(f):
        fn, dfn = f

        def rhs_fn(y):
            v = clamp_values(fn(y), eps)
            g = (1.0 - 2.0 * eps) * dfn(y)
            return np.sqrt(profile_I(v) ** 2 + (2.0 * tau + lam) * g * g)

        mean = _pair_expect(measure, lambda y: clamp_values(fn(y), eps))
        return InequalityRecord(float(profile_I(mean)), _pair_expect(measure, rhs_fn))
    vals = clamp_values(field_values(f, measure.grid), eps)
    g2 = _measure_grad2(measure, vals)
    rhs = measure.expect(np.sqrt(profile_I(vals) ** 2 + (2.0 * tau + lam) * g2))
    return InequalityRecord(float(profile_I(measure.expect(vals))), rhs)


def bobkov_inequality_check(measure: KernelMeasure, f, eps: float = DEFAULT_CLAMP,
                            sharp: bool = False) -> InequalityRecord:
    """``I(int f dnu) <= int sqrt(I(f)^2 + 2 tau |grad f|^2) dnu``.

    ``f`` is a grid field at the measure's time, or on Euclidean space a pair
    ``(f, f')`` of callables of the first coordinate.  With ``sharp=True``
    both sides are extrapolated to ``eps -> 0`` from ``{1e-4, 1e-5, 1e-6}``.
    """
    if not sharp:
        return _bobkov_once(measure, f, eps)
    return _extrapolate(lambda e: _bobkov_once(measure, f, e))


def _extrapolate(run: Callable[[float], InequalityRecord], eps=(1e-4, 1e-5, 1e-6)) -> InequalityRecord:
    recs = [run(e) for e in eps]
    e = np.asarray(eps)
    lhs = np.polyval(np.polyfit(e, [r.lhs for r in recs], 2), 0.0)
    rhs = np.polyval(np.polyfit(e, [r.rhs for r in recs], 2), 0.0)
    return InequalityRecord(float(lhs), float(rhs))


def lambda_family_check(measure: KernelMeasure, f, lam: float, eps: float = DEFAULT_CLAMP,
                        grad_at_base: float | None = None) -> InequalityRecord:
    """``sqrt(I(Pf)^2 + lam |grad Pf|^2)(x0) <= P[sqrt(I(f)^2 + (2 tau + lam)|grad f|^2)](x0)``.

    On Euclidean space ``f`` is a pair ``(f, f')`` and ``grad Pf(x0) = E f'``.
    On grid flows ``grad Pf(x0)`` is obtained from the forward evolution of
    ``f`` (zero at the poles of zonal flows by symmetry) unless supplied.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if _is_pair(f):
        mean = _pair_expect(measure, lambda y: clamp_values(f[0](y), eps))
        grad = (1.0 - 2.0 * eps) * _pair_expect(measure, f[1])
    else:
        vals = clamp_values(field_values(f, measure.grid), eps)
        mean = measure.expect(vals)
        if grad_at_base is None:
            grad = _base_gradient(measure, vals)
        else:
            grad = grad_at_base
    lhs = math.sqrt(profile_I(mean) ** 2 + lam * grad * grad)
    rhs = _bobkov_once(measure, f, eps, lam).rhs
    return InequalityRecord(lhs, rhs)


def _base_gradient(measure: KernelMeasure, vals: np.ndarray) -> float:
    flow = measure.flow
    if flow.grid.kind == "zonal":
        return 0.0
    u = propagate(flow, vals, measure.s, measure.t0)[0]
    metric = flow.metric_at(measure.t0)
    du = coordinate_derivative(u, metric) / np.sqrt(metric.factor)
    return float(np.dot(evaluation_weights(flow, measure.x0), du))


def gradient_contraction_ratio(measure: KernelMeasure, f, lams: Sequence[float] = (1e2, 1e4, 1e6),
                               eps: float = DEFAULT_CLAMP) -> list[tuple[float, float, float]]:
    """Large-``lam`` limit of the family: ``(lam, lhs/rhs, |grad Pf| / P|grad f|)``.

    As ``lam`` grows the ratio of the two sides approaches the gradient
    contraction ratio at the basepoint.
    """
    if _is_pair(f):
        grad = (1.0 - 2.0 * eps) * abs(_pair_expect(measure, f[1]))
        pgrad = (1.0 - 2.0 * eps) * _pair_expect(measure, lambda y: np.abs(f[1](y)))
    else:
        vals = clamp_values(field_values(f, measure.grid), eps)
        grad = abs(_base_gradient(measure, vals))
        pgrad = measure.expect(np.sqrt(_measure_grad2(measure, vals)))
    out = []
    for lam in lams:
        rec = lambda_family_check(measure, f, lam, eps)
        out.append((float(lam), rec.lhs / rec.rhs, grad / pgrad if pgrad > 0 else 1.0))
    return out


@dataclass(frozen=True)
class RigidityReport:
    """Integrated defect of a scan measured two ways."""

    scan_drop: float
    defect_quadrature: float
    lower_quadrature: float
    floor: float

    @property
    def relative_gap(self) -> float:
        scale = max(abs(self.defect_quadrature), 1e-300)
        return abs(self.scan_drop - self.defect_quadrature) / scale

    @property
    def positive(self) -> bool:
        return self.scan_drop > self.floor


@dataclass(frozen=True)
class CalibrationStudy:
    """Scan errors at several resolutions and the fitted ``tol_mono`` constant."""

    grid_sizes: tuple[int, ...]
    scale: tuple[float, ...]
    max_violation: tuple[float, ...]
    max_residual: tuple[float, ...]
    constant: float

    def shrink(self, quantity: str = "max_residual") -> list[float]:
        vals = getattr(self, quantity)
        return [vals[i] / vals[i + 1] if vals[i + 1] > 0 else math.inf for i in range(len(vals) - 1)]


def calibrate_tol_mono(make_flow: Callable[[int], ModelFlow], x0, t0: float, f: Callable, s: float,
                       grid_sizes: Sequence[int] = (128, 256, 512), steps: int = 64,
                       safety: float = 2.0, **kw) -> CalibrationStudy:
    """Fit ``C`` in ``tol_mono = C (h^2 + dt)`` from scans on nested grids.

    ``C`` is ``safety`` times the largest observed ratio of the defect-identity
    residual to ``h^2 + dt``; ``f`` is a callable of the reduced coordinate.
    """
    scales, viols, ress = [], [], []
    for n in grid_sizes:
        flow = make_flow(n)
        sc = monotone_scan(flow, x0, t0, f(flow.grid.centers), s, steps, **kw)
        scales.append(flow.grid.h ** 2 + sc.dt)
        viols.append(sc.max_violation)
        ress.append(sc.max_residual)
    c = safety * max(r / sc_ for r, sc_ in zip(ress, scales))
    return CalibrationStudy(tuple(grid_sizes), tuple(scales), tuple(viols), tuple(ress), c)


def rigidity_probe(flow: ModelFlow, x0, t0: float, f, s: float, steps: int = 64, *,
                   floor_fraction: float = 0.5, clamp: float = DEFAULT_CLAMP, **kw) -> RigidityReport:
    """Measure ``int int (-box Q) dnu dr`` as the scan drop and by defect quadrature.

    The floor is ``floor_fraction`` times the integrated strengthened lower
    bound ``(a I / L^3) |Hess w|^2``, which vanishes exactly when ``w`` is
    affine; a nonconstant ``f`` on a closed flow should clear it.
    """
    if flow.spec.static and flow.grid.kind == "line":
        raise UnsupportedFlowError("rigidity is probed on closed flows")
    scan = monotone_scan(flow, x0, t0, f, s, steps, clamp=clamp, **kw)
    low = scan.integrated_lower()
    return RigidityReport(scan.drop, scan.integrated_defect(), low, floor_fraction * low)
