"""Monte Carlo checks on parabolic path space over static flat geometries.

On Euclidean space and flat tori the backward Brownian motion has generator
``Delta`` (increments of variance ``2 dt`` per coordinate) and stochastic
parallel transport is the identity, so parallel gradients of a cylinder
function ``F = u(X_{tau_1}, ..., X_{tau_k})`` are plain sums of partial
gradients.  Paths are sampled in fixed-size chunks, each with its own child
seed, so an ensemble depends only on ``(seed, dt, M)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, PreconditionError, UnsupportedFlowError
from .flow_geometry import EuclideanFlow, ModelFlow, TorusFlow
from .gaussian_model import phi_quantile, profile_I
from .heat_kernel import wrapped_gaussian_cdf

RNG_ALGORITHM = "PCG64"
CHUNK = 10_000
MIN_STEPS_PER_SLOT = 50


@dataclass(eq=False)
class PathEnsemble:
    """Sampled paths started at ``x`` at base time ``T``.

    Only the positions at ``record`` times (multiples of ``dt``) are kept;
    ``positions[sigma]`` has shape ``(M, n)``.
    """

    flow: ModelFlow
    x: tuple[float, ...]
    T: float
    dt: float
    n_paths: int
    seed: int
    positions: dict[float, np.ndarray]
    algorithm: str = RNG_ALGORITHM

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def record(self) -> list[float]:
        return sorted(self.positions)

    def at(self, sigma: float) -> np.ndarray:
        for key, val in self.positions.items():
            if abs(key - sigma) <= 1e-9 * max(1.0, abs(sigma)):
                return val
        raise DomainError(f"time {sigma} was not recorded (have {self.record})")

    def digest(self) -> str:
        """SHA-256 of the recorded positions (byte-level reproducibility)."""
        h = hashlib.sha256()
        for key in self.record:
            h.update(np.float64(key).tobytes())
            h.update(np.ascontiguousarray(self.positions[key]).tobytes())
        return h.hexdigest()

    def summary(self) -> dict:
        out = {"x": list(self.x), "T": self.T, "dt": self.dt, "paths": self.n_paths, "seed": self.seed,
               "rng": self.algorithm, "chunk": CHUNK, "digest": self.digest(), "marginals": []}
        for key in self.record:
            p = self.positions[key]
            out["marginals"].append({"sigma": key, "mean": p.mean(axis=0).tolist(),
                                     "variance": p.var(axis=0).tolist()})
        return out


def _check_flat(flow: ModelFlow):
    if not isinstance(flow, (EuclideanFlow, TorusFlow)):
        raise UnsupportedFlowError("path-space restricted to static flat geometries")


def _wrap(flow: ModelFlow, pos: np.ndarray) -> np.ndarray:
    if isinstance(flow, TorusFlow):
        periods = np.asarray(flow.kind.periods, dtype=float)
        lo = np.full(periods.size, flow.grid.lo)
        return lo + np.mod(pos - lo, periods)
    return pos


def sample_paths(flow: ModelFlow, x, T: float, dt: float, M: int, seed: int,
                 record: Sequence[float] | None = None) -> PathEnsemble:
    """Euler-Maruyama paths ``X_{j+1} = X_j + sqrt(2 dt) xi_j`` (exact on flat kinds).

    Args:
        x: basepoint (scalar or coordinate tuple).
        T: base time; recorded times must lie in ``[0, T]``.
        dt: step; every recorded time must be a multiple of it.
        M: number of paths.
        seed: root seed; chunk ``c`` uses the ``c``-th child of ``SeedSequence(seed)``.
        record: times ``sigma`` to keep (default ``[T]``).

    Raises:
        UnsupportedFlowError: on curved or evolving flows.
    """
    _check_flat(flow)
    if not (dt > 0 and M >= 1):
        raise DomainError("need dt > 0 and M >= 1")
    n = flow.n
    base = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
    base = base + (0.0,) * (n - len(base))
    rec = sorted(set(float(r) for r in (record if record is not None else [T])))
    idx = {}
    for r in rec:
        if not 0 <= r <= T * (1 + 1e-12):
            raise DomainError(f"record time {r} outside [0, T]")
        j = round(r / dt)
        if abs(j * dt - r) > 1e-9 * max(1.0, r):
            raise DomainError(f"record time {r} is not a multiple of dt = {dt}")
        idx[j] = r
    steps = max(idx)
    out = {r: np.empty((M, n)) for r in rec}
    children = np.random.SeedSequence(seed).spawn(math.ceil(M / CHUNK))
    scale = math.sqrt(2.0 * dt)
    for c, child in enumerate(children):
        rng = np.random.Generator(np.random.PCG64(child))
        lo, hi = c * CHUNK, min((c + 1) * CHUNK, M)
        pos = np.tile(np.asarray(base), (hi - lo, 1))
        if 0 in idx:
            out[idx[0]][lo:hi] = pos
        for j in range(1, steps + 1):
            pos += scale * rng.standard_normal((hi - lo, n))
            if j in idx:
                out[idx[j]][lo:hi] = _wrap(flow, pos)
    return PathEnsemble(flow, base, float(T), float(dt), int(M), int(seed), out)


@dataclass(frozen=True)
class MomentBand:
    value: float
    expected: float
    band: float

    @property
    def holds(self) -> bool:
        return abs(self.value - self.expected) <= self.band


def marginal_variance_check(ens: PathEnsemble, sigma: float) -> MomentBand:
    """``E|X_sigma - x|^2`` against ``2 n sigma`` with a 3-standard-error band (Euclidean)."""
    d2 = np.sum((ens.at(sigma) - np.asarray(ens.x)) ** 2, axis=1)
    return MomentBand(float(d2.mean()), 2.0 * ens.n * sigma, 3.0 * float(d2.std(ddof=1)) / math.sqrt(d2.size))


def marginal_chi2_pvalue(ens: PathEnsemble, sigma: float, bins: int = 64) -> float:
    """Chi-square goodness of fit of the first coordinate against the wrapped Gaussian."""
    if not isinstance(ens.flow, TorusFlow):
        raise UnsupportedFlowError("the wrapped-Gaussian test needs a torus")
    P = ens.flow.kind.periods[0]
    lo = ens.flow.grid.lo
    edges = lo + P * np.arange(bins + 1) / bins
    counts, _ = np.histogram(ens.at(sigma)[:, 0], bins=edges)
    cdf = wrapped_gaussian_cdf(edges, ens.x[0], sigma, lo, P)
    probs = np.diff(cdf)
    probs = probs / probs.sum()
    return float(stats.chisquare(counts, probs * counts.sum()).pvalue)


# ---------------------------------------------------------------------------
# cylinder functions


@dataclass(frozen=True)
class CylinderFunction:
    """``F = u(X_{tau_1}, ..., X_{tau_k})`` with partial gradients.

    ``u`` and ``grads`` take a list of ``k`` arrays of shape ``(M, n)``;
    ``u`` returns shape ``(M,)`` and ``grads`` a list of ``k`` arrays of
    shape ``(M, n)``.
    """

    times: tuple[float, ...]
    u: Callable[[list[np.ndarray]], np.ndarray]
    grads: Callable[[list[np.ndarray]], list[np.ndarray]]

    def __post_init__(self):
        t = self.times
        if not 1 <= len(t) <= 3:
            raise DomainError("cylinder functions use between 1 and 3 times")
        if t[0] <= 0 or any(b <= a for a, b in zip(t[:-1], t[1:])):
            raise DomainError("times must satisfy 0 < tau_1 < ... < tau_k")

    @property
    def k(self) -> int:
        return len(self.times)

    def slots(self, ens: PathEnsemble) -> list[np.ndarray]:
        if self.times[-1] > ens.T * (1 + 1e-12):
            raise DomainError("cylinder times must not exceed T")
        if self.times[0] < MIN_STEPS_PER_SLOT * ens.dt * (1 - 1e-9):
            raise PreconditionError(f"need dt <= tau_1 / {MIN_STEPS_PER_SLOT}")
        return [ens.at(t) for t in self.times]


def one_time(tau: float, f: Callable[[np.ndarray], np.ndarray],
             grad_f: Callable[[np.ndarray], np.ndarray]) -> CylinderFunction:
    """``F = f(X_tau)`` for ``f`` and ``grad_f`` acting on ``(M, n)`` arrays."""
    return CylinderFunction((tau,), lambda xs: f(xs[0]), lambda xs: [grad_f(xs[0])])


def parallel_gradients(F: CylinderFunction, xs: list[np.ndarray]) -> list[np.ndarray]:
    """``grad^par_sigma F`` on each interval ``(tau_{j-1}, tau_j]``: the tail sums of ``grad_i u``."""
    g = F.grads(xs)
    tails, acc = [], np.zeros_like(g[0])
    for gi in reversed(g):
        acc = acc + gi
        tails.append(acc)
    return tails[::-1]


def h_gradient_sq(F: CylinderFunction, xs: list[np.ndarray]) -> np.ndarray:
    """``|grad^H F|^2 = sum_j (tau_j - tau_{j-1}) |sum_{i >= j} grad_i u|^2`` with ``tau_0 = 0``."""
    tails = parallel_gradients(F, xs)
    widths = np.diff((0.0,) + tuple(F.times))
    return sum(w * np.sum(t * t, axis=1) for w, t in zip(widths, tails))


def h_gradient(F: CylinderFunction, xs: list[np.ndarray]) -> np.ndarray:
    return np.sqrt(h_gradient_sq(F, xs))


# ---------------------------------------------------------------------------
# Bobkov inequality on path space


@dataclass(frozen=True)
class MCComparison:
    """``lhs <= rhs`` estimated by Monte Carlo, with a 3-standard-error band on ``rhs - lhs``."""

    name: str
    lhs: float
    rhs: float
    band: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.margin >= -self.band

    @property
    def beyond_band(self) -> bool:
        """Positive margin larger than the band (a strict inequality resolved by the sample)."""
        return self.margin > self.band

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin,
                "tol": self.band, "holds": bool(self.holds)}


def _band(rhs_samples: np.ndarray, lhs_samples: np.ndarray) -> float:
    d = rhs_samples - lhs_samples
    return 3.0 * float(d.std(ddof=1)) / math.sqrt(d.size)


def pathspace_bobkov_check(ens: PathEnsemble, F: CylinderFunction) -> MCComparison:
    """``I(E F) <= E sqrt(I(F)^2 + 2 |grad^H F|^2)``.

    The band is three standard errors of ``sqrt(...) - I'(E F) F``, the
    linearised difference of the two estimators.
    """
    xs = F.slots(ens)
    vals = np.asarray(F.u(xs), dtype=float)
    if np.any(vals < -1e-12) or np.any(vals > 1 + 1e-12):
        raise DomainError("F must take values in [0, 1]")
    vals = np.clip(vals, 0.0, 1.0)
    mean = float(vals.mean())
    q = np.sqrt(profile_I(vals) ** 2 + 2.0 * h_gradient_sq(F, xs))
    slope = -float(phi_quantile(mean)) if 0 < mean < 1 else 0.0  # I'(a) = -Phi^{-1}(a)
    return MCComparison("path-space bobkov", float(profile_I(mean)), float(q.mean()), _band(q, slope * vals))


def finite_dimensional_rhs(ens: PathEnsemble, tau: float, f: Callable, grad_f: Callable) -> np.ndarray:
    """Per-path ``sqrt(I(f)^2 + 2 tau |grad f|^2)(X_tau)``, the one-time Bobkov integrand."""
    x = ens.at(tau)
    g = grad_f(x)
    return np.sqrt(profile_I(f(x)) ** 2 + 2.0 * tau * np.sum(g * g, axis=1))


# ---------------------------------------------------------------------------
# first-step gradient estimate


def _future_nodes(F: CylinderFunction, n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes for the Brownian increments after ``tau_1``.

    Returns ``(offsets, weights)`` with offsets of shape ``(Q, k-1, n)``: the
    displacement of each later slot from ``X_{tau_1}``.
    """
    z, w = special.roots_hermitenorm(order)
    w = w / w.sum()
    gaps = np.diff(F.times)
    dims = (F.k - 1) * n
    nodes = np.array(list(product(z, repeat=dims))).reshape(-1, F.k - 1, n)
    weights = np.prod(np.array(list(product(w, repeat=dims))), axis=1)
    incr = nodes * np.sqrt(2.0 * gaps)[None, :, None]
    return np.cumsum(incr, axis=1), weights


def conditional_gradient(F: CylinderFunction, y: np.ndarray, order: int = 24,
                         budget: int = 20_000_000) -> np.ndarray:
    """``grad g(y)`` for ``g(y) = E[F | X_{tau_1} = y]`` by exact Gaussian convolution.

    On flat static kinds every later slot moves rigidly with ``y``, so
    ``grad g = E[sum_i grad_i u]``.  The quadrature order is lowered so that
    at most ``budget`` integrand evaluations are made.
    """
    M, n = y.shape
    if F.k == 1:
        return F.grads([y])[0]
    dims = (F.k - 1) * n
    while order > 4 and M * order ** dims > budget:
        order -= 2
    off, w = _future_nodes(F, n, order)
    Q = w.size
    yy = np.repeat(y, Q, axis=0)
    xs = [yy] + [yy + np.tile(off[:, i, :], (M, 1)) for i in range(F.k - 1)]
    total = sum(F.grads(xs))
    return np.einsum("mqn,q->mn", total.reshape(M, Q, n), w)


def conditional_expectation(F: CylinderFunction, y: np.ndarray, order: int = 24) -> np.ndarray:
    """``g(y) = E[F | X_{tau_1} = y]`` by Gauss-Hermite convolution."""
    M, n = y.shape
    if F.k == 1:
        return np.asarray(F.u([y]), dtype=float)
    off, w = _future_nodes(F, n, order)
    Q = w.size
    yy = np.repeat(y, Q, axis=0)
    xs = [yy] + [yy + np.tile(off[:, i, :], (M, 1)) for i in range(F.k - 1)]
    return np.asarray(F.u(xs), dtype=float).reshape(M, Q) @ w


def nested_conditional_expectation(F: CylinderFunction, flow: ModelFlow, y: np.ndarray, inner: int,
                                   seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``g(y)`` by nested Monte Carlo; returns ``(estimate, standard error)`` per point."""
    _check_flat(flow)
    M, n = y.shape
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    gaps = np.diff(F.times)
    est, se = np.empty(M), np.empty(M)
    for m in range(M):
        pos = np.tile(y[m], (inner, 1))
        xs = [pos.copy()]
        for g in gaps:
            pos = pos + math.sqrt(2.0 * g) * rng.standard_normal((inner, n))
            xs.append(_wrap(flow, pos))
        vals = np.asarray(F.u(xs), dtype=float)
        est[m], se[m] = vals.mean(), vals.std(ddof=1) / math.sqrt(inner)
    return est, se


@dataclass(frozen=True)
class BinRow:
    lo: float
    hi: float
    count: int
    lhs: float
    rhs: float
    band: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def first_step_gradient_check(ens: PathEnsemble, F: CylinderFunction, bins: int = 20,
                              min_count: int = 200) -> list[BinRow]:
    """``|grad g|(X_{tau_1}) <= E[|grad^par_{tau_1} F| | Sigma_{tau_1}]`` averaged over bins.

    Bins are quantile bins of the first coordinate of ``X_{tau_1}``; ``g`` is
    computed by exact convolution, the right side is a bin average.

    Raises:
        PreconditionError: if some bin has fewer than ``min_count`` samples.
    """
    xs = F.slots(ens)
    y = xs[0]
    lhs = np.linalg.norm(conditional_gradient(F, y), axis=1)
    rhs = np.linalg.norm(parallel_gradients(F, xs)[0], axis=1)
    edges = np.quantile(y[:, 0], np.linspace(0.0, 1.0, bins + 1))
    which = np.clip(np.searchsorted(edges, y[:, 0], side="right") - 1, 0, bins - 1)
    rows = []
    for b in range(bins):
        sel = which == b
        c = int(sel.sum())
        if c < min_count:
            raise PreconditionError(f"bin {b} has {c} samples, fewer than {min_count}")
        rows.append(BinRow(float(edges[b]), float(edges[b + 1]), c, float(lhs[sel].mean()),
                           float(rhs[sel].mean()), _band(rhs[sel], lhs[sel])))
    return rows


# ---------------------------------------------------------------------------
# isoperimetry on path space


@dataclass(frozen=True)
class PerimeterEstimate:
    perimeter: float
    bound: float
    mass: float
    band: float
    raw: tuple[float, ...] = field(default=())

    @property
    def margin(self) -> float:
        return self.perimeter - self.bound

    @property
    def holds(self) -> bool:
        return self.margin >= -self.band

    def to_dict(self) -> dict:
        return {"name": "path-space perimeter", "lhs": self.perimeter, "rhs": self.bound, "margin": self.margin,
                "tol": self.band, "holds": bool(self.holds)}


def pathspace_perimeter_check(ens: PathEnsemble, indicator: Callable[[list[np.ndarray]], np.ndarray],
                              mollified: Callable[[float], CylinderFunction], width: float,
                              multiples: Sequence[int] = (4, 2, 1)) -> PerimeterEstimate:
    """``Per^H(A) >= I(Gamma(A)) / sqrt(2)`` by relaxation.

    ``mollified(eps)`` returns a smooth cylinder function approximating the
    indicator of ``A`` at width ``eps``.  As for one-dimensional sets,
    ``E|grad^H F_eps|`` is computed for ``eps = m * width`` over
    ``multiples``, consecutive pairs are Richardson-extrapolated (second-order
    bias) and the smallest extrapolant is the estimate.  The band is three
    standard errors of the estimate plus the propagated error of the mass.
    """
    F0 = mollified(width)
    xs = F0.slots(ens)
    ind = np.asarray(indicator(xs), dtype=float)
    mass = float(ind.mean())
    if mass in (0.0, 1.0):
        return PerimeterEstimate(0.0, 0.0, mass, 0.0, ())
    samples = {}
    for m in multiples:
        F = mollified(m * width)
        samples[m] = h_gradient(F, F.slots(ens))
    raw = [float(samples[m].mean()) for m in multiples]
    cands = [] if len(multiples) > 1 else list(raw)
    for a, b in zip(multiples[:-1], multiples[1:]):
        r = (a / b) ** 2
        cands.append((r * samples[b].mean() - samples[a].mean()) / (r - 1.0))
    est = float(min(cands))
    finest = samples[multiples[-1]]
    se_per = float(finest.std(ddof=1)) / math.sqrt(finest.size)
    slope = abs(float(phi_quantile(mass))) / math.sqrt(2.0)
    se_mass = math.sqrt(mass * (1.0 - mass) / ind.size)
    # an extrapolant (r P_b - P_a)/(r - 1) with r = 4 has at most 5/3 of the finest noise
    band = 3.0 * (5.0 / 3.0 * se_per + slope * se_mass)
    return PerimeterEstimate(est, float(profile_I(mass)) / math.sqrt(2.0), mass, band, tuple(raw))
