"""Exact Gaussian baseline.

The standard normal distribution function and its inverse, the Gaussian
isoperimetric profile ``I = phi o Phi^{-1}``, the half-space calculus of the
measure ``gamma_tau = N(0, 2 tau Id)``, and a handful of closed-form moments.
Every other module uses these functions as ground truth, so the accuracy
targets here are close to machine precision.

Conventions
-----------
``tau`` is always a time gap (units of squared length) and the associated
Gaussian has covariance ``2 tau`` per coordinate.  Mass fractions live in
``[0, 1]`` and ``Phi^{-1}`` takes the values ``-inf`` and ``+inf`` exactly at
the endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import DivergenceError, DomainError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)
INV_SQRT2PI = 1.0 / SQRT2PI

# Acklam's rational approximation for the normal quantile (relative error
# about 1.15e-9), refined below by Newton steps.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def phi_pdf(r):
    """Standard normal density."""
    r = np.asarray(r, dtype=float)
    out = INV_SQRT2PI * np.exp(-0.5 * r * r)
    return out if out.ndim else float(out)


def phi_cdf(r):
    """Standard normal distribution function ``Phi``.

    Evaluated through the complementary error function, which keeps full
    relative precision in the lower tail.  ``Phi(-inf) = 0`` and
    ``Phi(inf) = 1`` exactly.
    """
    r = np.asarray(r, dtype=float)
    out = 0.5 * special.erfc(-r / SQRT2)
    return out if out.ndim else float(out)


def _acklam_lower(q):
    """Rational approximation of ``Phi^{-1}(q)`` for ``0 < q <= 1/2``."""
    out = np.empty_like(q)
    tail = q < _P_LOW
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        out[tail] = num / den
    mid = ~tail
    if np.any(mid):
        s = q[mid] - 0.5
        r = s * s
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num / den
    return out


def phi_quantile(a):
    """Inverse distribution function ``Phi^{-1}``.

    Acklam's rational approximation followed by two Newton steps on the lower
    tail; upper-tail arguments are reflected so that the Newton residual is
    always computed where ``erfc`` is accurate.

    Args:
        a: Mass fraction(s) in ``[0, 1]``.

    Returns:
        The quantile, ``-inf`` at 0 and ``+inf`` at 1.

    Raises:
        DomainError: if any argument lies outside ``[0, 1]`` or is NaN.
    """
    a = np.asarray(a, dtype=float)
    if np.any(~((a >= 0.0) & (a <= 1.0))):
        raise DomainError("phi_quantile requires mass fractions in [0, 1]")
    flat = np.atleast_1d(a).ravel()
    out = np.empty_like(flat)
    out[flat == 0.0] = -np.inf
    out[flat == 1.0] = np.inf
    inner = (flat > 0.0) & (flat < 1.0)
    if np.any(inner):
        p = flat[inner]
        upper = p > 0.5
        q = np.where(upper, 1.0 - p, p)
        x = _acklam_lower(q)
        for _ in range(2):
            resid = 0.5 * special.erfc(-x / SQRT2) - q
            x = x - resid / (INV_SQRT2PI * np.exp(-0.5 * x * x))
        out[inner] = np.where(upper, -x, x)
    out = out.reshape(a.shape)
    return out if out.ndim else float(out)


def profile_I(a):
    """Gaussian isoperimetric profile ``I(a) = phi(Phi^{-1}(a))``.

    Symmetric under ``a -> 1 - a`` by construction and zero at both
    endpoints.
    """
    a = np.asarray(a, dtype=float)
    if np.any(~((a >= 0.0) & (a <= 1.0))):
        raise DomainError("profile_I requires mass fractions in [0, 1]")
    low = np.minimum(a, 1.0 - a)
    x = phi_quantile(low)
    out = np.where(low > 0.0, INV_SQRT2PI * np.exp(-0.5 * np.square(np.where(low > 0, x, 0.0))), 0.0)
    return out if out.ndim else float(out)


def profile_I_prime(a):
    """Derivative ``I'(a) = -Phi^{-1}(a)``."""
    q = phi_quantile(a)
    return -q


@dataclass(frozen=True)
class GaussianScale:
    """Time gap ``tau`` and dimension ``n`` of the model ``N(0, 2 tau Id_n)``."""

    tau: float
    n: int = 1

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError(f"tau must be positive and finite, got {self.tau}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.n}")

    @property
    def std(self) -> float:
        """Standard deviation ``sqrt(2 tau)`` of each coordinate."""
        return math.sqrt(2.0 * self.tau)


@dataclass(frozen=True)
class HalfSpace:
    """Half-space ``{x_1 <= threshold}`` of prescribed Gaussian mass."""

    mass: float
    threshold: float
    perimeter: float
    degenerate: bool


def halfspace_reference(a: float, scale: GaussianScale) -> HalfSpace:
    """Threshold and weighted perimeter of the half-space of mass ``a``.

    The perimeter is ``I(a) / sqrt(2 tau)`` and does not depend on ``n``.
    Endpoint masses give a degenerate record with zero perimeter and an
    infinite threshold.
    """
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"mass fraction must lie in [0, 1], got {a}")
    c = scale.std * phi_quantile(a)
    if a in (0.0, 1.0):
        return HalfSpace(a, c, 0.0, True)
    return HalfSpace(a, c, profile_I(a) / scale.std, False)


def model_abs_moment(p: float, scale: GaussianScale | float) -> float:
    """``E|Z|^p`` for ``Z ~ N(0, 1/(2 tau))``, i.e. ``tau^{-p/2} Gamma((p+1)/2)/sqrt(pi)``."""
    tau = scale.tau if isinstance(scale, GaussianScale) else float(scale)
    if not p >= 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    if not tau > 0:
        raise DomainError("tau must be positive")
    return math.exp(-0.5 * p * math.log(tau) + special.gammaln(0.5 * (p + 1)) - 0.5 * math.log(math.pi))


def model_vector_moment(p: float, n: int, tau: float) -> float:
    """``E|W|^p`` for ``W ~ N(0, Id_n/(2 tau))``, i.e. ``tau^{-p/2} Gamma((n+p)/2)/Gamma(n/2)``."""
    if not p >= 1:
        raise DomainError(f"moment order must be >= 1, got {p}")
    return math.exp(-0.5 * p * math.log(tau) + special.gammaln(0.5 * (n + p)) - special.gammaln(0.5 * n))


def halfgaussian_exp_moment(lam: float, tau: float) -> float:
    """``E exp(lam G_+)`` for ``G ~ N(0, 2 tau)``: ``1/2 + e^{tau lam^2} Phi(lam sqrt(2 tau))``.

    Returns ``inf`` once the value exceeds the double-precision range.
    """
    if lam < 0:
        raise DomainError("lambda must be nonnegative")
    if not tau > 0:
        raise DomainError("tau must be positive")
    log_tail = tau * lam * lam + math.log(phi_cdf(lam * math.sqrt(2.0 * tau)))
    # finite but beyond double range
    return 0.5 + math.exp(log_tail) if log_tail < 709.0 else math.inf


def halfgaussian_square_moment(beta: float, tau: float) -> float:
    """``E exp(beta G_+^2 / tau)`` for ``G ~ N(0, 2 tau)``: ``1/2 + (1 - 4 beta)^{-1/2}/2``.

    Raises:
        DivergenceError: if ``beta >= 1/4``, where the moment is infinite.
    """
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if beta >= 0.25:
        raise DivergenceError(f"the moment diverges for beta >= 1/4 (got {beta})")
    if not tau > 0:
        raise DomainError("tau must be positive")
    return 0.5 + 0.5 / math.sqrt(1.0 - 4.0 * beta)


@dataclass(frozen=True)
class PoincareConstant:
    """Value of the one-dimensional Gaussian ``L^p``-Poincare constant."""

    p: float
    value: float
    exact: bool


@lru_cache(maxsize=32)
def _rayleigh_max(p: float, degree: int, nodes: int) -> float:
    x, w = special.roots_hermitenorm(nodes)
    keep = w > 0
    x, w = x[keep], w[keep] / w[keep].sum()
    # probabilists' Hermite polynomials He_0..He_degree at the nodes
    he = np.zeros((degree + 1, x.size))
    he[0] = 1.0
    he[1] = x
    for k in range(1, degree):
        he[k + 1] = x * he[k] - k * he[k - 1]
    # He_k has zero Gaussian mean for k >= 1 and He_k' = k He_{k-1}
    basis = he[1:]
    dbasis = np.arange(1, degree + 1)[:, None] * he[:-1]

    def neg_ratio(c):
        g = c @ basis
        dg = c @ dbasis
        num = np.sum(w * np.abs(g) ** p) ** (1.0 / p)
        den = np.sum(w * np.abs(dg) ** p) ** (1.0 / p)
        return -num / den if den > 0 else 0.0

    starts = [np.eye(degree)[0]]
    rng = np.random.default_rng(12345)
    starts += [rng.standard_normal(degree) / np.arange(1, degree + 1) ** 2 for _ in range(6)]
    best = -neg_ratio(starts[0])
    for c0 in starts:
        res = optimize.minimize(neg_ratio, c0, method="Nelder-Mead" if p < 1.5 else "BFGS",
                                options={"maxiter": 4000})
        best = max(best, -float(res.fun))
    return best


def smoothed_step_ratio(eps: float) -> float:
    """``L^1`` Rayleigh ratio of ``g = Phi(y / eps)`` under the standard Gaussian.

    With ``Y, Z`` independent standard normals, ``E|g(Y) - 1/2|`` is an orthant
    probability, ``1/2 - arctan(eps)/pi``, and ``E|g'(Y)| = (2 pi (1 + eps^2))^{-1/2}``.
    The ratio increases to ``sqrt(pi/2)`` as ``eps -> 0``; smooth polynomials
    cannot approach this supremum because the extremal profile is a step.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    return math.sqrt(2.0 * math.pi * (1.0 + eps * eps)) * (0.5 - math.atan(eps) / math.pi)


def lambda_p(p: float, degree: int = 12, nodes: int = 2048) -> PoincareConstant:
    """Gaussian ``L^p``-Poincare constant on the line.

    ``p = 1`` and ``p = 2`` are returned in closed form (``sqrt(pi/2)`` and
    ``1``).  Other exponents are estimated by maximising the Rayleigh ratio
    ``||g - E g||_p / ||g'||_p`` over polynomials of the given degree on a
    Gauss-Hermite grid; such estimates are lower bounds for the true supremum
    and are flagged ``exact=False``.
    """
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    if p == 1:
        return PoincareConstant(1.0, math.sqrt(math.pi / 2.0), True)
    if p == 2:
        return PoincareConstant(2.0, 1.0, True)
    return PoincareConstant(float(p), _rayleigh_max(float(p), int(degree), int(nodes)), False)


def lambda_p_estimate(p: float, degree: int = 12, nodes: int = 2048) -> float:
    """Numerical lower bound for ``Lambda_p``, also for ``p`` in ``{1, 2}``.

    The polynomial Rayleigh-ratio maximum; at ``p = 1`` the smoothed step
    family :func:`smoothed_step_ratio` at width ``1e-8`` is included as well.
    """
    best = _rayleigh_max(float(p), int(degree), int(nodes))
    if p == 1:
        best = max(best, smoothed_step_ratio(1e-8))
    return best
