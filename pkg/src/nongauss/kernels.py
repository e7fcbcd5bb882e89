"""
Gaussian transition kernels with an absorbing upper barrier
===========================================================

All densities live in the scaled log-price coordinate

    omega = ln(S / s0) / sigma,

in which the log-price diffuses with unit variance per unit time and drift
``alpha``:  omega_t ~ N(omega0 + alpha t, t).  An absorbing barrier sits at
omega_c (upper knock-out level); paths touching it are removed.

This module provides the exact closed forms for this Gaussian layer:

* free transition density (no barrier),
* absorbed density by the reflection principle (vanishes for omega >= omega_c),
* survival probability and absorbed CDF (one-sided reflection closed forms),
* the near-barrier asymptotic coefficients of the discrete path product
  (the sqrt(eps) "hit" coefficient and the eps "corner" coefficient),
* the beta-like integral identity used to glue first-passage convolutions.

Everything here is a pure function; no shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

Array = np.ndarray

__all__ = [
    "LogPriceCoord",
    "GaussKernelParams",
    "free_density",
    "barrier_density_gm",
    "survival_probability",
    "absorbed_cdf",
    "hit_density_coeff",
    "corner_density_coeff",
    "beta_integral",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


# ------------------------------ coordinates ------------------------------- #

@dataclass(frozen=True)
class LogPriceCoord:
    """Mapping between prices and the scaled log-price omega = ln(S/s0)/sigma."""

    s0: float
    sigma: float

    def __post_init__(self) -> None:
        if self.s0 <= 0.0:
            raise ValueError(f"s0 must be positive, got {self.s0}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def omega(self, price: float | Array) -> float | Array:
        """omega(S) = ln(S/s0)/sigma; omega(s0) == 0."""
        return np.log(np.asarray(price, dtype=float) / self.s0) / self.sigma

    def price(self, omega: float | Array) -> float | Array:
        """Inverse map S(omega) = s0 * exp(sigma * omega)."""
        return self.s0 * np.exp(self.sigma * np.asarray(omega, dtype=float))


@dataclass(frozen=True)
class GaussKernelParams:
    """Start point, drift, horizon and optional absorbing level.

    ``omega_c = +inf`` means "no barrier" and is the canonical free-kernel
    representation (large finite sentinels are rejected nowhere, but the
    explicit infinity avoids cancellation in the image term).
    """

    omega0: float
    alpha: float
    t: float
    omega_c: float = math.inf

    def __post_init__(self) -> None:
        if not self.t > 0.0:
            raise ValueError(f"horizon t must be positive, got {self.t}")
        if math.isfinite(self.omega_c) and not self.omega0 <= self.omega_c:
            raise ValueError(
                f"start must lie at or below the barrier: omega0={self.omega0}, "
                f"omega_c={self.omega_c}"
            )

    @property
    def has_barrier(self) -> bool:
        return math.isfinite(self.omega_c)


# ------------------------------- densities -------------------------------- #

def free_density(p: GaussKernelParams, omega_n: float | Array) -> float | Array:
    """Free Gaussian density (1/sqrt(2 pi t)) e^{alpha(w-w0) - alpha^2 t/2 - (w-w0)^2/2t}.

    This is N(omega0 + alpha t, t) written in the drift-factored form used by
    the whole term algebra.
    """
    w = np.asarray(omega_n, dtype=float)
    dw = w - p.omega0
    expo = p.alpha * dw - 0.5 * p.alpha * p.alpha * p.t - dw * dw / (2.0 * p.t)
    out = np.exp(expo) / (_SQRT_2PI * math.sqrt(p.t))
    return float(out) if np.isscalar(omega_n) else out


def barrier_density_gm(p: GaussKernelParams, omega_n: float | Array) -> float | Array:
    """Absorbed (knocked-out) density by reflection; exactly 0 for omega_n >= omega_c.

    For omega_n < omega_c:

        (1/sqrt(2 pi t)) e^{alpha(w-w0)-alpha^2 t/2}
            [e^{-(w-w0)^2/2t} - e^{-(2 w_c - w - w0)^2/2t}]

    The image subtraction is evaluated as -expm1(-2(w_c-w)(w_c-w0)/t) times
    the free exponential, which is exact and keeps the linear vanishing at the
    barrier free of cancellation noise.
    """
    if not p.has_barrier:
        return free_density(p, omega_n)
    w = np.asarray(omega_n, dtype=float)
    dw = w - p.omega0
    expo = p.alpha * dw - 0.5 * p.alpha * p.alpha * p.t - dw * dw / (2.0 * p.t)
    # (2wc-w-w0)^2 - (w-w0)^2 = 4 (wc-w)(wc-w0) >= 0 below the barrier
    gap = -2.0 * (p.omega_c - w) * (p.omega_c - p.omega0) / p.t
    dens = np.exp(expo) * (-np.expm1(gap)) / (_SQRT_2PI * math.sqrt(p.t))
    dens = np.where(w < p.omega_c, dens, 0.0)
    return float(dens) if np.isscalar(omega_n) else dens


def survival_probability(p: GaussKernelParams) -> float:
    """P(no barrier touch on [0, t]) = Phi((b-w0-at)/rt) - e^{2a(b-w0)} Phi((w0-b-at)/rt)."""
    if not p.has_barrier:
        return 1.0
    rt = math.sqrt(p.t)
    d = p.omega_c - p.omega0
    return float(
        ndtr((d - p.alpha * p.t) / rt)
        - math.exp(2.0 * p.alpha * d) * ndtr((-d - p.alpha * p.t) / rt)
    )


def absorbed_cdf(p: GaussKernelParams, omega_n: float | Array) -> float | Array:
    """Sub-probability CDF of the absorbed density: integral of barrier_density_gm up to omega_n."""
    w = np.minimum(np.asarray(omega_n, dtype=float), p.omega_c)
    rt = math.sqrt(p.t)
    mean = p.omega0 + p.alpha * p.t
    out = ndtr((w - mean) / rt)
    if p.has_barrier:
        d = p.omega_c - p.omega0
        image_mean = 2.0 * p.omega_c - p.omega0 + p.alpha * p.t
        out = out - math.exp(2.0 * p.alpha * d) * ndtr((w - image_mean) / rt)
    return float(out) if np.isscalar(omega_n) else out


# -------------------------- near-barrier asymptotics ----------------------- #

def hit_density_coeff(
    p: GaussKernelParams,
    omega_ref: float,
    *,
    start_at_barrier: bool = False,
) -> float:
    """Coefficient of sqrt(eps) in the discrete path density ending (or starting) on the barrier.

    Default orientation (path from omega0 up to the barrier):

        (1/sqrt(pi)) e^{alpha(omega_ref - omega_c)}
            ((omega_c - omega0)/t^{3/2}) e^{-[(omega_c-omega0) - alpha t]^2/(2t)}

    With ``start_at_barrier=True`` the path leaves the barrier and ends at
    ``omega_ref``; the distance factor becomes (omega_c - omega_ref) with the
    same drift prefactor.  ``omega_ref`` is always the *other* endpoint and is
    taken explicitly because the drift factor references it, not the start.
    """
    if not p.has_barrier:
        raise ValueError("hit coefficient requires a finite barrier")
    dist = (p.omega_c - omega_ref) if start_at_barrier else (p.omega_c - p.omega0)
    if dist <= 0.0:
        raise ValueError("endpoint must lie strictly below the barrier")
    pref = math.exp(p.alpha * (omega_ref - p.omega_c)) / math.sqrt(math.pi)
    return pref * dist * p.t ** -1.5 * math.exp(-((dist - p.alpha * p.t) ** 2) / (2.0 * p.t))


def corner_density_coeff(t: float, alpha: float) -> float:
    """Coefficient of eps for a path that starts and ends on the barrier:
    (1/sqrt(2 pi)) t^{-3/2} e^{-alpha^2 t / 2}."""
    if not t > 0.0:
        raise ValueError(f"horizon t must be positive, got {t}")
    return t ** -1.5 * math.exp(-0.5 * alpha * alpha * t) / _SQRT_2PI


def beta_integral(a: float, b: float, c: float) -> float:
    """Closed form of  int_0^c x^{-3/2} (c-x)^{-3/2} e^{-a^2/2x - b^2/2(c-x)} dx.

    Equals sqrt(2 pi) ((a+b)/(ab)) c^{-3/2} e^{-(a+b)^2/(2c)}; this is the
    identity that collapses first-passage convolutions into single Gaussians.
    """
    if a <= 0.0 or b <= 0.0 or c <= 0.0:
        raise ValueError(f"beta_integral needs positive arguments, got {(a, b, c)}")
    s = a + b
    return _SQRT_2PI * (s / (a * b)) * c ** -1.5 * math.exp(-s * s / (2.0 * c))
