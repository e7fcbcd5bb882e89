"""
Cumulant-expansion densities
============================

Non-Gaussian corrections enter as derivative series around the Gaussian
kernel.  With higher cumulants kappa_3..kappa_15 frozen at their horizon
values, the transition density is

    Pi = Pi0 + sum_{n=3}^{N} (-1)^n a_n D^n Pi0,

where Pi0 is the free kernel (vanilla case) or the moving-barrier composite
Pi^mb, D^n expands binomially over d/d omega_n and d/d B_n in the barrier
case, and the coefficients collect single cumulants and second-order
cumulant products:

    a_n = kappa_n / n! + 1/2 sum_{i+j=n, i,j>=3} kappa_i kappa_j / (i! j!).

Products of three or more cumulants are excluded by construction, so the
order-N truncation with N <= 15 is exact for the retained content.  The
densities are signed: truncation can push them locally negative, and callers
report the negative mass instead of clipping (clipping would silently break
martingale pricing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .kernels import GaussKernelParams
from .moving_barrier import BarrierPath, MovingBarrierScheme, free_kernel_terms, pi_mb_terms
from .symbolic import DERIVATIVE_CAP, TermSum, differentiate, evaluate, merge_terms, substitute_barrier

Array = np.ndarray

__all__ = [
    "CumulantSet",
    "ExpansionCoefficients",
    "barrier_terms",
    "coefficient_terms",
    "density_barrier",
    "density_vanilla",
    "expansion_coefficients",
    "vanilla_terms",
]

MAX_EXPANSION_ORDER = DERIVATIVE_CAP  # 15


# ------------------------------ cumulant sets ------------------------------ #

@dataclass(frozen=True)
class CumulantSet:
    """Volatility, horizon, higher cumulants and (optionally) a drift.

    ``kappas[i]`` holds kappa_{i+3}; orders that are absent are zero.  The
    first two cumulants are not stored: the drift alpha plays kappa_1 and the
    Gaussian variance per unit time fixes kappa_2 = t_n.  ``alpha`` may stay
    unset until a martingale drift has been solved; densities then use zero
    drift.
    """

    sigma: float
    t_n: float
    kappas: tuple[float, ...] = ()
    alpha: float | None = None
    max_order: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.t_n <= 0.0:
            raise ValueError("t_n must be positive")
        if len(self.kappas) + 2 > MAX_EXPANSION_ORDER:
            raise ValueError(f"cumulants beyond order {MAX_EXPANSION_ORDER} unsupported")
        if self.max_order is not None and not (2 <= self.max_order <= MAX_EXPANSION_ORDER):
            raise ValueError("max_order must lie in [2, 15]")

    @classmethod
    def from_map(
        cls,
        sigma: float,
        t_n: float,
        kappas: dict[int, float],
        alpha: float | None = None,
        max_order: int | None = None,
    ) -> "CumulantSet":
        if kappas and (min(kappas) < 3 or max(kappas) > MAX_EXPANSION_ORDER):
            raise ValueError("cumulant orders must lie in [3, 15]")
        top = max(kappas) if kappas else 2
        flat = tuple(float(kappas.get(n, 0.0)) for n in range(3, top + 1))
        return cls(sigma, t_n, flat, alpha, max_order)

    def kappa(self, n: int) -> float:
        if n < 3 or n - 3 >= len(self.kappas):
            return 0.0
        return self.kappas[n - 3]

    @property
    def order(self) -> int:
        """Effective expansion order: doubled highest cumulant order (the
        product terms reach i+j), capped at 15, or an explicit max_order."""
        if self.max_order is not None:
            return self.max_order
        highest = 0
        for n in range(3, len(self.kappas) + 3):
            if self.kappa(n) != 0.0:
                highest = n
        if highest == 0:
            return 2
        return min(2 * highest, MAX_EXPANSION_ORDER)

    def drift(self) -> float:
        return 0.0 if self.alpha is None else self.alpha

    def with_alpha(self, alpha: float) -> "CumulantSet":
        return CumulantSet(self.sigma, self.t_n, self.kappas, float(alpha), self.max_order)

    def kernel_params(self, omega_c: float = math.inf) -> GaussKernelParams:
        return GaussKernelParams(0.0, self.drift(), self.t_n, omega_c=omega_c)


# -------------------------- expansion coefficients ------------------------- #

def coefficient_terms(n: int, order8_minus: bool = False) -> dict[tuple[int, ...], Fraction]:
    """Exact rational content of a_n, keyed by contributing cumulant orders.

    Keys are ``(n,)`` for the single-cumulant term kappa_n/n! and ``(i, j)``
    (i <= j, i + j = n) for the product terms; the value is the rational
    multiplier of the corresponding kappa product.  ``order8_minus`` flips the
    kappa_3 kappa_5 cross term to the alternative sign convention seen in some
    write-ups of the order-8 bracket; the generation rule itself gives +.
    """
    if n < 3:
        return {}
    out: dict[tuple[int, ...], Fraction] = {
        (n,): Fraction(1, math.factorial(n))
    }
    for i in range(3, n - 2):
        j = n - i
        if j < i:
            break
        frac = Fraction(1, 2 * math.factorial(i) * math.factorial(j))
        if i != j:
            frac *= 2  # (i, j) and (j, i) collapse onto the sorted key
        if order8_minus and (i, j) == (3, 5):
            frac = -frac
        out[(i, j)] = frac
    return out


@dataclass(frozen=True)
class ExpansionCoefficients:
    """Coefficients a_3..a_order of the signed-derivative series."""

    order: int
    values: tuple[float, ...] = field(default=())

    def a(self, n: int) -> float:
        if n < 3 or n > self.order:
            return 0.0
        return self.values[n - 3]

    def as_dict(self) -> dict[int, float]:
        return {n: self.a(n) for n in range(3, self.order + 1)}


def expansion_coefficients(c: CumulantSet, order8_minus: bool = False) -> ExpansionCoefficients:
    order = c.order
    values = []
    for n in range(3, order + 1):
        a_n = 0.0
        for key, frac in coefficient_terms(n, order8_minus).items():
            prod = float(frac)
            for m in key:
                prod *= c.kappa(m)
            a_n += prod
        values.append(a_n)
    return ExpansionCoefficients(order, tuple(values))


# -------------------------- derivative term tables ------------------------- #

@lru_cache(maxsize=256)
def _free_derivative_table(omega0: float, alpha: float, t: float, order: int) -> tuple[TermSum, ...]:
    base = free_kernel_terms(GaussKernelParams(omega0, alpha, t))
    table = [base]
    for _ in range(order):
        table.append(differentiate(table[-1], "omega", 1))
    return tuple(table)


@lru_cache(maxsize=128)
def _mb_derivative_table(
    omega0: float,
    alpha: float,
    t: float,
    barrier: BarrierPath,
    scheme: MovingBarrierScheme,
    order: int,
    plus_series: bool = False,
) -> dict[tuple[int, int], TermSum]:
    """Mixed partials d_omega^i d_B^j Pi^mb for i + j <= order."""
    base = pi_mb_terms(
        GaussKernelParams(omega0, alpha, t), barrier, scheme, plus_series=plus_series
    )
    table: dict[tuple[int, int], TermSum] = {(0, 0): base}
    for j in range(1, order + 1):
        table[(0, j)] = differentiate(table[(0, j - 1)], "barrier", 1)
    for i in range(1, order + 1):
        for j in range(0, order - i + 1):
            table[(i, j)] = differentiate(table[(i - 1, j)], "omega", 1)
    return table


def vanilla_terms(c: CumulantSet, order8_minus: bool = False) -> TermSum:
    """The no-barrier density Pi^inf as a TermSum (only omega derivatives:
    the barrier-derivative tower vanishes in the infinite-barrier limit)."""
    coeffs = expansion_coefficients(c, order8_minus)
    table = _free_derivative_table(0.0, c.drift(), c.t_n, coeffs.order)
    total = table[0]
    for n in range(3, coeffs.order + 1):
        a_n = coeffs.a(n)
        if a_n == 0.0:
            continue
        total = total + table[n].scaled(((-1.0) ** n) * a_n)
    return merge_terms(total)


def barrier_terms(
    c: CumulantSet,
    barrier: BarrierPath,
    scheme: MovingBarrierScheme = MovingBarrierScheme.ST,
    order8_minus: bool = False,
    plus_series: bool = False,
) -> TermSum:
    """The barrier density as a TermSum with B already bound to barrier.b_n.

    Each derivative order mixes omega- and barrier-derivatives binomially:
    D^n = sum_j C(n, j) d_omega^{n-j} d_B^j, applied to Pi^mb.
    """
    coeffs = expansion_coefficients(c, order8_minus)
    table = _mb_derivative_table(
        0.0, c.drift(), c.t_n, barrier, scheme, coeffs.order, plus_series
    )
    total = table[(0, 0)]
    for n in range(3, coeffs.order + 1):
        a_n = coeffs.a(n)
        if a_n == 0.0:
            continue
        sign = (-1.0) ** n
        for j in range(0, n + 1):
            total = total + table[(n - j, j)].scaled(sign * a_n * math.comb(n, j))
    return substitute_barrier(merge_terms(total), barrier.b_n)


# ------------------------------ density values ----------------------------- #

def density_vanilla(c: CumulantSet, omega_n, order8_minus: bool = False):
    """Non-Gaussian free density at horizon t_n, started from omega = 0."""
    return evaluate(vanilla_terms(c, order8_minus), omega_n)


def density_barrier(
    c: CumulantSet,
    barrier: BarrierPath | None,
    scheme: MovingBarrierScheme,
    omega_n,
    order8_minus: bool = False,
    plus_series: bool = False,
):
    """Non-Gaussian density with an absorbing (possibly moving) barrier.

    ``barrier=None`` selects the infinite-barrier limit, i.e. density_vanilla.
    The absorbed region omega_n >= B_n carries zero density.
    """
    if barrier is None:
        return density_vanilla(c, omega_n, order8_minus)
    f = barrier_terms(c, barrier, scheme, order8_minus, plus_series)
    w = np.asarray(omega_n, dtype=float)
    vals = np.where(w < barrier.b_n, evaluate(f, w), 0.0)
    return float(vals) if np.isscalar(omega_n) else vals
