"""
Closed term algebra for absorbed-kernel densities
=================================================

Every density handled by this package is a finite sum of terms of the form

    poly(omega, B) * exp(quadratic(omega, B)) * [Erfc(linear(omega, B))]

in the two variables omega (terminal scaled log-price) and B (barrier level
at maturity), with the horizon t, drift alpha and start omega0 frozen into
the coefficients.  The family is closed under differentiation:

    d/dx [P e^q Erfc(l)] = (P' + P q') e^q Erfc(l) - P (2/sqrt(pi)) l' e^{q - l^2}

and q - l^2 is again a quadratic form, so high-order mixed partials (needed
up to order 15 by the cumulant expansion) stay exact and cheap.  Like terms
(same exponent, same Erfc argument) are merged after every pass.

Polynomials are dense coefficient grids poly[i, j] ~ omega^i B^j, capped at
degree 32 per variable, which is comfortable for order-15 derivatives.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Literal, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc, erfcx

Array = np.ndarray

__all__ = [
    "QuadExponent",
    "LinForm",
    "GaussErfTerm",
    "TermMeta",
    "TermSum",
    "differentiate",
    "evaluate",
    "integrate_payoff",
    "integrate_payoff_with_stats",
    "integrate_exp_poly",
    "substitute_barrier",
    "term_sum_to_jsonable",
    "dump_term_sum",
    "truncation_window",
]

MAX_POLY_DEGREE = 32
DERIVATIVE_CAP = 15

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_EXP_FLOOR = -745.0  # exp() underflows to 0 below this; used as the evaluation guard


class IntegrabilityError(ValueError):
    """Raised when a payoff integral over an infinite interval would diverge."""


# ------------------------------- data types -------------------------------- #

@dataclass(frozen=True)
class QuadExponent:
    """Quadratic form c0 + cw*w + cb*B + cww*w^2 + cwb*w*B + cbb*B^2."""

    c0: float = 0.0
    cw: float = 0.0
    cb: float = 0.0
    cww: float = 0.0
    cwb: float = 0.0
    cbb: float = 0.0

    def key(self) -> tuple[float, ...]:
        return (self.c0, self.cw, self.cb, self.cww, self.cwb, self.cbb)

    def value(self, w: Array, b: Array) -> Array:
        return (
            self.c0
            + self.cw * w
            + self.cb * b
            + self.cww * w * w
            + self.cwb * w * b
            + self.cbb * b * b
        )

    def shifted(self, *, dc0: float = 0.0, dcw: float = 0.0) -> "QuadExponent":
        return QuadExponent(self.c0 + dc0, self.cw + dcw, self.cb, self.cww, self.cwb, self.cbb)


@dataclass(frozen=True)
class LinForm:
    """Linear form a0 + aw*w + ab*B (Erfc argument)."""

    a0: float = 0.0
    aw: float = 0.0
    ab: float = 0.0

    def key(self) -> tuple[float, ...]:
        return (self.a0, self.aw, self.ab)

    def value(self, w: Array, b: Array) -> Array:
        return self.a0 + self.aw * w + self.ab * b


@dataclass(frozen=True)
class GaussErfTerm:
    """One term poly * exp(expo) * optional Erfc(erfc_arg)."""

    poly: Array  # dense (deg_w+1, deg_b+1) coefficient grid; treated as immutable
    expo: QuadExponent
    erfc_arg: Optional[LinForm] = None

    def __post_init__(self) -> None:
        p = np.atleast_2d(np.asarray(self.poly, dtype=float))
        if p.shape[0] > MAX_POLY_DEGREE + 1 or p.shape[1] > MAX_POLY_DEGREE + 1:
            raise ValueError(f"polynomial degree exceeds cap {MAX_POLY_DEGREE}: {p.shape}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "poly", p)

    def merge_key(self) -> tuple:
        ek = self.erfc_arg.key() if self.erfc_arg is not None else None
        return (self.expo.key(), ek)


@dataclass(frozen=True)
class TermMeta:
    """Kernel constants carried along for truncation heuristics and debugging."""

    t: float
    alpha: float
    omega0: float


@dataclass(frozen=True)
class TermSum:
    """Immutable sum of GaussErfTerms; the empty sum evaluates to 0."""

    terms: tuple[GaussErfTerm, ...]
    meta: TermMeta

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))

    def __len__(self) -> int:
        return len(self.terms)

    def __add__(self, other: "TermSum") -> "TermSum":
        if other.meta != self.meta:
            raise ValueError("cannot add TermSums with different kernel metadata")
        return merge_terms(TermSum(self.terms + other.terms, self.meta))

    def scaled(self, factor: float) -> "TermSum":
        if factor == 0.0:
            return TermSum((), self.meta)
        return TermSum(
            tuple(GaussErfTerm(t.poly * factor, t.expo, t.erfc_arg) for t in self.terms),
            self.meta,
        )


# ---------------------------- polynomial helpers --------------------------- #

def _poly_trim(p: Array) -> Array:
    """Drop all-zero trailing rows/columns (keeps at least a 1x1 grid)."""
    nz = np.nonzero(p)
    if len(nz[0]) == 0:
        return np.zeros((1, 1))
    return p[: nz[0].max() + 1, : nz[1].max() + 1]


def _poly_add(a: Array, b: Array) -> Array:
    n = max(a.shape[0], b.shape[0])
    m = max(a.shape[1], b.shape[1])
    out = np.zeros((n, m))
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += b
    return out


def _poly_mul_linear(p: Array, e0: float, ew: float, eb: float) -> Array:
    """Multiply poly by the linear form (e0 + ew*w + eb*B)."""
    n, m = p.shape
    out = np.zeros((n + 1, m + 1))
    if e0 != 0.0:
        out[:n, :m] += e0 * p
    if ew != 0.0:
        out[1 : n + 1, :m] += ew * p
    if eb != 0.0:
        out[:n, 1 : m + 1] += eb * p
    return _poly_trim(out)


def _poly_diff(p: Array, var: Literal["omega", "barrier"]) -> Array:
    if var == "omega":
        if p.shape[0] == 1:
            return np.zeros((1, 1))
        return p[1:, :] * np.arange(1, p.shape[0])[:, None]
    if p.shape[1] == 1:
        return np.zeros((1, 1))
    return p[:, 1:] * np.arange(1, p.shape[1])[None, :]


# ------------------------------- core algebra ------------------------------ #

def merge_terms(f: TermSum, drop_below: float = 1e-300) -> TermSum:
    """Add polynomials of terms sharing (exponent, erfc) keys; drop null terms."""
    buckets: dict[tuple, list] = {}
    order: list[tuple] = []
    for term in f.terms:
        k = term.merge_key()
        if k in buckets:
            buckets[k][0] = _poly_add(buckets[k][0], term.poly)
        else:
            buckets[k] = [np.array(term.poly), term.expo, term.erfc_arg]
            order.append(k)
    out = []
    for k in order:
        poly, expo, earg = buckets[k]
        poly = _poly_trim(np.where(np.abs(poly) < drop_below, 0.0, poly))
        if np.any(poly):
            out.append(GaussErfTerm(poly, expo, earg))
    return TermSum(tuple(out), f.meta)


def _diff_once(f: TermSum, var: Literal["omega", "barrier"]) -> TermSum:
    out: list[GaussErfTerm] = []
    for term in f.terms:
        q = term.expo
        if var == "omega":
            q0, q1, q2 = q.cw, 2.0 * q.cww, q.cwb  # d q / d omega as linear form
        else:
            q0, q1, q2 = q.cb, q.cwb, 2.0 * q.cbb
        main = _poly_add(_poly_diff(term.poly, var), _poly_mul_linear(term.poly, q0, q1, q2))
        out.append(GaussErfTerm(main, q, term.erfc_arg))
        l = term.erfc_arg
        if l is not None:
            l_slope = l.aw if var == "omega" else l.ab
            if l_slope != 0.0:
                # chain term: -P (2/sqrt(pi)) l' e^{q - l^2}, a pure Gaussian term
                q_new = QuadExponent(
                    q.c0 - l.a0 * l.a0,
                    q.cw - 2.0 * l.a0 * l.aw,
                    q.cb - 2.0 * l.a0 * l.ab,
                    q.cww - l.aw * l.aw,
                    q.cwb - 2.0 * l.aw * l.ab,
                    q.cbb - l.ab * l.ab,
                )
                out.append(
                    GaussErfTerm(term.poly * (-_TWO_OVER_SQRT_PI * l_slope), q_new, None)
                )
    return merge_terms(TermSum(tuple(out), f.meta))


def differentiate(
    f: TermSum,
    var: Literal["omega", "barrier"],
    order: int,
    *,
    cap: int = DERIVATIVE_CAP,
) -> TermSum:
    """Exact derivative of order ``order`` with respect to omega or the barrier level."""
    if order < 0:
        raise ValueError(f"derivative order must be non-negative, got {order}")
    if order > cap:
        raise ValueError(f"derivative order {order} above configured cap {cap}")
    for _ in range(order):
        f = _diff_once(f, var)
    return f


def evaluate(f: TermSum, omega_n, b_n=0.0):
    """Numerically stable evaluation; broadcasts over omega_n / b_n arrays.

    Terms with an Erfc factor and positive argument are computed through
    erfcx (scaled complementary error function) so the Gaussian decay of
    Erfc is folded into the exponent instead of underflowing separately.
    """
    w, b = np.broadcast_arrays(np.asarray(omega_n, dtype=float), np.asarray(b_n, dtype=float))
    total = np.zeros(w.shape)
    for term in f.terms:
        pv = np.polynomial.polynomial.polyval2d(w, b, term.poly)
        q = term.expo.value(w, b)
        if term.erfc_arg is None:
            total += pv * np.where(q < _EXP_FLOOR, 0.0, np.exp(np.minimum(q, 709.0)))
        else:
            l = term.erfc_arg.value(w, b)
            with np.errstate(over="ignore", under="ignore"):
                qp = q - l * l
                pos = erfcx(np.maximum(l, 0.0)) * np.where(qp < _EXP_FLOOR, 0.0, np.exp(qp))
                neg = erfc(np.minimum(l, 0.0)) * np.where(q < _EXP_FLOOR, 0.0, np.exp(q))
            total += pv * np.where(l > 0.0, pos, neg)
    if np.isscalar(omega_n) and np.isscalar(b_n):
        return float(total)
    return total


def substitute_barrier(f: TermSum, b_n: float) -> TermSum:
    """Bind the barrier variable to a fixed level, leaving a sum in omega only."""
    out = []
    for term in f.terms:
        powers = b_n ** np.arange(term.poly.shape[1])
        poly_w = (term.poly @ powers)[:, None]
        q = term.expo
        expo = QuadExponent(
            q.c0 + q.cb * b_n + q.cbb * b_n * b_n,
            q.cw + q.cwb * b_n,
            0.0,
            q.cww,
            0.0,
            0.0,
        )
        earg = term.erfc_arg
        if earg is not None:
            earg = LinForm(earg.a0 + earg.ab * b_n, earg.aw, 0.0)
        out.append(GaussErfTerm(poly_w, expo, earg))
    return merge_terms(TermSum(tuple(out), f.meta))


# ------------------------------- integration ------------------------------- #

def _term_decays(term: GaussErfTerm, direction: float, sigma_shift: float) -> bool:
    """Does the term go to 0 fast enough as omega -> direction * inf (B bound)?"""
    if term.expo.cww < 0.0:
        return True
    if term.expo.cww > 0.0:
        return False
    if term.erfc_arg is not None and term.erfc_arg.aw * direction > 0.0:
        return True  # Erfc argument -> +inf gives Gaussian decay
    return (term.expo.cw + sigma_shift) * direction < 0.0


def truncation_window(f: TermSum, sigma_shift: float = 0.0) -> tuple[float, float]:
    """Interval outside which every term of f (times e^{sigma_shift w}) is
    negligible; used to truncate infinite quadrature domains."""
    return _truncation_window(f, sigma_shift)


def _truncation_window(f: TermSum, sigma_shift: float) -> tuple[float, float]:
    """Interval outside which every term is negligible (14+ Gaussian sigmas)."""
    meta = f.meta
    spread = 14.0 * math.sqrt(meta.t)
    center = meta.omega0 + meta.alpha * meta.t
    lo = min(center, center + sigma_shift * meta.t) - spread
    hi = max(center, center + sigma_shift * meta.t) + spread
    for term in f.terms:
        for shift in (0.0, sigma_shift):
            c2 = term.expo.cww
            if c2 < 0.0:
                m = -(term.expo.cw + shift) / (2.0 * c2)
                s = math.sqrt(-0.5 / c2)
                lo = min(lo, m - 14.0 * s)
                hi = max(hi, m + 14.0 * s)
    return lo, hi


def integrate_payoff_with_stats(
    f: TermSum,
    lower: float,
    upper: float,
    sigma: float,
    s0: float,
    strike: float,
    *,
    tol: float | None = None,
) -> tuple[float, dict]:
    """Integral of (s0 e^{sigma w} - strike) * f(w) over [lower, upper].

    The e^{sigma w} factor is absorbed into each term's linear exponent
    coefficient (so the integrand is evaluated as one guarded term sum), and
    the integral is done by adaptive quadrature on a truncated window.
    ``f`` must already have its barrier variable bound.  Returns the value
    and a stats dict (abs error estimate, function evaluations).
    """
    if lower > upper:
        raise ValueError(f"lower {lower} > upper {upper}")
    if lower == upper:
        return 0.0, {"abs_error": 0.0, "n_evals": 0}
    abs_tol = (1e-10 * s0) if tol is None else tol

    if math.isinf(upper):
        for term in f.terms:
            if not _term_decays(term, +1.0, sigma):
                raise IntegrabilityError(
                    "payoff integral diverges: non-decaying term toward +inf"
                )
    if math.isinf(lower):
        for term in f.terms:
            if not _term_decays(term, -1.0, 0.0):
                raise IntegrabilityError(
                    "payoff integral diverges: non-decaying term toward -inf"
                )

    shifted = TermSum(
        tuple(
            GaussErfTerm(t.poly * s0, t.expo.shifted(dcw=sigma), t.erfc_arg) for t in f.terms
        ),
        f.meta,
    )
    lo, hi = _truncation_window(f, sigma)
    a = lo if math.isinf(lower) else max(lower, lo)
    b = hi if math.isinf(upper) else min(upper, hi)
    if a >= b:
        return 0.0, {"abs_error": 0.0, "n_evals": 0}

    counter = {"n": 0}

    def integrand(w: float) -> float:
        counter["n"] += 1
        return evaluate(shifted, w) - strike * evaluate(f, w)

    value, abserr = quad(integrand, a, b, epsabs=abs_tol, epsrel=1e-11, limit=400)
    return value, {"abs_error": abserr, "n_evals": counter["n"]}


def integrate_payoff(
    f: TermSum, lower: float, upper: float, sigma: float, s0: float, strike: float,
    *, tol: float | None = None,
) -> float:
    value, _ = integrate_payoff_with_stats(f, lower, upper, sigma, s0, strike, tol=tol)
    return value


def integrate_exp_poly(f: TermSum, c: float = 0.0) -> float:
    """Exact integral of e^{c w} * f(w) over the whole real line.

    Closed form via Gaussian moments; available for Erfc-free sums with no
    barrier dependence (use substitute_barrier first).  Each term must have
    cww < 0 to be integrable.
    """
    total = 0.0
    for term in f.terms:
        if term.erfc_arg is not None:
            raise ValueError("closed-form integration requires Erfc-free terms")
        q = term.expo
        if q.cb != 0.0 or q.cwb != 0.0 or q.cbb != 0.0 or term.poly.shape[1] > 1:
            raise ValueError("closed-form integration requires the barrier variable bound")
        if not q.cww < 0.0:
            raise IntegrabilityError("non-negative quadratic coefficient: divergent integral")
        var = -0.5 / q.cww
        mean = (q.cw + c) * var
        base = math.exp(q.c0 + 0.5 * (q.cw + c) ** 2 * var) * math.sqrt(2.0 * math.pi * var)
        coeffs = term.poly[:, 0]
        # E[w^k] for N(mean, var) by the standard recursion
        moments = np.empty(len(coeffs))
        for k in range(len(coeffs)):
            if k == 0:
                moments[k] = 1.0
            elif k == 1:
                moments[k] = mean
            else:
                moments[k] = mean * moments[k - 1] + (k - 1) * var * moments[k - 2]
        total += base * float(np.dot(coeffs, moments))
    return total


# ------------------------------ serialization ------------------------------ #

def term_sum_to_jsonable(f: TermSum) -> dict:
    """Plain-dict form of a TermSum (debug dumps and golden-file tests)."""
    return {
        "meta": {"t": f.meta.t, "alpha": f.meta.alpha, "omega0": f.meta.omega0},
        "terms": [
            {
                "poly": np.asarray(t.poly).tolist(),
                "expo": list(t.expo.key()),
                "erfc": list(t.erfc_arg.key()) if t.erfc_arg is not None else None,
            }
            for t in f.terms
        ],
    }


def dump_term_sum(f: TermSum, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(term_sum_to_jsonable(f), fh, indent=2)
