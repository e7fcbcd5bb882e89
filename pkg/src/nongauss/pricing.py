"""
Option valuation
================

Prices are discounted expectations of the payoff against the model density
in the scaled log-price coordinate omega = ln(S/S0)/sigma:

    vanilla call:   df * int_k^inf   (s0 e^{sigma w} - K) Pi^inf(w) dw
    KUO call:       df * int_k^b     (s0 e^{sigma w} - K) Pi(w)     dw
    KUO put:        df * int_-inf^kb (K - s0 e^{sigma w}) Pi(w)     dw

with k = ln(K/s0)/sigma, b the barrier level at maturity and kb = min(k, b).
KUO = knock-up-and-out: the payoff survives only if the path stays below the
barrier.  Pi is the (possibly negative in the tails) cumulant-expansion
density; the negative mass is reported as a diagnostic, never clipped.

Black-Scholes references (vanilla and the reflection-principle KUO closed
form) are included for the Gaussian-limit checks and for the comparison
column of the barrier-grid experiment.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from .expansion import CumulantSet, barrier_terms, vanilla_terms
from .martingale import RateSpec, gaussian_drift
from .moving_barrier import BarrierPath, MovingBarrierScheme
from .symbolic import TermSum, evaluate, integrate_payoff_with_stats, truncation_window

__all__ = [
    "ExperimentSlice",
    "OptionSpec",
    "PricingResult",
    "barrier_grid_experiment",
    "bs_kuo_closed_form",
    "bs_vanilla",
    "negative_mass",
    "price_kuo_call",
    "price_kuo_put",
    "price_vanilla",
]

EXPERIMENT_CSV_FIELDS = ("strike", "maturity_months", "theta", "barrier", "price_pi", "price_bs", "neg_mass")


# --------------------------------- contracts ------------------------------- #

@dataclass(frozen=True)
class OptionSpec:
    """Contract terms.  maturity must equal rates.t_n (one clock)."""

    kind: str  # "vanilla_call" | "kuo_call" | "kuo_put"
    s0: float
    strike: float
    maturity: float
    rates: RateSpec
    df: float
    barrier: BarrierPath | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("vanilla_call", "kuo_call", "kuo_put"):
            raise ValueError(f"unknown option kind {self.kind!r}")
        if self.s0 <= 0.0 or self.strike < 0.0 or self.df <= 0.0:
            raise ValueError("require s0 > 0, strike >= 0, df > 0")
        if self.maturity != self.rates.t_n:
            raise ValueError("option maturity and rate-spec horizon disagree")
        if self.kind.startswith("kuo") and self.barrier is None:
            raise ValueError(f"{self.kind} requires a barrier path")

    def log_strike(self) -> float:
        """k = ln(K/s0)/sigma; -inf for a zero strike."""
        if self.strike == 0.0:
            return -math.inf
        return math.log(self.strike / self.s0) / self.rates.sigma


@dataclass(frozen=True)
class PricingResult:
    price: float
    diagnostics: dict
    params_hash: str


def _params_hash(spec: OptionSpec, c: CumulantSet, scheme=None) -> str:
    text = repr((spec, c, scheme))
    return hashlib.md5(text.encode()).hexdigest()[:12]


def negative_mass(f: TermSum, upper: float | None = None) -> float:
    """Integral of the density's negative part (a truncation-health metric)."""
    lo, hi = truncation_window(f)
    if upper is not None:
        hi = min(hi, upper)
    if hi <= lo:
        return 0.0
    val, _ = quad(
        lambda w: max(0.0, -evaluate(f, w)), lo, hi, limit=200, epsabs=1e-12, epsrel=1e-8
    )
    return val


def _check_drift(c: CumulantSet) -> None:
    if c.alpha is None:
        raise ValueError("cumulant set has no drift attached; solve_drift first")


# ------------------------------- model prices ------------------------------ #

def price_vanilla(spec: OptionSpec, c: CumulantSet, tol: float | None = None) -> PricingResult:
    """European call on the no-barrier expansion density."""
    _check_drift(c)
    f = vanilla_terms(c)
    value, stats = integrate_payoff_with_stats(
        f, spec.log_strike(), math.inf, spec.rates.sigma, spec.s0, spec.strike, tol=tol
    )
    diagnostics = {
        "negative_mass": negative_mass(f),
        "truncation_error": spec.df * stats["abs_error"],
        "n_quad_evals": stats["n_evals"],
    }
    return PricingResult(spec.df * value, diagnostics, _params_hash(spec, c))


def price_kuo_call(
    spec: OptionSpec,
    c: CumulantSet,
    scheme: MovingBarrierScheme = MovingBarrierScheme.ST,
    tol: float | None = None,
) -> PricingResult:
    """Knock-up-and-out call: integrate (S - K)+ against the absorbed density
    between the log-strike and the barrier level; zero when k >= b."""
    _check_drift(c)
    k, b = spec.log_strike(), spec.barrier.b_n
    if k >= b:
        return PricingResult(0.0, {"negative_mass": 0.0, "truncation_error": 0.0, "n_quad_evals": 0}, _params_hash(spec, c, scheme))
    f = barrier_terms(c, spec.barrier, scheme)
    value, stats = integrate_payoff_with_stats(
        f, k, b, spec.rates.sigma, spec.s0, spec.strike, tol=tol
    )
    diagnostics = {
        "negative_mass": negative_mass(f, upper=b),
        "truncation_error": spec.df * stats["abs_error"],
        "n_quad_evals": stats["n_evals"],
    }
    return PricingResult(spec.df * value, diagnostics, _params_hash(spec, c, scheme))


def price_kuo_put(
    spec: OptionSpec,
    c: CumulantSet,
    scheme: MovingBarrierScheme = MovingBarrierScheme.ST,
    tol: float | None = None,
) -> PricingResult:
    """Knock-up-and-out put: lower-tail integral of (K - S)+ up to min(k, b)."""
    _check_drift(c)
    if spec.strike == 0.0:
        return PricingResult(0.0, {"negative_mass": 0.0, "truncation_error": 0.0, "n_quad_evals": 0}, _params_hash(spec, c, scheme))
    k, b = spec.log_strike(), spec.barrier.b_n
    f = barrier_terms(c, spec.barrier, scheme)
    value, stats = integrate_payoff_with_stats(
        f, -math.inf, min(k, b), spec.rates.sigma, spec.s0, spec.strike, tol=tol
    )
    diagnostics = {
        "negative_mass": negative_mass(f, upper=b),
        "truncation_error": spec.df * stats["abs_error"],
        "n_quad_evals": stats["n_evals"],
    }
    return PricingResult(-spec.df * value, diagnostics, _params_hash(spec, c, scheme))


# --------------------------- Black-Scholes limits -------------------------- #

def bs_vanilla(spec: OptionSpec) -> float:
    """Black-Scholes price of spec's payoff ignoring any barrier.

    Call for the call kinds, put for kuo_put.
    """
    r = spec.rates
    fwd = spec.s0 * math.exp(r.r_acc)
    srt = r.sigma * math.sqrt(r.t_n)
    if spec.strike == 0.0:
        return spec.df * fwd if spec.kind != "kuo_put" else 0.0
    d1 = (math.log(fwd / spec.strike) + 0.5 * srt * srt) / srt
    d2 = d1 - srt
    if spec.kind == "kuo_put":
        return spec.df * (spec.strike * ndtr(-d2) - fwd * ndtr(-d1))
    return spec.df * (fwd * ndtr(d1) - spec.strike * ndtr(d2))


def _gauss_exp_window(m: float, csig: float, t: float, x1: float, x2: float) -> float:
    # int_{x1}^{x2} e^{csig w} N(w; m, t) dw
    rt = math.sqrt(t)
    hi = ndtr((x2 - m) / rt - csig * rt) if not math.isinf(x2) else 1.0
    lo = ndtr((x1 - m) / rt - csig * rt) if not math.isinf(x1) else 0.0
    return math.exp(csig * m + 0.5 * csig * csig * t) * (hi - lo)


def bs_kuo_closed_form(spec: OptionSpec) -> float:
    """Reflection-principle closed form for the Gaussian knock-up-and-out.

    The absorbed Gaussian is a drifted normal minus its reflected image
    N(w; 2b + alpha t, t) weighted by e^{2 alpha b}; both parts integrate
    against the exponential payoff in closed form.
    """
    if spec.barrier is None:
        raise ValueError("bs_kuo_closed_form requires a barrier")
    if spec.barrier.kind != "constant":
        raise ValueError("closed form covers constant barriers only")
    r = spec.rates
    alpha = gaussian_drift(r)
    t, sig = r.t_n, r.sigma
    b = spec.barrier.b_n
    k = spec.log_strike()
    m0, m1 = alpha * t, 2.0 * b + alpha * t
    w_img = math.exp(2.0 * alpha * b)

    def mass(csig: float, x1: float, x2: float) -> float:
        return _gauss_exp_window(m0, csig, t, x1, x2) - w_img * _gauss_exp_window(
            m1, csig, t, x1, x2
        )

    if spec.kind == "kuo_put":
        kb = min(k, b)
        value = spec.strike * mass(0.0, -math.inf, kb) - spec.s0 * mass(sig, -math.inf, kb)
        return spec.df * value
    if k >= b:
        return 0.0
    value = spec.s0 * mass(sig, k, b) - spec.strike * mass(0.0, k, b)
    return spec.df * value


# ---------------------------- barrier-grid study --------------------------- #

@dataclass(frozen=True)
class ExperimentSlice:
    """One maturity slice of the knock-out grid study.

    ``cumulants`` is the calibrated (drift-attached) parameter set, or None
    when calibration failed for that maturity — those rows carry gap markers.
    ``strike_vols`` are the market implied vols at each strike, feeding the
    Black-Scholes comparison column.
    """

    maturity_months: int
    s0: float
    forward: float
    r_acc: float
    df: float
    strikes: tuple[float, ...]
    strike_vols: tuple[float, ...]
    cumulants: CumulantSet | None

    def __post_init__(self) -> None:
        if len(self.strikes) != len(self.strike_vols):
            raise ValueError("strikes and strike_vols must align")


def barrier_grid_experiment(
    slices: Sequence[ExperimentSlice],
    theta: Sequence[float] = (1.1, 1.2, 1.3, 1.5),
    scheme: MovingBarrierScheme = MovingBarrierScheme.ST,
    out_csv: str | Path | None = None,
) -> list[dict]:
    """Knock-up-and-out call prices over (strike, maturity, theta).

    The barrier rule keeps knock-outs out of the money at trade date:
    B = theta * K when that clears the forward, else theta * F.  Model prices
    use the calibrated density; the comparison column reprices each cell in a
    flat Black-Scholes world at the strike's market vol.
    """
    rows: list[dict] = []
    for sl in slices:
        t_n = sl.maturity_months / 12.0
        for strike, vol in zip(sl.strikes, sl.strike_vols):
            for th in theta:
                level = th * strike if th * strike > sl.forward else th * sl.forward
                bs_rates = RateSpec(sl.r_acc, t_n, vol)
                bs_spec = OptionSpec(
                    "kuo_call", sl.s0, strike, t_n, bs_rates, sl.df,
                    BarrierPath.constant(math.log(level / sl.s0) / vol),
                )
                price_bs = bs_kuo_closed_form(bs_spec)
                if sl.cumulants is None:
                    price_pi, neg = "NA", "NA"
                else:
                    c = sl.cumulants
                    spec = OptionSpec(
                        "kuo_call", sl.s0, strike, t_n, RateSpec(sl.r_acc, t_n, c.sigma),
                        sl.df, BarrierPath.constant(math.log(level / sl.s0) / c.sigma),
                    )
                    res = price_kuo_call(spec, c, scheme)
                    price_pi, neg = res.price, res.diagnostics["negative_mass"]
                rows.append(
                    {
                        "strike": strike,
                        "maturity_months": sl.maturity_months,
                        "theta": th,
                        "barrier": level,
                        "price_pi": price_pi,
                        "price_bs": price_bs,
                        "neg_mass": neg,
                    }
                )
    if out_csv is not None:
        write_experiment_csv(rows, out_csv)
    return rows


def _fmt(x) -> str:
    return x if isinstance(x, str) else f"{x:.12g}"


def write_experiment_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXPERIMENT_CSV_FIELDS)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in EXPERIMENT_CSV_FIELDS])
