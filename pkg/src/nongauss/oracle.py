"""
Independent ground truth
========================

Everything here deliberately avoids the symbolic engine so it can arbitrate
disagreements: a brute-force nested-quadrature evaluation of the discrete
path product, a killed-path Monte Carlo with Brownian-bridge barrier
correction, and the exact linear-barrier density obtained by shifting into
the co-moving frame (constant barrier b0, drift alpha - xi).

Monte Carlo streams are deterministic: each batch draws from its own
``default_rng([seed, batch_index])`` substream and batches are reduced in
index order, so the result is bit-identical however the batches are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .expansion import CumulantSet, vanilla_terms
from .kernels import GaussKernelParams, barrier_density_gm
from .moving_barrier import BarrierPath
from .pricing import OptionSpec
from .symbolic import evaluate, truncation_window

Array = np.ndarray

__all__ = [
    "McConfig",
    "brute_force_path_density",
    "exact_linear_barrier_density",
    "mc_kuo_price",
    "mc_terminal_sample",
]


# ----------------------------- discrete path sum --------------------------- #

def _step_kernel(dw: Array, alpha: float, eps: float):
    """One discrete propagator Psi_eps(dw) = N(dw; alpha*eps, eps)."""
    return np.exp(-((dw - alpha * eps) ** 2) / (2.0 * eps)) / math.sqrt(2.0 * math.pi * eps)


def brute_force_path_density(
    p: GaussKernelParams,
    n_steps: int,
    omega_n,
    barrier_fn: Callable[[float], float] | None = None,
) -> float | Array:
    """Discrete confined density by nested adaptive quadrature.

    Multiplies n_steps Gaussian step kernels and integrates the n_steps - 1
    intermediate points over (-inf, barrier); the final point is the density
    argument and is left unmasked so the near-barrier discretization
    asymptotics stay visible.  ``barrier_fn(t)`` overrides the constant
    p.omega_c for moving discrete barriers.  Intended for n_steps <= 4.
    """
    if n_steps not in (1, 2, 3, 4):
        raise ValueError("brute force supports 1..4 steps")
    eps = p.t / n_steps

    def level(i: int) -> float:
        t_i = i * eps
        return barrier_fn(t_i) if barrier_fn is not None else p.omega_c

    lo = p.omega0 - abs(p.alpha) * p.t - 14.0 * math.sqrt(p.t)

    def density_at(w_n: float) -> float:
        def inner(i: int, w_prev: float) -> float:
            # integrate over point i (times its step kernel), recursing upward
            if i == n_steps:
                return float(_step_kernel(np.float64(w_n - w_prev), p.alpha, eps))
            hi = level(i)
            if not math.isfinite(hi):
                hi = w_prev + abs(p.alpha) * p.t + 14.0 * math.sqrt(p.t)
            val, _ = quad(
                lambda w: float(_step_kernel(np.float64(w - w_prev), p.alpha, eps))
                * inner(i + 1, w),
                min(lo, w_n - 1.0),
                hi,
                epsabs=1e-10,
                epsrel=1e-8,
                limit=80,
            )
            return val

        return inner(1, p.omega0)

    if np.isscalar(omega_n):
        return density_at(float(omega_n))
    return np.array([density_at(float(w)) for w in np.asarray(omega_n, dtype=float)])


# ------------------------- exact moving-barrier case ----------------------- #

def exact_linear_barrier_density(
    p: GaussKernelParams, b0: float, xi: float, omega_n
):
    """Exact absorbed density for the linear barrier B(t) = b0 + xi t.

    In the co-moving frame w~ = w - xi t the barrier is the constant b0 and
    the drift becomes alpha - xi; the Jacobian of the shift is one, so the
    fixed-barrier reflection density evaluated at omega_n - xi t_n is already
    the answer (validated against the discrete brute force with a moving
    barrier).
    """
    q = GaussKernelParams(p.omega0, p.alpha - xi, p.t, omega_c=b0)
    w = np.asarray(omega_n, dtype=float) - xi * p.t
    out = barrier_density_gm(q, w)
    return float(out) if np.isscalar(omega_n) else out


# ------------------------------- Monte Carlo ------------------------------- #

@dataclass(frozen=True)
class McConfig:
    n_paths: int = 200_000
    n_steps: int = 64
    seed: int = 0
    batch_size: int = 50_000

    def __post_init__(self) -> None:
        if min(self.n_paths, self.n_steps, self.batch_size) <= 0:
            raise ValueError("n_paths, n_steps, batch_size must be positive")

    def batches(self) -> list[tuple[int, int]]:
        out = []
        start = 0
        idx = 0
        while start < self.n_paths:
            out.append((idx, min(self.batch_size, self.n_paths - start)))
            start += self.batch_size
            idx += 1
        return out


def _simulate_batch(
    p: GaussKernelParams,
    barrier: BarrierPath | None,
    cfg: McConfig,
    batch_idx: int,
    m: int,
) -> tuple[Array, Array]:
    """Gaussian paths with bridge-corrected killing; returns (w_T, alive)."""
    rng = np.random.default_rng([cfg.seed, batch_idx])
    eps = p.t / cfg.n_steps
    w = np.full(m, p.omega0)
    alive = np.ones(m, dtype=bool)
    for i in range(cfg.n_steps):
        w_next = w + p.alpha * eps + math.sqrt(eps) * rng.standard_normal(m)
        if barrier is not None:
            b_lo = barrier.level(i * eps, p.t)
            b_hi = barrier.level((i + 1) * eps, p.t)
            crossed = w_next >= b_hi
            gap = (b_lo - w) * (b_hi - w_next)
            with np.errstate(over="ignore"):
                p_hit = np.where(crossed, 1.0, np.exp(-2.0 * np.maximum(gap, 0.0) / eps))
            alive &= rng.random(m) >= p_hit
        w = w_next
    return w, alive


def mc_terminal_sample(
    p: GaussKernelParams, barrier: BarrierPath | None, cfg: McConfig
) -> Array:
    """Surviving terminal points of killed Gaussian paths (for histogram and
    distribution tests)."""
    parts = []
    for batch_idx, m in cfg.batches():
        w, alive = _simulate_batch(p, barrier, cfg, batch_idx, m)
        parts.append(w[alive])
    return np.concatenate(parts)


def _endpoint_sampler(c: CumulantSet) -> Callable[[np.random.Generator, int], Array]:
    """Inverse-CDF sampler of the vanilla expansion density (clipped at 0)."""
    f = vanilla_terms(c)
    lo, hi = truncation_window(f)
    grid = np.linspace(lo, hi, 4001)
    dens = np.maximum(evaluate(f, grid), 0.0)
    cdf = np.concatenate(([0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(grid))))
    cdf /= cdf[-1]
    # keep strictly increasing knots for the inverse interpolation
    keep = np.concatenate(([True], np.diff(cdf) > 0.0))
    cdf_k, grid_k = cdf[keep], grid[keep]

    def draw(rng: np.random.Generator, m: int) -> Array:
        return np.interp(rng.random(m), cdf_k, grid_k)

    return draw


def mc_kuo_price(
    spec: OptionSpec, c: CumulantSet, cfg: McConfig
) -> tuple[float, float]:
    """Monte Carlo price and standard error for spec under the model density.

    Gaussian cumulant sets use exact increments with Brownian-bridge killing.
    Non-Gaussian sets sample the terminal density directly and weight by the
    bridge survival probability of a linear barrier between the endpoint
    levels — a documented approximation for loose sanity bands only.
    """
    if c.alpha is None:
        raise ValueError("cumulant set has no drift attached")
    sigma = spec.rates.sigma
    barrier = spec.barrier
    is_put = spec.kind == "kuo_put"
    gaussian = all(k == 0.0 for k in c.kappas)
    p = GaussKernelParams(0.0, c.alpha, spec.maturity)
    sampler = None if gaussian else _endpoint_sampler(c)

    total, total_sq, count = 0.0, 0.0, 0
    for batch_idx, m in cfg.batches():
        if gaussian:
            w, alive = _simulate_batch(p, barrier, cfg, batch_idx, m)
            weight = alive.astype(float)
        else:
            rng = np.random.default_rng([cfg.seed, batch_idx])
            w = sampler(rng, m)
            if barrier is None:
                weight = np.ones(m)
            else:
                b0 = barrier.level(0.0, spec.maturity)
                b1 = barrier.b_n
                with np.errstate(over="ignore"):
                    p_hit = np.where(
                        w >= b1, 1.0, np.exp(-2.0 * b0 * np.maximum(b1 - w, 0.0) / spec.maturity)
                    )
                weight = 1.0 - p_hit
        s_T = spec.s0 * np.exp(sigma * w)
        payoff = np.maximum(spec.strike - s_T, 0.0) if is_put else np.maximum(s_T - spec.strike, 0.0)
        x = spec.df * payoff * weight
        total += float(np.sum(x))
        total_sq += float(np.sum(x * x))
        count += m
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    return mean, math.sqrt(var / count)
