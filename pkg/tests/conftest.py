"""Shared fixtures and hypothesis tuning.

Numerical tests dominate the runtime here, so the hypothesis profile drops
deadlines and keeps example counts modest; every randomized test draws from
an explicitly seeded generator so failures replay exactly.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numerics",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("numerics")


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def random_cumulant_sets(rng, n, max_abs=0.05, top_order=7, sigma=0.2, t_n=1.0):
    """n random CumulantSets with |kappa_m| <= max_abs for m in 3..top_order."""
    from nongauss import CumulantSet

    out = []
    for _ in range(n):
        kappas = rng.uniform(-max_abs, max_abs, size=top_order - 2)
        out.append(CumulantSet(sigma, t_n, tuple(kappas)))
    return out
