"""Head statistics and the lower-confidence-bound coefficient.

The min over K ensemble heads approximates E[min of K Gaussian realizations]
which equals mu - c(K) * sigma for a coefficient c(K) built from the inverse
normal CDF. Head std uses the population form (divide by K).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import inverse_norm_cdf


@dataclass
class HeadStats:
    min: float
    argmin: int
    mean: float
    std: float


def head_stats(q) -> HeadStats:
    """Min/argmin/mean/population-std across the K head values."""
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size == 0:
        raise ValueError("head_stats requires at least one head value")
    if not np.all(np.isfinite(q)):
        raise ValueError("head_stats requires finite head values")
    argmin = int(np.argmin(q))  # ties break to the lowest index
    mean = float(np.mean(q))
    std = float(np.sqrt(np.mean((q - mean) ** 2)))
    return HeadStats(min=float(q[argmin]), argmin=argmin, mean=mean, std=std)


@lru_cache(maxsize=None)
def royston_min_coefficient(k: int) -> float:
    """c(K) such that E[min of K Gaussian realizations] ~ mu - c(K) * sigma."""
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    return inverse_norm_cdf((k - math.pi / 8.0) / (k - math.pi / 4.0 + 1.0))


def lcb(mu: float, sigma: float, k: int) -> float:
    """Lower confidence bound mu - c(K) * sigma."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return mu - royston_min_coefficient(k) * sigma
