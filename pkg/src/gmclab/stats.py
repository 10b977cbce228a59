"""Summary statistics: exact sums, median-of-means, KS, bootstrap, isotonic cleanup."""

from __future__ import annotations

import math
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize, stats

from .errors import DomainError

MOM_BLOCKS = 16


def exact_sum(x) -> float:
    """Correctly rounded sum; independent of summation order."""
    return math.fsum(np.asarray(x, dtype=float).ravel().tolist())


def exact_mean(x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("mean of an empty sample")
    return exact_sum(x) / x.size


def mean_and_se(x) -> tuple[float, float]:
    """Mean and its standard error, both from exactly rounded sums."""
    x = np.asarray(x, dtype=float).ravel()
    m = exact_mean(x)
    if x.size < 2:
        return m, math.inf
    var = exact_sum((x - m) ** 2) / (x.size - 1)
    return m, math.sqrt(var / x.size)


def median_of_means(x, blocks: int = MOM_BLOCKS) -> float:
    """Median of the means of ``blocks`` consecutive, equally sized blocks."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("median-of-means of an empty sample")
    k = min(blocks, x.size)
    parts = np.array_split(x, k)
    return float(np.median([exact_mean(p) for p in parts]))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic with the asymptotic p-value."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise DomainError("KS test needs two nonempty samples")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_one_sample(a, cdf: Callable) -> tuple[float, float]:
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise DomainError("KS test needs a nonempty sample")
    res = stats.kstest(a, cdf, method="asymp")
    return float(res.statistic), float(res.pvalue)


_STATISTICS: dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda x: float(np.mean(x)),
    "median-of-means": median_of_means,
}


def bootstrap_ci(samples, statistic: Union[str, Callable] = "mean", level: float = 0.95,
                 n_boot: int = 1000, rng: Optional[np.random.Generator] = None
                 ) -> tuple[float, float]:
    """Percentile bootstrap interval, deterministic for a given generator."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("bootstrap needs a nonempty sample")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    fn = _STATISTICS[statistic] if isinstance(statistic, str) else statistic
    rng = rng if rng is not None else np.random.default_rng(0)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        reps[i] = fn(x[rng.integers(0, x.size, x.size)])
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(reps, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def nonincreasing(p, se=None) -> np.ndarray:
    """Weighted isotonic (nonincreasing) fit of a tail curve."""
    p = np.asarray(p, dtype=float)
    if p.size == 0:
        return p
    w = None
    if se is not None:
        se = np.asarray(se, dtype=float)
        if np.all(se > 0):
            w = 1.0 / se ** 2
    return optimize.isotonic_regression(p, weights=w, increasing=False).x
