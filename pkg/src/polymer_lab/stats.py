"""Kolmogorov-Smirnov statistics with null quantiles, and bootstrap CIs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

NULL_LEVEL = 0.99
MARGIN = 1.5


@dataclass(frozen=True)
class KSResult:
    statistic: float
    null_quantile: float  # NULL_LEVEL quantile of the statistic under H0
    threshold: float  # null_quantile * MARGIN

    @property
    def passed(self) -> bool:
        return self.statistic <= self.threshold

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "null_quantile": self.null_quantile, "threshold": self.threshold}


def _clean(sample, name: str) -> np.ndarray:
    a = np.asarray(sample, dtype=float).ravel()
    a = a[np.isfinite(a)]
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    return a


def ks_null_quantile(n: int, m: int | None = None, level: float = NULL_LEVEL) -> float:
    """Null quantile of the one-sample (exact) or two-sample (asymptotic) statistic."""
    if m is None:
        return float(stats.kstwo.ppf(level, n))
    c = math.sqrt(-0.5 * math.log((1.0 - level) / 2.0))
    return c * math.sqrt((n + m) / (n * m))


def ks_two_sample(a, b, level: float = NULL_LEVEL, margin: float = MARGIN) -> KSResult:
    a = _clean(a, "sample_a")
    b = _clean(b, "sample_b")
    d = float(stats.ks_2samp(a, b).statistic)
    q = ks_null_quantile(a.size, b.size, level)
    return KSResult(d, q, q * margin)


def ks_one_sample(sample, cdf: Callable, level: float = NULL_LEVEL, margin: float = MARGIN) -> KSResult:
    a = _clean(sample, "sample")
    d = float(stats.ks_1samp(a, cdf).statistic)
    q = ks_null_quantile(a.size, None, level)
    return KSResult(d, q, q * margin)


def ks_distance(sample_a, sample_b=None, cdf: Callable | None = None) -> KSResult:
    """Two-sample KS if ``sample_b`` is given, otherwise one-sample against ``cdf``."""
    if sample_b is not None:
        return ks_two_sample(sample_a, sample_b)
    if cdf is None:
        raise ValueError("need a second sample or a cdf")
    return ks_one_sample(sample_a, cdf)


def empirical_cdf(sample) -> Callable:
    a = np.sort(_clean(sample, "sample"))

    def cdf(x):
        return np.searchsorted(a, x, side="right") / a.size

    return cdf


def bootstrap_ci(samples: tuple, statistic: Callable, seed: int, resamples: int = 400, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap CI; each sample is resampled independently."""
    res = stats.bootstrap(
        tuple(np.asarray(s, dtype=float) for s in samples),
        statistic,
        n_resamples=resamples,
        confidence_level=level,
        method="percentile",
        vectorized=False,
        paired=False,
        random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def ks_stat(a, b) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def pairwise_sum(x) -> float:
    """Sum in a fixed pairwise order (independent of how the array was produced)."""
    a = np.asarray(x, dtype=float).ravel()
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0]) if a.size else 0.0


def moments(x) -> dict:
    a = np.asarray(x, dtype=float)
    n = a.size
    if n == 0:
        return {"count": 0}
    mean = pairwise_sum(a) / n
    var = pairwise_sum((a - mean) ** 2) / max(n - 1, 1)
    q1, med, q3 = np.quantile(a, [0.25, 0.5, 0.75])
    return {"count": n, "mean": mean, "var": var, "sd": math.sqrt(var), "median": float(med), "iqr": float(q3 - q1)}
