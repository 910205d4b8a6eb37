"""Continuum reference quantities and Monte Carlo probes of the limit.

The limit of z_n(beta n^(-1/4)) is only known through its chaos expansion,
so every reference here is either a series/closed form or the discrete
machinery compared across n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import EnvField, EnvSpec, log_mgf, stream_seeds
from .stats import bootstrap_ci, ks_stat, ks_two_sample, moments
from .transfer import evolve, exact_second_moment, replica_rows


@dataclass(frozen=True)
class LimitSeriesSpec:
    """sum_{k>=1} beta^(2k) / Gamma(k/2 + 1), truncated once the tail bound is below ``tol``."""

    beta: float
    tol: float = 1e-12
    max_order: int = 100000

    def evaluate(self) -> tuple[float, float, int]:
        """Return (value, certified tail bound, last order used)."""
        b2 = self.beta * self.beta
        if b2 == 0.0:
            return 0.0, 0.0, 0
        logb2 = math.log(b2)
        total = 0.0
        for k in range(1, self.max_order + 1):
            term = math.exp(k * logb2 - math.lgamma(k / 2 + 1))
            total += term
            # term ratio t_{k+1}/t_k = b2 Gamma(k/2+1)/Gamma(k/2+3/2), decreasing in k
            r = math.exp(logb2 + math.lgamma(k / 2 + 1) - math.lgamma(k / 2 + 1.5))
            if r < 1.0:
                tail = term * r / (1.0 - r)
                if tail <= self.tol * max(1.0, total):
                    return total, tail, k
        raise RuntimeError("series did not converge within max_order")


def limit_variance(beta: float, tol: float = 1e-12) -> float:
    """Variance of the limiting point-to-line partition function at coupling beta."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return LimitSeriesSpec(beta, tol).evaluate()[0]


def limit_variance_closed(beta: float) -> float:
    """Closed form e^(b^4) (1 + erf(b^2)) - 1 of the same series (x = b^2 in sum x^k / Gamma(k/2+1))."""
    x = beta * beta
    return math.exp(x * x) * (1.0 + math.erf(x)) - 1.0


# ---------------------------------------------------------------------------
# replica helpers


def _kind_tag(kind: str) -> int:
    return {"gaussian": 1, "rademacher": 2, "uniform": 3, "shifted_exponential": 4}[kind]


def p2l_seeds(spec: EnvSpec, n: int, replicas: int, seed: int, form: str = "product", tag: int = 0) -> list[int]:
    """Per-replica environment seeds used by p2l_samples."""
    return stream_seeds(seed, (tag, n, _kind_tag(spec.kind), 0 if form == "product" else 1), replicas)


def p2l_samples(spec: EnvSpec, n: int, beta0: float, replicas: int, seed: int, form: str = "product", alpha: float = 0.25, tag: int = 0) -> np.ndarray:
    """Point-to-line values z_n(beta0 n^-alpha), or exp(-n lambda) Z_n in the exponential form."""
    seeds = p2l_seeds(spec, n, replicas, seed, form, tag)
    if replicas == 0:
        return np.empty(0)
    rows, scales = replica_rows(spec, n, beta0 * n**-alpha, seeds, form)
    return rows.sum(axis=1) * np.exp(scales)


def self_convergence(
    beta0: float,
    n_list,
    replicas: int,
    seed: int,
    kinds=("gaussian", "rademacher"),
    boot: int = 200,
) -> dict:
    """KS distances between consecutive n and between environment kinds at the largest n."""
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    base = EnvSpec(kinds[0])
    samples = {n: p2l_samples(base, n, beta0, replicas, seed) for n in n_list}
    consecutive = []
    for a, b in zip(n_list, n_list[1:]):
        res = ks_two_sample(samples[a], samples[b])
        ci = bootstrap_ci((samples[a], samples[b]), ks_stat, seed=seed + a, resamples=boot) if beta0 > 0 else (0.0, 0.0)
        consecutive.append({"n_a": a, "n_b": b, **res.to_dict(), "ci": list(ci)})
    kinds_out = []
    nmax = n_list[-1]
    for kind in kinds[1:]:
        other = p2l_samples(EnvSpec(kind), nmax, beta0, replicas, seed)
        res = ks_two_sample(samples[nmax], other)
        kinds_out.append({"kind_a": kinds[0], "kind_b": kind, "n": nmax, **res.to_dict()})
        samples[(kind, nmax)] = other
    return {"consecutive": consecutive, "universality": kinds_out, "samples": samples}


# ---------------------------------------------------------------------------
# A-process proxy


@dataclass
class AProcessSample:
    x_grid: np.ndarray
    values: np.ndarray
    n: int
    beta: float
    seed: int | None = None

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.values)


def _interp_row(row: np.ndarray, n: int, y: np.ndarray) -> np.ndarray:
    """Linear interpolation of a final row (sites -n..n step 2) at lattice positions y."""
    j = (y + n) / 2.0
    j0 = np.clip(np.floor(j).astype(int), 0, n)
    j1 = np.clip(j0 + 1, 0, n)
    u = j - j0
    return (1 - u) * row[j0] + u * row[j1]


def _a_values(pp: np.ndarray, n: int, x: np.ndarray) -> np.ndarray:
    v = math.sqrt(n) / 2 * pp * math.sqrt(2 * math.pi) * np.exp(x * x / 2)
    out = np.full(v.shape, np.nan)
    pos = v > 0
    out[pos] = np.log(v[pos])
    return out


def a_process_sample(env: EnvField, beta0: float, n: int, x_grid, form: str = "product") -> AProcessSample:
    """log[(sqrt(n)/2) z_n(x sqrt(n)) sqrt(2 pi) e^(x^2/2)] on ``x_grid``.

    The exponential form is normalized by exp(-n lambda).  Nonpositive
    product-form values are reported as NaN.
    """
    x = np.asarray(x_grid, dtype=float)
    if np.any(np.abs(x) > 3):
        raise ValueError("grid points must satisfy |x| <= 3")
    beta = beta0 * n**-0.25
    pf = evolve(env, beta, form, (0, 0), n, mode="streaming", log_space=False)
    row = pf.final
    if form == "exponential":
        row = row * math.exp(-n * log_mgf(env.spec, beta))
    pp = _interp_row(row, n, x * math.sqrt(n))
    return AProcessSample(x, _a_values(pp, n, x), n, beta0, env.seed)


def a_process_replicas(spec: EnvSpec, beta0: float, n: int, x_grid, seeds, form: str = "product") -> np.ndarray:
    """A-proxy values, one row per replica (exponential form is normalized by exp(-n lambda))."""
    x = np.asarray(x_grid, dtype=float)
    rows, scales = replica_rows(spec, n, beta0 * n**-0.25, seeds, form)
    out = np.empty((rows.shape[0], x.size))
    for r in range(rows.shape[0]):
        pp = _interp_row(rows[r], n, x * math.sqrt(n)) * math.exp(scales[r])
        out[r] = _a_values(pp, n, x)
    return out


def stationarity_test(spec: EnvSpec, beta0: float, n: int, replicas: int, seed: int, x_ref: float = 0.0, x_test=(0.5,)) -> dict:
    """Two-sample KS between A-proxy marginals at x_ref and each x in x_test.

    Each position uses its own replica stream so the samples are independent.
    """
    ref = a_process_replicas(spec, beta0, n, [x_ref], stream_seeds(seed, (7, n, 0), replicas))[:, 0]
    out = {"x_ref": x_ref, "n": n, "ref": moments(ref[np.isfinite(ref)]), "missing_ref": int(np.sum(~np.isfinite(ref))), "tests": []}
    for j, x in enumerate(x_test):
        s = a_process_replicas(spec, beta0, n, [x], stream_seeds(seed, (7, n, j + 1), replicas))[:, 0]
        res = ks_two_sample(ref, s)
        va = np.var(ref[np.isfinite(ref)], ddof=1)
        vb = np.var(s[np.isfinite(s)], ddof=1)
        ci = bootstrap_ci((ref[np.isfinite(ref)], s[np.isfinite(s)]), lambda a, b: np.var(b, ddof=1) - np.var(a, ddof=1), seed=seed + j)
        out["tests"].append({"x": x, **res.to_dict(), "var_ref": va, "var_x": vb, "var_diff_ci": list(ci), "missing": int(np.sum(~np.isfinite(s)))})
    return out


# ---------------------------------------------------------------------------
# supercritical scaling and other probes


def supercritical_probe(beta: float, delta: float, n_list, replicas: int = 0, seed: int = 0, spec: EnvSpec | None = None) -> list[dict]:
    """Var of exp(-n lambda(b_n)) Z_n(b_n), b_n = beta n^-(1/4 + delta): exact and empirical."""
    if delta <= 0:
        raise ValueError("delta must be > 0")
    spec = spec or EnvSpec("gaussian")
    out = []
    for n in n_list:
        bn = beta * n ** -(0.25 + delta)
        if bn == 0.0:
            out.append({"n": n, "beta_n": 0.0, "exact_var": 0.0})
            continue
        v = math.expm1(log_mgf(spec, 2 * bn) - 2 * log_mgf(spec, bn)) / bn**2
        rec = {"n": n, "beta_n": bn, "exact_var": exact_second_moment(n, bn, v) - 1.0}
        if replicas:
            s = p2l_samples(spec, n, beta, replicas, seed, "exponential", alpha=0.25 + delta, tag=3)
            rec["empirical_var"] = float(np.var(s, ddof=1))
        out.append(rec)
    return out


def chi_zero_probe(spec: EnvSpec, beta0: float, n_list, replicas: int, seed: int) -> list[dict]:
    """Interquartile range of log(exp(-n lambda) Z_n(beta0 n^-1/4)) per n."""
    out = []
    for n in n_list:
        s = p2l_samples(spec, n, beta0, replicas, seed, "exponential", tag=4)
        logs = np.log(s)
        q1, q3 = np.quantile(logs, [0.25, 0.75]) if s.size else (np.nan, np.nan)
        out.append({"n": n, "iqr": float(q3 - q1), "median": float(np.median(logs)) if s.size else float("nan")})
    return out


def endpoint_probe(spec: EnvSpec, beta: float, n_list, replicas: int, seed: int, intermediate: bool, keep_samples: bool = False) -> list[dict]:
    """Median of max_x P(S_n = x) (scaled by sqrt(n) under intermediate disorder).

    ``intermediate`` applies beta n^(-1/4); otherwise beta is fixed.  Also
    reports the replica average of E^omega[S_n^2] / n and the annealed
    ratio sum_r Z_r E_r[S_n^2] / (n sum_r Z_r).
    """
    out = []
    for n in n_list:
        b = beta * n**-0.25 if intermediate else beta
        seeds = stream_seeds(seed, (5, n, int(intermediate)), replicas)
        rows, scales = replica_rows(spec, n, b, seeds, "exponential")
        probs = rows / rows.sum(axis=1, keepdims=True)
        mx = probs.max(axis=1)
        x = np.arange(-n, n + 1, 2, dtype=float)
        m2 = probs @ (x * x) / n
        stat = np.sqrt(n) * mx if intermediate else mx
        logz = np.log(rows.sum(axis=1)) + scales
        wz = np.exp(logz - logz.max())
        annealed = float(wz @ m2 / wz.sum())
        out.append({"n": n, "beta_applied": b, "median_max": float(np.median(stat)), "mean_endpoint_m2": float(np.mean(m2)), "annealed_endpoint_m2": annealed})
        if keep_samples:
            out[-1].update(seeds=seeds, samples=stat)
    return out


def holder_probe(spec: EnvSpec, beta0: float, n: int, replicas: int, seed: int, M: int = 8, lags=(2, 4, 8), span: float = 0.5) -> dict:
    """Fit the spatial Hölder exponent of z_n(1, .) from M-th moments of increments.

    For each lattice lag h, m(h) = E|z_n(1, x + h) - z_n(1, x)|^M pooled over
    base points |x| <= span sqrt(n); the exponent is the least-squares slope
    of log m(h)^(1/M) against log(h / sqrt(n)).
    """
    seeds = stream_seeds(seed, (6, n), replicas)
    rows, scales = replica_rows(spec, n, beta0 * n**-0.25, seeds, "product")
    z = rows * np.exp(scales)[:, None] * math.sqrt(n)
    lim = int(span * math.sqrt(n))
    xs = np.arange(-n, n + 1, 2)
    base = np.nonzero(np.abs(xs) <= lim)[0]
    table = []
    for h in lags:
        if h % 2:
            raise ValueError("lags must be even (parity)")
        d = z[:, base + h // 2] - z[:, base]
        table.append({"lag": h, "moment": float(np.mean(np.abs(d) ** M))})
    lh = np.log(np.array([t["lag"] for t in table]) / math.sqrt(n))
    lm = np.log(np.array([t["moment"] for t in table])) / M
    slope = float(np.polyfit(lh, lm, 1)[0])
    return {"n": n, "M": M, "exponent": slope, "table": table}
