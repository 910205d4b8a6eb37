"""Simple random walk kernels, Gaussian heat kernels and their L2 norms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

EXACT_LIMIT = 50


@dataclass(frozen=True)
class LatticeTimeVector:
    """Strictly increasing times 1 <= i_1 < ... < i_k <= n."""

    times: tuple[int, ...]
    n: int

    def __post_init__(self):
        t = tuple(int(v) for v in self.times)
        object.__setattr__(self, "times", t)
        if t and (t[0] < 1 or t[-1] > self.n):
            raise ValueError(f"times {t} outside [1, {self.n}]")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"times {t} are not strictly increasing")

    @property
    def k(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class SimplexPoint:
    """Times 0 < t_1 < ... < t_k <= 1 with real positions x_1..x_k."""

    times: tuple[float, ...]
    positions: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in np.atleast_1d(self.times))
        x = tuple(float(v) for v in np.atleast_1d(self.positions))
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", x)
        if len(t) != len(x):
            raise ValueError("times and positions differ in length")
        if t and (t[0] <= 0 or t[-1] > 1):
            raise ValueError(f"times {t} outside (0, 1]")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError(f"times {t} are not strictly increasing (coincident times?)")

    @property
    def k(self) -> int:
        return len(self.times)


def rw_pmf_exact(i: int, x: int) -> Fraction:
    """P(S_i = x) as an exact rational."""
    if i < 0:
        raise ValueError("i must be >= 0")
    if abs(x) > i or (i + x) % 2:
        return Fraction(0)
    return Fraction(math.comb(i, (i + x) // 2), 2**i)


def rw_pmf(i: int, x: int) -> float:
    """P(S_i = x) for the simple random walk started at 0."""
    if i < 0:
        raise ValueError("i must be >= 0")
    if abs(x) > i or (i + x) % 2:
        return 0.0
    if i <= EXACT_LIMIT:
        return float(rw_pmf_exact(i, x))
    return float(stats.binom.pmf((i + x) // 2, i, 0.5))


def rw_pmf_row(i: int) -> np.ndarray:
    """Vector (P(S_i = -i), P(S_i = -i + 2), ..., P(S_i = i))."""
    if i < 0:
        raise ValueError("i must be >= 0")
    j = np.arange(i + 1)
    if i <= EXACT_LIMIT:
        return np.array([math.comb(i, int(a)) for a in j], dtype=float) / 2.0**i
    return stats.binom.pmf(j, i, 0.5)


def return_probs(n: int) -> np.ndarray:
    """q[a] = P(S_{2a} = 0) = sum_x p(a, x)^2 for a = 0..n, by recurrence."""
    q = np.empty(n + 1)
    q[0] = 1.0
    for a in range(1, n + 1):
        q[a] = q[a - 1] * (2 * a - 1) / (2 * a)
    return q


def parity_round(x: float, i: int) -> int:
    """Nearest integer to x with the parity of i; ties go towards +inf."""
    if i < 1:
        raise ValueError("i must be >= 1")
    p = i % 2
    return int(2 * math.floor((x - p) / 2 + 0.5) + p)


def heat_kernel(t, x):
    """Gaussian kernel exp(-x^2 / 2t) / sqrt(2 pi t)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2 * t)) / np.sqrt(2 * math.pi * t)


def heat_kernel_k(point: SimplexPoint) -> float:
    """Product of heat kernels along the increments of ``point`` from (0, 0)."""
    t = np.diff(np.concatenate(([0.0], point.times)))
    x = np.diff(np.concatenate(([0.0], point.positions)))
    return float(np.prod(heat_kernel(t, x)))


def _lattice_path(k: int, n: int, point: SimplexPoint) -> tuple[list[int], list[int]] | None:
    if point.k != k:
        raise ValueError(f"point has order {point.k}, expected {k}")
    if k > n:
        return None
    ii = [math.ceil(n * t) for t in point.times]
    if ii and (ii[0] < 1 or ii[-1] > n or any(b <= a for a, b in zip(ii, ii[1:]))):
        return None
    xs = [parity_round(x * math.sqrt(n), i) for x, i in zip(point.positions, ii)]
    return ii, xs


def discrete_kernel_pkn(k: int, n: int, point: SimplexPoint, rescaled: bool = False) -> float:
    """The piecewise-constant walk density p_k^n at ``point``.

    Equals 2^-k prod p(i_j - i_{j-1}, x_j - x_{j-1}) with i = ceil(n t) and
    x_j the parity rounding of x_j sqrt(n); zero unless i is strictly
    increasing in [1, n].  ``rescaled`` multiplies by n^(k/2).
    """
    path = _lattice_path(k, n, point)
    if path is None:
        return 0.0
    ii, xs = path
    val = 0.5**k
    pi, px = 0, 0
    for i, x in zip(ii, xs):
        val *= rw_pmf(i - pi, x - px)
        pi, px = i, x
    return val * n ** (k / 2) if rescaled else val


def bridge_kernel(times: LatticeTimeVector, sites, n: int, x: int) -> float:
    """Probability that a walk pinned at S_n = x visits ``sites`` at ``times``."""
    sites = [int(s) for s in sites]
    if len(sites) != times.k:
        raise ValueError("times and sites differ in length")
    if times.n != n:
        raise ValueError("time vector horizon differs from n")
    denom = rw_pmf(n, x)
    if denom == 0.0:
        raise ValueError(f"cannot condition on S_{n} = {x}: probability zero")
    val = 1.0
    pi, px = 0, 0
    for i, s in zip(times.times, sites):
        val *= rw_pmf(i - pi, s - px)
        pi, px = i, s
    return val * rw_pmf(n - pi, x - px) / denom


def fock_norm(k: int) -> float:
    """Squared L2 norm of the k-fold heat kernel over the simplex."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return 1.0 / (2.0**k * math.gamma(k / 2 + 1))


def fock_norm_bridge(k: int, y: float) -> float:
    """Squared L2 norm of the k-fold heat kernel pinned at (1, y)."""
    if k < 0:
        raise ValueError("k must be >= 0")
    return math.exp(-y * y) / (2.0 ** (k + 0.5) * math.gamma((k + 1) / 2))


def llt_gap(n: int) -> float:
    """sup over |x| <= 4 sqrt(n) of |(sqrt(n)/2) p(n, x) - rho(1, x / sqrt(n))|."""
    if n < 2 or n % 2:
        raise ValueError("n must be even and >= 2")
    xmax = min(n, int(4 * math.sqrt(n)))
    xmax -= xmax % 2
    x = np.arange(-xmax, xmax + 1, 2)
    row = rw_pmf_row(n)
    p = row[(x + n) // 2]
    return float(np.max(np.abs(math.sqrt(n) / 2 * p - heat_kernel(1.0, x / math.sqrt(n)))))


def pkn_norm_sq(k: int, n: int) -> float:
    """Exact squared L2 norm of n^(k/2) p_k^n.

    p_k^n is constant on rectangles of volume 2^k n^(-3k/2), so the norm is
    n^(-k/2) 2^-k sum over i in D_k^n of prod q(i_j - i_{j-1}) with
    q(a) = sum_x p(a, x)^2 = p(2a, 0); the time sum is a k-step convolution.
    """
    if k == 0:
        return 1.0
    if k > n:
        return 0.0
    q = return_probs(n)
    # f[i] = sum over chains ending at time i
    f = np.zeros(n + 1)
    f[0] = 1.0
    for _ in range(k):
        g = np.zeros(n + 1)
        for i in range(1, n + 1):
            g[i] = np.dot(f[:i], q[i:0:-1])
        f = g
    return float(f.sum()) * n ** (-k / 2) * 0.5**k


def kernel_bound_constant(k: int, n: int) -> float:
    """Per-order constant (||n^(k/2) p_k^n|| / ||rho_k||)^(1/k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.sqrt(pkn_norm_sq(k, n) / fock_norm(k)) ** (1.0 / k)


def pkn_norm_sq_all(n: int, K: int) -> np.ndarray:
    """pkn_norm_sq(k, n) for k = 0..K in one pass (zero for k > n)."""
    q = return_probs(n)
    out = np.zeros(K + 1)
    out[0] = 1.0
    f = np.zeros(n + 1)
    f[0] = 1.0
    for k in range(1, min(K, n) + 1):
        g = np.convolve(f, q)[: n + 1]
        # convolve includes the lag-0 term q[0] f[i]; chains need strict increase
        g -= f * q[0]
        f = g
        out[k] = f.sum() * n ** (-k / 2) * 0.5**k
    return out
