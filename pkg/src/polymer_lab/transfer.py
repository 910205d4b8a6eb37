"""Quenched partition functions by the one-step transfer recursion.

Rows are stored compactly on the walk support from the origin: the row at
time ``t`` of a field started at ``(m, y)`` holds sites
``y - d, y - d + 2, ..., y + d`` with ``d = t - m``.  One step maps a row of
length ``d + 1`` to one of length ``d + 2`` by

    new[j] = w(t + 1, site_j) * (old[j - 1] + old[j]) / 2

with out-of-range entries read as zero.  ``w = 1 + beta * omega`` in the
product form and ``exp(beta * omega)`` in the exponential form.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable

import numba
import numpy as np

from .env import EnvField, EnvSpec, _key, log_mgf, row_values
from .walk import rw_pmf, rw_pmf_row

FORMS = ("product", "exponential")
_LOG_HALF = math.log(0.5)


def _weights(env: EnvField, t: int, xmin: int, xmax: int, beta: float, form: str, log_space: bool) -> np.ndarray:
    om = env.row(t, xmin, xmax)
    if form == "product":
        return 1.0 + beta * om
    if log_space:
        return beta * om
    return np.exp(beta * om)


def _step(old: np.ndarray, w: np.ndarray, log_space: bool) -> np.ndarray:
    d = old.size
    if log_space:
        new = np.empty(d + 1)
        new[0] = old[0]
        new[-1] = old[-1]
        new[1:-1] = np.logaddexp(old[:-1], old[1:])
        return new + _LOG_HALF + w
    new = np.empty(d + 1)
    new[0] = old[0]
    new[-1] = old[-1]
    new[1:-1] = old[:-1] + old[1:]
    return 0.5 * new * w


@dataclass
class PartitionField:
    """Z(m, y; t, x) for m <= t <= end on the walk support from ``origin``.

    In ``log_space`` the rows hold log Z.  In streaming mode only the final
    row is retained.
    """

    origin: tuple[int, int]
    end: int
    form: str
    beta: float
    log_space: bool
    mode: str
    rows: dict[int, np.ndarray] = field(repr=False)

    @property
    def n(self) -> int:
        return self.end

    def sites(self, t: int) -> np.ndarray:
        m, y = self.origin
        d = t - m
        if d < 0:
            raise IndexError(f"time {t} precedes origin time {m}")
        return np.arange(y - d, y + d + 1, 2)

    def row(self, t: int) -> np.ndarray:
        if t not in self.rows:
            raise KeyError(f"row {t} not retained (mode={self.mode})")
        return self.rows[t]

    @property
    def final(self) -> np.ndarray:
        return self.rows[self.end]

    def log_value(self, t: int, x: int) -> float:
        v = self.value(t, x) if not self.log_space else None
        if v is not None:
            return math.log(v) if v > 0 else -math.inf
        m, y = self.origin
        d = t - m
        if abs(x - y) > d or (x - y - d) % 2:
            return -math.inf
        return float(self.row(t)[(x - y + d) // 2])

    def value(self, t: int, x: int) -> float:
        m, y = self.origin
        d = t - m
        if d < 0:
            raise IndexError(f"time {t} precedes origin time {m}")
        if abs(x - y) > d or (x - y - d) % 2:
            return 0.0
        v = float(self.row(t)[(x - y + d) // 2])
        return math.exp(v) if self.log_space else v

    def p2l(self) -> float:
        return p2l_value(self)

    def to_csv(self, dest=None, all_rows: bool = False) -> str | None:
        """Write rows as CSV with columns (k, x, value) or (k, x, log_value)."""
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "x", "log_value" if self.log_space else "value"])
        times = sorted(self.rows) if all_rows else [self.end]
        for t in times:
            for x, v in zip(self.sites(t), self.rows[t]):
                w.writerow([t, int(x), repr(float(v))])
        text = buf.getvalue()
        if dest is None:
            return text
        with open(dest, "w", newline="") as fh:
            fh.write(text)
        return None


@dataclass(frozen=True)
class PolymerEndpoint:
    """Normalized law of the polymer endpoint S_n."""

    sites: np.ndarray
    probs: np.ndarray

    def max_prob(self) -> float:
        return float(self.probs.max())

    def second_moment(self) -> float:
        return float(np.dot(self.probs, self.sites.astype(float) ** 2))


def _default_log_space(form: str, beta: float, n: int) -> bool:
    return form == "exponential" and (beta >= 0.5 or n >= 1024)


def evolve(
    env: EnvField,
    beta: float,
    form: str = "product",
    origin: tuple[int, int] = (0, 0),
    horizon: int | None = None,
    mode: str = "stored",
    log_space: bool | None = None,
) -> PartitionField:
    """Run the transfer recursion from ``origin`` to time ``horizon``.

    ``beta`` is the coupling actually applied (already scaled).
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    if mode not in ("stored", "streaming"):
        raise ValueError("mode must be 'stored' or 'streaming'")
    m, y = origin
    k = env.n if horizon is None else int(horizon)
    if k > env.n:
        raise ValueError(f"horizon {k} exceeds environment extent {env.n}")
    if not 0 <= m <= k:
        raise ValueError(f"origin time {m} outside [0, {k}]")
    if (m + y) % 2:
        raise ValueError(f"origin ({m}, {y}) is off the parity lattice")
    if abs(y) + (k - m) > env.halfwidth:
        raise ValueError(f"walk from ({m}, {y}) can leave the stored window |x| <= {env.halfwidth}")
    if log_space is None:
        log_space = _default_log_space(form, beta, k)
    if log_space and form == "product":
        raise ValueError("log space requires the exponential form (product values may be negative)")
    row = np.array([0.0 if log_space else 1.0])
    rows = {m: row}
    for t in range(m + 1, k + 1):
        d = t - m
        w = _weights(env, t, y - d, y + d, beta, form, log_space)
        row = _step(row, w, log_space)
        if mode == "stored":
            rows[t] = row
    rows[k] = row
    return PartitionField((m, y), k, form, float(beta), bool(log_space), mode, rows)


def p2l_value(pf: PartitionField) -> float:
    """Point-to-line value: sum of the final row (log of the sum in log space)."""
    r = pf.final
    if pf.log_space:
        mx = r.max()
        return float(mx + math.log(np.exp(r - mx).sum()))
    return float(r.sum())


def endpoint_density(pf: PartitionField) -> PolymerEndpoint:
    r = pf.final
    if pf.log_space:
        w = np.exp(r - r.max())
    else:
        if pf.form == "product" and np.any(r < 0):
            raise ValueError("endpoint law undefined: product-form row has negative entries")
        w = r / r.max()
    return PolymerEndpoint(pf.sites(pf.end), w / w.sum())


def four_param(env: EnvField, beta: float, form: str, m: int, y: int, k: int, x) -> float:
    """Z(m, y; k, x); ``x = '*'`` gives the point-to-line value."""
    pf = evolve(env, beta, form, (m, y), k, mode="streaming", log_space=False)
    if x == "*":
        return p2l_value(pf)
    return pf.value(k, x)


@dataclass
class BackwardField:
    """Z(k, x; n, *) for all k <= n on |x| <= halfwidth - (n - k).

    Each row is stored scaled: Z(k, .) = rows[k] * exp(log_scale[k]).
    """

    n: int
    halfwidth: int
    beta: float
    form: str
    rows: np.ndarray = field(repr=False)
    log_scale: np.ndarray = field(repr=False)

    def _col(self, k: int, x: int) -> int:
        if (k + x) % 2:
            raise IndexError(f"({k}, {x}) is parity-invalid")
        if abs(x) > self.halfwidth - (self.n - k):
            raise IndexError(f"({k}, {x}) outside the computed cone")
        return (x + self.halfwidth) // 2

    def scaled(self, k: int, x: int) -> float:
        return float(self.rows[k, self._col(k, x)])

    def value(self, k: int, x: int) -> float:
        return self.scaled(k, x) * math.exp(self.log_scale[k])


def backward_p2l(env: EnvField, beta: float, form: str = "exponential", n: int | None = None) -> BackwardField:
    """Backward recursion B(k, x) = 1/2 sum_{+-} w(k + 1, x +- 1) B(k + 1, x +- 1)."""
    n = env.n if n is None else n
    H = env.halfwidth
    rows = np.full((n + 1, H + 1), np.nan)
    scale = np.zeros(n + 1)
    start = -H + ((n + H) % 2)
    xs = np.arange(start, H + 1, 2)
    rows[n, (xs + H) // 2] = 1.0
    for k in range(n - 1, -1, -1):
        lim = H - (n - k)
        s0 = -lim + ((k + lim) % 2)
        xk = np.arange(s0, lim + 1, 2)
        om_l = env.row(k + 1, xk[0] - 1, xk[-1] - 1) if xk.size else np.empty(0)
        om_r = env.row(k + 1, xk[0] + 1, xk[-1] + 1) if xk.size else np.empty(0)
        if form == "product":
            wl, wr = 1.0 + beta * om_l, 1.0 + beta * om_r
        else:
            wl, wr = np.exp(beta * om_l), np.exp(beta * om_r)
        bl = rows[k + 1, (xk - 1 + H) // 2]
        br = rows[k + 1, (xk + 1 + H) // 2]
        new = 0.5 * (wl * bl + wr * br)
        mx = np.max(np.abs(new)) if new.size else 1.0
        mx = mx if mx > 0 else 1.0
        rows[k, (xk + H) // 2] = new / mx
        scale[k] = scale[k + 1] + math.log(mx)
    return BackwardField(n, H, float(beta), form, rows, scale)


def transition_prob(
    env: EnvField, beta: float, n: int, i: int, x: int, step: int, form: str = "exponential", back: BackwardField | None = None
) -> float:
    """P(S_{i+1} = x + step | S_i = x) under the polymer measure of horizon n."""
    if step not in (-1, 1):
        raise ValueError("step must be +1 or -1")
    if not 0 <= i < n:
        raise ValueError(f"time {i} outside [0, {n})")
    back = back if back is not None and back.n == n else backward_p2l(env, beta, form, n)
    den = back.scaled(i, x)
    if den == 0.0:
        raise ValueError(f"Z({i}, {x}; {n}, *) = 0: cannot condition")
    om = env.value(i + 1, x + step)
    w = 1.0 + beta * om if form == "product" else math.exp(beta * om)
    num = 0.5 * w * back.scaled(i + 1, x + step)
    return num / den * math.exp(back.log_scale[i + 1] - back.log_scale[i])


def exact_second_moment(n: int, beta: float, noise_var: float = 1.0) -> float:
    """E[z_n(beta)^2] for the product form, by DP over the difference walk.

    With D = S - S' the overlap factor is (1 + beta^2 v) whenever D_i = 0;
    D moves by -2, 0, +2 with probabilities 1/4, 1/2, 1/4.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 8192:
        raise ValueError("n > 8192 not supported by the pair DP")
    g = 1.0 + beta * beta * noise_var
    f = np.zeros(2 * n + 3)
    c = n + 1
    f[c] = 1.0
    for _ in range(n):
        f[1:-1] = 0.25 * f[:-2] + 0.5 * f[1:-1] + 0.25 * f[2:]
        f[c] *= g
    return float(f.sum())


def reverse_env(env: EnvField) -> EnvField:
    """Time-reversed field omega_n(i, x) = omega(n - i, x); row n is empty."""
    if env.n % 2:
        raise ValueError("time reversal preserves parity only for even n")
    vals = np.full_like(env.values, np.nan)
    vals[: env.n - 1] = env.values[env.n - 2 :: -1]
    vals.setflags(write=False)
    return EnvField(env.spec, env.n, env.halfwidth, env.seed, vals)


class RescaledField:
    """z_n(t, x) = sqrt(n) z(nt, x sqrt(n); beta0 n^(-1/4)) with interpolation.

    At each lattice time the field is first extended linearly in space
    between parity-valid sites; inside a rectangle it is the bilinear
    interpolation of the four corners.  Row 0 is the delta at the origin,
    so the field before the first step is the smeared delta.
    """

    def __init__(self, env: EnvField, beta0: float, n: int, form: str = "product"):
        self.n = n
        self.beta0 = beta0
        self.pf = evolve(env, beta0 * n ** -0.25, form, (0, 0), n, mode="stored", log_space=False)
        self.root = math.sqrt(n)

    def lattice(self, k: int, x: int) -> float:
        return self.root * self.pf.value(k, x)

    def edge(self, k: int, y: float) -> float:
        """Spatial linear interpolation at lattice time k, lattice position y."""
        p = k % 2
        a = 2 * math.floor((y - p) / 2) + p
        u = (y - a) / 2
        va = self.lattice(k, a)
        if u == 0.0:
            return va
        return (1 - u) * va + u * self.lattice(k, a + 2)

    def __call__(self, t: float, x: float) -> float:
        if not 0 <= t <= 1:
            raise ValueError("t must lie in [0, 1]")
        s = self.n * t
        y = x * self.root
        j = round(s)
        if abs(s - j) < 1e-12:
            return self.edge(j, y)
        i = math.ceil(s)
        tau = s - (i - 1)
        # rectangle at column i containing y: site xc with i + xc even, y in (xc - 1, xc + 1]
        xc = 2 * math.ceil((y - 1 - i % 2) / 2) + i % 2
        if y <= xc - 1:
            xc += 2
        xi = (y - (xc - 1)) / 2
        a = self.lattice(i - 1, xc - 1)
        b = self.lattice(i - 1, xc + 1)
        c = self.edge(i, xc - 1)
        d = self.edge(i, xc + 1)
        return (1 - tau) * ((1 - xi) * a + xi * b) + tau * ((1 - xi) * c + xi * d)


def rescaled_field(env: EnvField, beta0: float, n: int, t: float, x: float) -> float:
    return RescaledField(env, beta0, n)(t, x)


def duhamel_residual(env: EnvField, beta0: float, n: int) -> float:
    """Max over lattice (t, x) of the discrete Duhamel identity residual.

    Checks z_n = p_n + beta0 n^(-3/4) sum_{s, y} p_n(t - s, x - y) zbar_n(s, y)
    omega(s + 1/n, y), with the source sum convolved against explicit walk
    kernels by FFT rather than by the recursion.
    """
    if n > 512:
        raise ValueError("duhamel_residual supports n <= 512")
    if n > env.n or n > env.halfwidth:
        raise ValueError("environment too small")
    beta = beta0 * n ** -0.25
    pf = evolve(env, beta, "product", (0, 0), n, mode="stored", log_space=False)
    W = 2 * n + 1  # sites -n..n on the full integer grid
    Z = np.zeros((n + 1, W))
    for t in range(n + 1):
        Z[t, pf.sites(t) + n] = pf.row(t)
    zbar = np.zeros_like(Z)
    zbar[:, 1:-1] = 0.5 * (Z[:, :-2] + Z[:, 2:])
    zbar[:, 0] = 0.5 * Z[:, 1]
    zbar[:, -1] = 0.5 * Z[:, -2]
    src = np.zeros((n + 1, W))  # src[i] = omega(i, y) zbar(i - 1, y)
    for i in range(1, n + 1):
        xs = np.arange(-i, i + 1, 2)
        src[i, xs + n] = env.row(i, -i, i) * zbar[i - 1, xs + n]
    L = 1 << int(math.ceil(math.log2(2 * W)))
    P = np.zeros((n + 1, W))
    for d in range(n + 1):
        P[d, np.arange(-d, d + 1, 2) + n] = rw_pmf_row(d)
    Fs = np.fft.rfft(src, L, axis=1)
    Fp = np.fft.rfft(P, L, axis=1)
    root = math.sqrt(n)
    worst = 0.0
    for k in range(n + 1):
        acc = (Fs[1 : k + 1] * Fp[k - 1 :: -1][:k]).sum(axis=0) if k else np.zeros(Fs.shape[1], complex)
        conv = np.fft.irfft(acc, L)[n : n + W]  # symmetric kernel: centre offset n
        rhs = root * (P[k] + beta * conv)
        lhs = root * Z[k]
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# ---------------------------------------------------------------------------
# fused replica kernels: environment generation inside the recursion


@numba.njit(cache=True)
def _replica_row(seed, kind, loc, scale, tb, tl, n, beta, form, lam, row, om):
    """Final row of z_n (form 0) or exp(-n lam) Z_n (form 1), rescaled.

    Returns log_scale with true row = row * exp(log_scale).
    """
    key = _key(seed)
    row[0] = 1.0
    log_scale = 0.0
    for t in range(1, n + 1):
        # old row occupies 0..t-1; update right to left in place
        row[t] = 0.5 * row[t - 1]
        for j in range(t - 1, 0, -1):
            row[j] = 0.5 * (row[j] + row[j - 1])
        row[0] = 0.5 * row[0]
        row_values(key, kind, loc, scale, tb, tl, t, -t, t + 1, om)
        mx = 0.0
        for j in range(t + 1):
            if form == 0:
                w = 1.0 + beta * om[j]
            else:
                w = math.exp(beta * om[j] - lam)
            row[j] *= w
            a = abs(row[j])
            if a > mx:
                mx = a
        if mx > 0.0 and (mx > 1e100 or mx < 1e-100):
            for j in range(t + 1):
                row[j] /= mx
            log_scale += math.log(mx)
    return log_scale


@numba.njit(cache=True)
def _replica_batch(seeds, kind, loc, scale, tb, tl, n, beta, form, lam, rows, scales):
    buf = np.empty(n + 1)
    om = np.empty(n + 1)
    for r in range(seeds.size):
        scales[r] = _replica_row(seeds[r], kind, loc, scale, tb, tl, n, beta, form, lam, buf, om)
        rows[r, :] = buf


def replica_rows(
    spec: EnvSpec, n: int, beta: float, seeds: Iterable[int], form: str = "product"
) -> tuple[np.ndarray, np.ndarray]:
    """Final rows of many independent replicas without storing environments.

    ``form='exponential'`` returns exp(-n lambda(beta)) Z_n(., beta).  The
    true row r equals ``rows[r] * exp(scales[r])``.
    """
    seeds = np.asarray([int(s) & 0xFFFFFFFFFFFFFFFF for s in seeds], dtype=np.uint64)
    code = 0 if form == "product" else 1
    lam = log_mgf(spec, beta) if code == 1 else 0.0
    rows = np.empty((seeds.size, n + 1))
    scales = np.empty(seeds.size)
    _, loc, scale, tb, tl = spec._kernel_args()
    _replica_batch(seeds, spec.code, loc, scale, tb, tl, n, float(beta), code, lam, rows, scales)
    return rows, scales


def replica_sites(n: int) -> np.ndarray:
    return np.arange(-n, n + 1, 2)
