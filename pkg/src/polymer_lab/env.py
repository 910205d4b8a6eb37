"""Space-time random environments.

Every cell (i, x) draws its value from a counter-based hash of
(seed, i, x), so a field is a pure function of (spec, n, halfwidth, seed):
any sub-rectangle regenerates bit-exactly and cells can be filled in any
order.  The per-cell generator is a numba function shared by stored fields
and by the fused replica kernels in :mod:`polymer_lab.transfer`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numba
import numpy as np

KINDS = ("gaussian", "rademacher", "uniform", "shifted_exponential")
KIND_CODE = {k: c for c, k in enumerate(KINDS)}

_SQRT3 = math.sqrt(3.0)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM2 = np.uint64(0xD1B54A32D192ED03)
_OFFSET = np.int64(1 << 31)
_MASK32 = np.uint64(0xFFFFFFFF)


@numba.njit(cache=True)
def _mix64(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _unit(z):
    # 53 random bits -> open interval (0, 1)
    return (np.float64(z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _key(seed):
    return _mix64(np.uint64(seed) + _GOLDEN)


@numba.njit(cache=True)
def _gauss_pair(key, i, q):
    # one Box-Muller draw serves the two same-parity sites 4q, 4q + 2 (offset)
    ctr = (np.uint64(i) << np.uint64(32)) | (np.uint64(q) & _MASK32)
    u1 = _unit(_mix64(key ^ _mix64(ctr)))
    u2 = _unit(_mix64(key ^ _mix64(ctr ^ _STREAM2)))
    r = math.sqrt(-2.0 * math.log(u1))
    a = 2.0 * math.pi * u2
    # two cos calls (not sin/cos) so no sincos fusion can alter the last bit
    return r * math.cos(a), r * math.cos(a - 0.5 * math.pi)


@numba.njit(cache=True)
def _finish(xi, loc, scale, tilt_beta, tilt_lam):
    w = loc + scale * xi
    if tilt_beta != 0.0:
        w = math.expm1(tilt_beta * w - tilt_lam) / tilt_beta
    return w


@numba.njit(cache=True)
def _std_value(key, kind, i, x):
    xo = np.int64(x) + _OFFSET
    if kind == 0:
        c, s = _gauss_pair(key, i, xo >> 2)
        return c if ((xo >> 1) & 1) == 0 else s
    ctr = (np.uint64(i) << np.uint64(32)) | (np.uint64(xo) & _MASK32)
    h1 = _mix64(key ^ _mix64(ctr))
    if kind == 1:
        return 1.0 if (h1 >> np.uint64(63)) == np.uint64(1) else -1.0
    if kind == 2:
        return _SQRT3 * (2.0 * _unit(h1) - 1.0)
    return -math.log(_unit(h1)) - 1.0


@numba.njit(cache=True)
def cell_value(seed, kind, loc, scale, tilt_beta, tilt_lam, i, x):
    """Environment value at cell (i, x); pure function of its arguments."""
    return _finish(_std_value(_key(seed), kind, i, x), loc, scale, tilt_beta, tilt_lam)


@numba.njit(cache=True)
def row_values(key, kind, loc, scale, tb, tl, i, xmin, count, out):
    """Fill out[j] with the value at (i, xmin + 2j), j < count.

    Same numbers as ``cell_value`` cell by cell; Gaussian rows reuse the
    second Box-Muller output for the partner site.
    """
    if kind != 0:
        for j in range(count):
            out[j] = _finish(_std_value(key, kind, i, xmin + 2 * j), loc, scale, tb, tl)
        return
    spare = 0.0
    for j in range(count):
        xo = np.int64(xmin + 2 * j) + _OFFSET
        if ((xo >> 1) & 1) == 0:
            c, spare = _gauss_pair(key, i, xo >> 2)
            xi = c
        elif j == 0:
            c, xi = _gauss_pair(key, i, xo >> 2)
        else:
            xi = spare
        out[j] = _finish(xi, loc, scale, tb, tl)


@numba.njit(cache=True)
def _fill(seed, kind, loc, scale, tb, tl, n, halfwidth, out):
    key = _key(seed)
    for i in range(1, n + 1):
        start = -halfwidth + ((i + halfwidth) % 2)
        count = (halfwidth - start) // 2 + 1
        row_values(key, kind, loc, scale, tb, tl, i, start, count, out[i - 1])


@numba.njit(cache=True)
def _cells(seed, kind, loc, scale, tb, tl, ii, xx, out):
    for k in range(ii.size):
        out[k] = cell_value(seed, kind, loc, scale, tb, tl, ii[k], xx[k])


@numba.njit(cache=True)
def _tilt_array(vals, tb, tl, out):
    for k in range(vals.size):
        out.flat[k] = math.expm1(tb * vals.flat[k] - tl) / tb


def replica_seed(master: int, replica: int) -> int:
    """Deterministic per-replica seed derived from a master seed."""
    z = _mix64(np.uint64(master & 0xFFFFFFFFFFFFFFFF) ^ _mix64(np.uint64(replica) + _STREAM2))
    return int(z)


def stream_seeds(master: int, tag: tuple[int, ...], count: int) -> list[int]:
    """Seeds of an independent replica stream labelled by ``tag``."""
    base = master
    for t in tag:
        base = replica_seed(base, int(t) + 0x51ED)
    return [replica_seed(base, r) for r in range(count)]


@dataclass(frozen=True)
class EnvSpec:
    """Law of a single environment variable.

    ``params`` may carry ``loc`` and ``scale`` (defaults 0 and 1) giving
    omega = loc + scale * xi with xi of the standardized kind.  A nonzero
    ``tilt`` marks the tilted field (exp(t*omega - lambda(t)) - 1) / t.
    """

    kind: str = "gaussian"
    params: dict[str, float] = field(default_factory=dict)
    tilt: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}; expected one of {KINDS}")
        bad = set(self.params) - {"loc", "scale"}
        if bad:
            raise ValueError(f"unsupported params {sorted(bad)}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def loc(self) -> float:
        return float(self.params.get("loc", 0.0))

    @property
    def scale(self) -> float:
        return float(self.params.get("scale", 1.0))

    @property
    def code(self) -> int:
        return KIND_CODE[self.kind]

    @property
    def base(self) -> "EnvSpec":
        return EnvSpec(self.kind, dict(self.params))

    def mgf_interval(self) -> tuple[float, float]:
        """Open interval of beta on which log E exp(beta * omega) is finite."""
        if self.tilt:
            raise ValueError("log-MGF is not tabulated for tilted fields")
        if self.kind == "shifted_exponential":
            return (-math.inf, 1.0 / self.scale)
        return (-math.inf, math.inf)

    def mean(self) -> float:
        if self.tilt:
            return 0.0
        return self.loc

    def variance(self) -> float:
        if self.tilt:
            b = self.tilt
            base = self.base
            return math.expm1(log_mgf(base, 2 * b) - 2 * log_mgf(base, b)) / b**2
        return self.scale**2

    def to_json(self) -> str:
        d: dict[str, Any] = {"kind": self.kind, "params": dict(sorted(self.params.items()))}
        if self.tilt:
            d["tilt"] = self.tilt
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str | dict) -> "EnvSpec":
        d = json.loads(text) if isinstance(text, str) else dict(text)
        return cls(d["kind"], dict(d.get("params", {})), float(d.get("tilt", 0.0)))

    def _kernel_args(self) -> tuple[int, float, float, float, float]:
        tl = log_mgf(self.base, self.tilt) if self.tilt else 0.0
        return self.code, self.loc, self.scale, float(self.tilt), tl


def log_mgf(spec: EnvSpec, beta: float) -> float:
    """lambda(beta) = log E exp(beta * omega), in closed form per kind."""
    lo, hi = spec.mgf_interval()
    if not lo < beta < hi:
        raise ValueError(f"beta={beta} outside the finite-MGF interval ({lo}, {hi}) of {spec.kind}")
    b = beta * spec.scale
    shift = beta * spec.loc
    if b == 0.0:
        return shift
    if spec.kind == "gaussian":
        core = 0.5 * b * b
    elif spec.kind == "rademacher":
        ab = abs(b)
        core = ab + math.log1p(math.exp(-2 * ab)) - math.log(2.0)
    elif spec.kind == "uniform":
        a = _SQRT3 * abs(b)
        if a < 1e-4:
            core = a * a / 6.0 - a**4 / 180.0
        else:
            core = a + math.log1p(-math.exp(-2 * a)) - math.log(2 * a)
    else:
        core = -b - math.log1p(-b)
    return shift + core


@dataclass(frozen=True)
class EnvField:
    """Environment values on parity-valid cells 1 <= i <= n, |x| <= halfwidth.

    Row i - 1 of ``values`` holds x = -halfwidth + 2j + ((i + halfwidth) % 2)
    at column (x + halfwidth) // 2; the spare slot of short rows is NaN.
    """

    spec: EnvSpec
    n: int
    halfwidth: int
    seed: int
    values: np.ndarray = field(repr=False)

    def column(self, x):
        return (np.asarray(x) + self.halfwidth) // 2

    def value(self, i: int, x: int) -> float:
        if not 1 <= i <= self.n or abs(x) > self.halfwidth:
            raise IndexError(f"cell ({i}, {x}) outside field")
        if (i + x) % 2:
            raise IndexError(f"cell ({i}, {x}) is parity-invalid")
        return float(self.values[i - 1, (x + self.halfwidth) // 2])

    def row(self, i: int, xmin: int, xmax: int) -> np.ndarray:
        """Values at x = xmin, xmin + 2, ..., xmax on row i (same parity as i)."""
        if (i + xmin) % 2 or (xmax - xmin) % 2:
            raise IndexError("row slice must start on a parity-valid site")
        if xmin < -self.halfwidth or xmax > self.halfwidth:
            raise IndexError(f"sites [{xmin}, {xmax}] exceed halfwidth {self.halfwidth}")
        j0 = (xmin + self.halfwidth) // 2
        return self.values[i - 1, j0 : j0 + (xmax - xmin) // 2 + 1]

    def sites(self, i: int) -> np.ndarray:
        start = -self.halfwidth + ((i + self.halfwidth) % 2)
        return np.arange(start, self.halfwidth + 1, 2)

    def manifest(self) -> dict:
        return {"spec": json.loads(self.spec.to_json()), "n": self.n, "halfwidth": self.halfwidth, "seed": self.seed}


def cell_values(spec: EnvSpec, seed: int, i, x) -> np.ndarray:
    """Environment values at arbitrary cells (i, x) (no parity check)."""
    ii = np.ascontiguousarray(np.asarray(i, dtype=np.int64).ravel())
    xx = np.ascontiguousarray(np.asarray(x, dtype=np.int64).ravel())
    out = np.empty(ii.size)
    _cells(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), *spec._kernel_args(), ii, xx, out)
    return out.reshape(np.shape(i))


def sample_env(spec: EnvSpec, n: int, halfwidth: int, seed: int) -> EnvField:
    if n < 1:
        raise ValueError("n must be >= 1")
    if halfwidth < n:
        raise ValueError(f"halfwidth {halfwidth} < n {n}: the walk can leave the stored window")
    values = np.full((n, halfwidth + 1), np.nan)
    _fill(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), *spec._kernel_args(), n, halfwidth, values)
    values.setflags(write=False)
    return EnvField(spec, n, halfwidth, seed, values)


def from_values(spec: EnvSpec, n: int, halfwidth: int, table: dict[tuple[int, int], float]) -> EnvField:
    """Build a field from explicit cell values (used by enumeration oracles)."""
    values = np.full((n, halfwidth + 1), np.nan)
    for (i, x), v in table.items():
        if (i + x) % 2:
            raise ValueError(f"cell ({i}, {x}) is parity-invalid")
        values[i - 1, (x + halfwidth) // 2] = v
    values.setflags(write=False)
    return EnvField(spec, n, halfwidth, -1, values)


def tilt_env(env: EnvField, beta_n: float) -> EnvField:
    """Field of (exp(beta_n * omega - lambda(beta_n)) - 1) / beta_n."""
    if beta_n == 0:
        raise ValueError("tilt undefined at beta_n = 0")
    if env.spec.tilt:
        raise ValueError("field is already tilted")
    lam = log_mgf(env.spec, beta_n)
    vals = np.empty_like(env.values)
    _tilt_array(np.ascontiguousarray(env.values), float(beta_n), lam, vals)
    vals.setflags(write=False)
    spec = EnvSpec(env.spec.kind, dict(env.spec.params), float(beta_n))
    return EnvField(spec, env.n, env.halfwidth, env.seed, vals)
