"""Weighted U-statistics of the environment and the layered chaos expansion.

A kernel g on [0,1]^k x R^k is averaged over the rectangles
((i-1)/n, i/n] x ((x-1)/sqrt(n), (x+1)/sqrt(n)] (one per parity-valid
lattice cell), and

    S_k^n(g) = 2^(k/2) sum_{i distinct} sum_x gbar(i/n, x/sqrt(n)) prod omega(i_j, x_j).

The chaos layers U_k are the coefficients of beta^k in the product-form
recursion; summing beta^k T_k reconstructs the partition function exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numba
import numpy as np

from .env import EnvField, EnvSpec, _key, row_values
from .walk import fock_norm, pkn_norm_sq_all, rw_pmf

MAX_GRID_ENTRIES = 50_000_000


@dataclass
class KernelGrid:
    """Rectangle averages of a kernel on |x| <= halfwidth (lattice units).

    ``values`` has shape (n,)*k + (halfwidth+1,)*k; axis j indexes time
    i_j - 1 and axis k + j the parity-compact column (x_j + halfwidth) // 2.
    Entries with repeated times are zero.
    """

    k: int
    n: int
    halfwidth: int
    values: np.ndarray = field(repr=False)

    @property
    def cell_volume(self) -> float:
        return 2.0**self.k * self.n ** (-1.5 * self.k)

    def site(self, i: int, col: int) -> int:
        return -self.halfwidth + 2 * col + ((i + self.halfwidth) % 2)

    def l2_norm_sq(self) -> float:
        """||gbar_n||^2 over the rectangles the grid covers."""
        return float(np.sum(self.values**2)) * self.cell_volume

    def cells(self):
        """Iterate (times, sites, value) over nonzero entries."""
        k = self.k
        for idx in zip(*np.nonzero(self.values)):
            ii = tuple(int(a) + 1 for a in idx[:k])
            xs = tuple(self.site(i, int(c)) for i, c in zip(ii, idx[k:]))
            yield ii, xs, float(self.values[idx])

    def permuted(self, perm) -> "KernelGrid":
        """Grid of g o pi with pi permuting the k coordinates."""
        perm = list(perm)
        axes = perm + [self.k + p for p in perm]
        return KernelGrid(self.k, self.n, self.halfwidth, np.transpose(self.values, axes).copy())


def _check_size(k: int, n: int, halfwidth: int) -> None:
    entries = float(n) ** k * float(halfwidth + 1) ** k
    if entries > MAX_GRID_ENTRIES:
        raise ValueError(f"kernel grid needs {entries:.3g} entries (limit {MAX_GRID_ENTRIES:.3g}); use k <= 2 or a smaller window")


def _distinct_mask(k: int, n: int) -> np.ndarray:
    mask = np.ones((n,) * k, dtype=bool)
    for a, b in itertools.combinations(range(k), 2):
        ia = np.arange(n).reshape([-1 if j == a else 1 for j in range(k)])
        ib = np.arange(n).reshape([-1 if j == b else 1 for j in range(k)])
        mask &= ia != ib
    return mask


def rect_average(g: Callable, k: int, n: int, halfwidth: int, order: int = 4, panels: int = 1) -> KernelGrid:
    """Average g over every rectangle by composite Gauss-Legendre quadrature.

    Each rectangle side is split into ``panels`` pieces carrying ``order``
    nodes.  ``g(t, x)`` receives arrays whose last axis has length k and
    must be vectorized.  Constants are reproduced exactly.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_size(k, n, halfwidth)
    shape = (n,) * k + (halfwidth + 1,) * k
    if k > n:
        return KernelGrid(k, n, halfwidth, np.zeros(shape))
    node, wt = np.polynomial.legendre.leggauss(order)
    u = np.concatenate([(p + 0.5 * (node + 1.0)) / panels for p in range(panels)])
    wt = np.tile(0.5 * wt / panels, panels)
    order = u.size
    root = math.sqrt(n)
    # all (i, col) pairs for one coordinate
    i1 = np.repeat(np.arange(1, n + 1), halfwidth + 1)
    c1 = np.tile(np.arange(halfwidth + 1), n)
    x1 = -halfwidth + 2 * c1 + ((i1 + halfwidth) % 2)
    valid1 = x1 <= halfwidth
    i1, c1, x1 = i1[valid1], c1[valid1], x1[valid1]
    # quadrature nodes inside one rectangle per coordinate
    tq = ((i1[:, None, None] - 1) + u[None, :, None]) / n  # (cells, q, 1)
    xq = ((x1[:, None, None] - 1) + 2 * u[None, None, :]) / root
    tq = np.broadcast_to(tq, (i1.size, order, order)).reshape(i1.size, -1)
    xq = np.broadcast_to(xq, (i1.size, order, order)).reshape(i1.size, -1)
    wq = np.outer(wt, wt).ravel()
    values = np.zeros(shape)
    mask = _distinct_mask(k, n)
    if k == 1:
        vals = g(tq[..., None], xq[..., None])
        avg = np.asarray(vals).reshape(i1.size, -1) @ wq
        values[i1 - 1, c1] = avg
        return KernelGrid(k, n, halfwidth, values)
    if k > 2:
        raise ValueError("rect_average supports k <= 2")
    m = i1.size
    qq = wq.size
    for a in range(m):
        ta = np.broadcast_to(tq[a][None, :, None], (m, qq, qq))
        xa = np.broadcast_to(xq[a][None, :, None], (m, qq, qq))
        tb = np.broadcast_to(tq[:, None, :], (m, qq, qq))
        xb = np.broadcast_to(xq[:, None, :], (m, qq, qq))
        t = np.stack([ta, tb], axis=-1)
        x = np.stack([xa, xb], axis=-1)
        vals = np.asarray(g(t, x)).reshape(m, qq, qq)
        values[i1[a] - 1, i1 - 1, c1[a], c1] = np.einsum("mpq,p,q->m", vals, wq, wq)
    values *= mask.reshape(mask.shape + (1,) * k)
    return KernelGrid(k, n, halfwidth, values)


def grid_from_cells(k: int, n: int, halfwidth: int, cells: dict) -> KernelGrid:
    """Grid with explicit averages ``{(times, sites): value}``."""
    _check_size(k, n, halfwidth)
    values = np.zeros((n,) * k + (halfwidth + 1,) * k)
    for (ii, xs), v in cells.items():
        if len(set(ii)) != k:
            continue
        if any((i + x) % 2 for i, x in zip(ii, xs)):
            raise ValueError(f"cell {ii}, {xs} is parity-invalid")
        idx = tuple(i - 1 for i in ii) + tuple((x + halfwidth) // 2 for x in xs)
        values[idx] = v
    return KernelGrid(k, n, halfwidth, values)


def pkn_grid(k: int, n: int) -> KernelGrid:
    """The walk kernel p_k^n, already constant on rectangles: 2^-k p_k(i, x) on D_k^n."""
    cells = {}
    for ii in itertools.combinations(range(1, n + 1), k):
        ranges = []
        for i in ii:
            ranges.append(range(-i, i + 1, 2))
        for xs in itertools.product(*ranges):
            v = 0.5**k
            pi, px = 0, 0
            for i, x in zip(ii, xs):
                v *= rw_pmf(i - pi, x - px)
                pi, px = i, x
            if v:
                cells[(ii, xs)] = v
    return grid_from_cells(k, n, n, cells)


def _env_table(env: EnvField, n: int, halfwidth: int) -> np.ndarray:
    if env.n < n or env.halfwidth < halfwidth:
        raise ValueError("environment smaller than the kernel grid")
    om = np.zeros((n, halfwidth + 1))
    for i in range(1, n + 1):
        start = -halfwidth + ((i + halfwidth) % 2)
        r = env.row(i, start, start + 2 * ((halfwidth - start) // 2))
        om[i - 1, : r.size] = r
    return om


def u_stat(grid: KernelGrid, env: EnvField, ordered: bool = False) -> float:
    """S_k^n(g) for the averaged kernel in ``grid``; ``ordered`` multiplies by k!."""
    _check_size(grid.k, grid.n, grid.halfwidth)
    if grid.k > grid.n:
        return 0.0
    om = _env_table(env, grid.n, grid.halfwidth)
    k = grid.k
    acc = grid.values
    # contract one (time, column) pair at a time: the last time axis pairs with the last column axis
    for j in range(k - 1, -1, -1):
        acc = np.moveaxis(acc, j, -2)  # time_j next to column_j at the end
        acc = np.tensordot(acc, om, axes=([-2, -1], [0, 1]))
    val = 2.0 ** (k / 2) * float(acc)
    return val * math.factorial(k) if ordered else val


def u_stat_product(grids: list[KernelGrid], env: EnvField) -> float:
    """S_k^n of a product kernel whose factors have disjoint time supports."""
    spans = []
    for g in grids:
        if g.k != 1:
            raise ValueError("factors must be order-1 grids")
        t = np.nonzero(np.any(g.values != 0, axis=1))[0]
        spans.append(set(t.tolist()))
    for a, b in itertools.combinations(spans, 2):
        if a & b:
            raise ValueError("factor time supports overlap; use u_stat on the full grid")
    return float(np.prod([u_stat(g, env) for g in grids]))


# ---------------------------------------------------------------------------
# layered chaos expansion


@dataclass
class ChaosLayers:
    """Coefficients T_0..T_K of beta^k in the product-form partition function."""

    orders: np.ndarray
    n: int
    target: tuple
    beta_applied: float | None = None

    @property
    def K(self) -> int:
        return self.orders.size - 1

    def total(self, beta: float | None = None) -> float:
        """sum_k beta^k T_k (Horner); defaults to ``beta_applied``."""
        b = self.beta_applied if beta is None else beta
        if b is None:
            raise ValueError("no beta given")
        acc = 0.0
        for t in self.orders[::-1]:
            acc = acc * b + t
        return float(acc)

    def s_terms(self) -> np.ndarray:
        """S_k^n(p_k^n) = 2^(-k/2) T_k."""
        return self.orders * 2.0 ** (-0.5 * np.arange(self.orders.size))

    def to_csv(self, dest=None) -> str | None:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["order", "value"])
        for k, v in enumerate(self.orders):
            w.writerow([k, repr(float(v))])
        text = buf.getvalue()
        if dest is None:
            return text
        with open(dest, "w", newline="") as fh:
            fh.write(text)
        return None


def _parse_target(target, n: int):
    if target == "point_to_line" or target == ("point_to_line",):
        return ("point_to_line",), 0, 0, n, None
    kind = target[0]
    if kind == "point_to_point":
        return ("point_to_point", int(target[1])), 0, 0, n, int(target[1])
    if kind == "four_param":
        _, m, y, k, x = target
        return ("four_param", int(m), int(y), int(k), x), int(m), int(y), int(k), x
    raise ValueError(f"unknown target {target!r}")


def chaos_layers(env: EnvField, n: int, target="point_to_line", K: int | None = None, beta: float | None = None) -> ChaosLayers:
    """Layered DP for the chaos coefficients of Z(m, y; k, x or *).

    U_k(j+1, y) = avg U_k(j, y+-1) + omega(j+1, y) avg U_{k-1}(j, y+-1)
    with U_0 the walk law from the origin.
    """
    tgt, m, y0, k_end, x = _parse_target(target, n)
    steps = k_end - m
    K = steps if K is None else K
    if K > n:
        raise ValueError(f"K = {K} exceeds n = {n}")
    if k_end > env.n or abs(y0) + steps > env.halfwidth:
        raise ValueError("environment too small for the target")
    if (m + y0) % 2:
        raise ValueError("origin is parity-invalid")
    U = np.zeros((K + 1, 1))
    U[0, 0] = 1.0
    for d in range(1, steps + 1):
        avg = np.zeros((K + 1, d + 1))
        avg[:, :-1] += U
        avg[:, 1:] += U
        avg *= 0.5
        om = env.row(m + d, y0 - d, y0 + d)
        new = avg.copy()
        new[1:] += om * avg[:-1]
        U = new
    if x is None or x == "*":
        T = U.sum(axis=1)
    else:
        if abs(x - y0) > steps or (x - y0 - steps) % 2:
            T = np.zeros(K + 1)
        else:
            T = U[:, (x - y0 + steps) // 2].copy()
    return ChaosLayers(T, n, tgt, beta)


def chaos_tail_mass(K: int, beta: float, n: int | None = None) -> float:
    """Variance carried by chaos orders above K.

    Continuum: sum_{k>K} 2^k beta^(2k) ||rho_k||^2.  With ``n`` given, the
    same sum with the exact norms of n^(k/2) p_k^n (orders K < k <= n).
    """
    if n is not None:
        a = pkn_norm_sq_all(n, n)
        ks = np.arange(K + 1, n + 1)
        return float(np.sum(2.0**ks * beta ** (2 * ks) * a[K + 1 :]))
    b2 = beta * beta
    total = 0.0
    k = K + 1
    while True:
        term = 2.0**k * b2**k * fock_norm(k)
        total += term
        if term < 1e-17 * max(total, 1e-300) and k > 2 * b2 * b2 + 2:
            break
        if term == 0.0:
            break
        k += 1
    return total


# ---------------------------------------------------------------------------
# fused first-order samples


@numba.njit(cache=True)
def _first_order_batch(seeds, kind, loc, scale, tb, tl, n, out):
    p = np.zeros(n + 1)
    om = np.empty(n + 1)
    for r in range(seeds.size):
        key = _key(seeds[r])
        p[0] = 1.0
        acc = 0.0
        for t in range(1, n + 1):
            p[t] = 0.5 * p[t - 1]
            for j in range(t - 1, 0, -1):
                p[j] = 0.5 * (p[j] + p[j - 1])
            p[0] = 0.5 * p[0]
            row_values(key, kind, loc, scale, tb, tl, t, -t, t + 1, om)
            for j in range(t + 1):
                acc += p[j] * om[j]
        out[r] = acc


def first_order_samples(spec: EnvSpec, n: int, seeds) -> np.ndarray:
    """T_1 = sum_{i <= n, x} p(i, x) omega(i, x) for independent environments."""
    seeds = np.asarray([int(s) & 0xFFFFFFFFFFFFFFFF for s in seeds], dtype=np.uint64)
    out = np.empty(seeds.size)
    _, loc, scale, tb, tl = spec._kernel_args()
    _first_order_batch(seeds, spec.code, loc, scale, tb, tl, n, out)
    return out


def first_order_variance(n: int, beta: float = 1.0) -> float:
    """Exact Var of the linear term beta n^(-1/4) T_1: beta^2 n^(-1/2) sum_{i<=n} p(2i, 0)."""
    q = 1.0
    s = 0.0
    for a in range(1, n + 1):
        q *= (2 * a - 1) / (2 * a)
        s += q
    return beta * beta * s / math.sqrt(n)


# ---------------------------------------------------------------------------
# exhaustive enumeration oracle


def _rational_grid_values(n: int, width: int):
    """Deterministic rational kernels: order 1 on all cells, order 2 on the simplex and in full."""
    cells1 = [(i, x) for i in range(1, n + 1) for x in range(-width, width + 1) if (i + x) % 2 == 0]
    g1 = {c: Fraction(c[0] + 2 * c[1] + 3, 7) for c in cells1}
    g2 = {}
    g2_full = {}
    for (a, b) in itertools.product(cells1, repeat=2):
        if a[0] == b[0]:
            continue
        v = Fraction(a[0] * 3 + a[1] - 2 * b[1] + 1, 5)
        g2_full[(a, b)] = v
        if a[0] < b[0]:
            g2[(a, b)] = v
    return cells1, g1, g2, g2_full


def _fr(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def enumerate_oracle(n: int = 2, width: int = 2) -> dict:
    """Exact moments of S_1, S_2 over every Rademacher environment on the window.

    Moments are stated for the rational part: S_k = 2^(k/2) R_k, so
    E[S_k] = 2^(k/2) E[R_k], E[S_1 S_2] = 2^(3/2) E[R_1 R_2] and
    E[S_k^2] = 2^k E[R_k^2] (rational).  The bound is n^(3k/2) ||gbar_n||^2
    = 2^k sum gbar^2.  ``g2`` is supported on the simplex i_1 < i_2;
    ``g2_full`` on all distinct pairs, where the bound fails by up to k!.
    """
    if n * (2 * width + 1) > 40:
        raise ValueError("window too large for exhaustive enumeration")
    cells, g1, g2, g2_full = _rational_grid_values(n, width)
    idx = {c: j for j, c in enumerate(cells)}
    N = len(cells)
    sums = {k: Fraction(0) for k in ("R1", "R2", "R2f", "R1R2", "R1R2f", "R1sq", "R2sq", "R2fsq")}
    count = 0
    for signs in itertools.product((-1, 1), repeat=N):
        r1 = sum((g1[c] * signs[idx[c]] for c in cells), Fraction(0))
        r2 = sum((v * signs[idx[a]] * signs[idx[b]] for (a, b), v in g2.items()), Fraction(0))
        r2f = sum((v * signs[idx[a]] * signs[idx[b]] for (a, b), v in g2_full.items()), Fraction(0))
        sums["R1"] += r1
        sums["R2"] += r2
        sums["R2f"] += r2f
        sums["R1R2"] += r1 * r2
        sums["R1R2f"] += r1 * r2f
        sums["R1sq"] += r1 * r1
        sums["R2sq"] += r2 * r2
        sums["R2fsq"] += r2f * r2f
        count += 1
    E = {k: v / count for k, v in sums.items()}
    b1 = 2 * sum((v * v for v in g1.values()), Fraction(0))
    b2 = 4 * sum((v * v for v in g2.values()), Fraction(0))
    b2f = 4 * sum((v * v for v in g2_full.values()), Fraction(0))
    rows = [
        ("E[S_1]", E["R1"], None, math.sqrt(2)),
        ("E[S_2]", E["R2"], None, 2.0),
        ("E[S_2 full]", E["R2f"], None, 2.0),
        ("E[S_1 S_2]", E["R1R2"], None, 2.0**1.5),
        ("E[S_1 S_2 full]", E["R1R2f"], None, 2.0**1.5),
        ("E[S_1^2]", 2 * E["R1sq"], b1, 1.0),
        ("E[S_2^2]", 4 * E["R2sq"], b2, 1.0),
        ("E[S_2^2 full]", 4 * E["R2fsq"], b2f, 1.0),
    ]
    out = []
    for name, val, bound, factor in rows:
        rec = {"moment": name, "exact_value": float(val) * factor, "exact_rational": _fr(val)}
        if factor != 1.0:
            rec["rational_scale"] = {math.sqrt(2): "2^(1/2)", 2.0: "2", 2.0**1.5: "2^(3/2)"}[factor]
        rec["bound"] = None if bound is None else float(bound)
        if bound is not None:
            rec["bound_rational"] = _fr(bound)
            rec["within_bound"] = val <= bound
        out.append(rec)
    return {"n": n, "width": width, "cells": N, "environments": count, "moments": out}


def enumerate_oracle_json(n: int = 2, width: int = 2) -> str:
    return json.dumps(enumerate_oracle(n, width), indent=2)
