"""Crossover distributions G_beta, Tracy-Widom GUE and their limits.

The crossover density is

    f(r) = kappa^-1 det(I - K) <(I - K)^-1 Ai, Ai>   on L^2(a, inf), a = r / kappa,
    K(x, y) = P.V. int sigma(t) Ai(x + t) Ai(y + t) dt,  sigma(t) = 1 / (1 - exp(-kappa t)).

Writing K = Phi D Phi^T with Phi(x, t) = Ai(x + t) and D the (signed,
principal-value) t-quadrature weights, Sylvester's identity moves the
determinant to t-space, where Phi^T Phi over x in (a, inf) is the Airy
kernel K_Ai(a + t, a + t') in closed form.  Woodbury does the same for the
resolvent inner product.  So no truncation of the x-domain is needed; this
matters at small beta, where K(x, x) decays only like exp(-kappa x).

Principal value: t-panels are mirror images about t = 0, so the 1/(kappa t)
part of sigma is integrated as [h(t) - h(-t)] / (kappa t) on each mirrored
pair and the remainder sigma - 1/(kappa t) is smooth (value 1/2 at 0).

CDF orientation: G(s) = 1 - int f(u) exp(-e^(s - sh - u)) du with
sh = log(32 pi beta^4) / 2, i.e. A + 2 beta^4 / 3 = sh + U - Gumbel, with U of
(signed) density f.  This is the orientation that is nondecreasing in s.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.special import ndtr

from .airy import airy_unchecked

SC_FLAG = 1e-6
PV_NEAR = 0.5  # t-panel width for |t| < PV_BAND
PV_BAND = 2.0
T_FAR = 1.0  # t-panel width beyond the band
TAIL_REL = 1e-12  # |f| at the ends of r_grid, relative to max |f|


@dataclass(frozen=True)
class CrossoverParams:
    beta: float
    quad_order: int = 8  # Gauss nodes per t-panel
    domain_cap: float = 14.0  # L: Airy arguments a + t are cut at max(L, a + 1)
    t_trunc: float | None = None  # T: negative-t cutoff; default max(25, 30 / kappa)
    r_grid: tuple[float, float] | None = None  # u-interval carrying f; default automatic
    r_panel: float | None = None  # u-panel width; default from beta
    r_nodes: int = 8  # Gauss nodes per u-panel

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.quad_order < 2 or self.r_nodes < 2:
            raise ValueError("quadrature orders must be >= 2")
        if self.r_grid is not None and not self.r_grid[0] < self.r_grid[1]:
            raise ValueError("r_grid must be an increasing pair")

    @property
    def kappa(self) -> float:
        return 2.0 * self.beta ** (4.0 / 3.0)

    @property
    def T(self) -> float:
        return self.t_trunc if self.t_trunc is not None else max(25.0, 30.0 / self.kappa)

    @property
    def shift(self) -> float:
        return 0.5 * math.log(32.0 * math.pi * self.beta**4)

    @property
    def panel(self) -> float:
        if self.r_panel is not None:
            return self.r_panel
        # f oscillates on a scale ~ beta^2 with amplitude ~ exp(0.35 / beta^2);
        # below beta = 1/4 the cancellation in int f needs proportionally finer panels
        return max(0.5 * self.kappa, min(14.0 * self.beta**2, 2.0) * min(1.0, 4.0 * self.beta))

    def doubled(self, which: str) -> "CrossoverParams":
        if which == "m":
            return replace(self, quad_order=2 * self.quad_order)
        if which == "T":
            return replace(self, t_trunc=2.0 * self.T)
        if which == "L":
            return replace(self, domain_cap=2.0 * self.domain_cap)
        if which == "r":
            return replace(self, r_panel=0.5 * self.panel)
        raise ValueError(which)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(kappa=self.kappa, T=self.T, shift=self.shift, panel=self.panel)
        if d["r_grid"] is not None:
            d["r_grid"] = list(d["r_grid"])
        return d


@dataclass(frozen=True)
class FredholmResult:
    value: float
    self_convergence: float  # |value - value under refinement|
    params: dict
    flagged: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# kernels


def airy_kernel(u, v) -> np.ndarray:
    """K_Ai(u_i, v_j) = int_0^inf Ai(u_i + z) Ai(v_j + z) dz."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    au, du = airy_unchecked(u)
    av, dv = airy_unchecked(v)
    d = u[:, None] - v[None, :]
    close = np.abs(d) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (au[:, None] * dv[None, :] - du[:, None] * av[None, :]) / d
    if close.any():
        diag = du**2 - u * au**2
        K = np.where(close, np.broadcast_to(diag[:, None], K.shape), K)
    return K


def sigma(t, kappa: float) -> np.ndarray:
    return -1.0 / np.expm1(-kappa * np.asarray(t, dtype=float))


def rho_smooth(t, kappa: float) -> np.ndarray:
    """sigma(t) - 1/(kappa t), continued through t = 0 with value 1/2."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    z = kappa * t
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    zs = z[~small]
    out[~small] = -1.0 / np.expm1(-zs) - 1.0 / zs
    zz = z[small]
    out[small] = 0.5 + zz / 12.0 - zz**3 / 720.0
    return out


def _t_nodes(lo: float, hi: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre on [lo, hi] with panels mirrored about t = 0."""
    reach = max(-lo, hi)
    edges = [0.0]
    while edges[-1] < reach - 1e-12:
        edges.append(edges[-1] + (PV_NEAR if edges[-1] < PV_BAND - 1e-12 else T_FAR))
    e = np.array(edges)
    pos = e[e <= hi + 1e-12]
    if pos[-1] < hi:
        pos = np.append(pos, hi)
    neg = -e[e <= -lo + 1e-12][::-1]
    if neg[0] > lo:
        neg = np.insert(neg, 0, lo)
    E = np.unique(np.concatenate([neg, pos]))
    g, w = np.polynomial.legendre.leggauss(m)
    mid = 0.5 * (E[:-1] + E[1:])
    hw = 0.5 * (E[1:] - E[:-1])
    return (mid[:, None] + hw[:, None] * g).ravel(), (hw[:, None] * w).ravel()


def _pdf_point(r: float, p: CrossoverParams) -> tuple[float, bool]:
    """f(r) and an ill-conditioning flag."""
    k = p.kappa
    a = r / k
    t, w = _t_nodes(-p.T, max(p.domain_cap - a, 1.0), p.quad_order)
    z = a + t
    Kt = airy_kernel(z, z)
    b = airy_kernel(z, [a])[:, 0]
    c = float(airy_kernel([a], [a])[0, 0])
    ws = w * sigma(t, k)
    M = np.eye(t.size) - Kt * ws[None, :]
    sign, logdet = np.linalg.slogdet(M)
    if sign == 0 or not np.isfinite(logdet):
        return float("nan"), True
    y = np.linalg.solve(M, b)
    resid = np.linalg.norm(M @ y - b) / max(np.linalg.norm(b), 1e-300)
    tr = c + (ws * b) @ y
    f = sign * math.exp(logdet) * tr / k
    return float(f), bool(resid > 1e-8 or not np.isfinite(f))


def pdf_values(u, params: CrossoverParams) -> tuple[np.ndarray, bool]:
    vals = [_pdf_point(float(x), params) for x in np.atleast_1d(u)]
    return np.array([v for v, _ in vals]), any(fl for _, fl in vals)


def crossover_pdf(r: float, params: CrossoverParams) -> FredholmResult:
    """f(r) with self-convergence under doubling of m, T and L."""
    f0, flag = _pdf_point(r, params)
    sc = max(abs(_pdf_point(r, params.doubled(w))[0] - f0) for w in ("m", "T", "L"))
    return FredholmResult(f0, float(sc), params.to_dict(), flag, "ill-conditioned solve" if flag else "")


def trace_paths(r: float, beta: float, m: int = 20, L: float = 12.0, T: float = 25.0) -> tuple[float, float]:
    """<(I-K)^-1 Ai, Ai> by one solve and tr((I-K)^-1 P) densely, x-space Nystrom."""
    k = 2.0 * beta ** (4.0 / 3.0)
    a = r / k
    g, gw = np.polynomial.legendre.leggauss(m)
    x = a + 0.5 * L * (g + 1.0)
    wx = 0.5 * L * gw
    t, wt = _t_nodes(-T, max(L + 2.0, 14.0 - a), 12)
    ai = airy_unchecked(x[:, None] + t[None, :])[0]
    K = (ai * (wt * sigma(t, k))) @ ai.T
    s = np.sqrt(wx)
    A = np.eye(m) - s[:, None] * K * s[None, :]
    v = s * airy_unchecked(x)[0]
    rank_one = float(v @ np.linalg.solve(A, v))
    dense = float(np.trace(np.linalg.solve(A, np.outer(v, v))))
    return rank_one, dense


# ---------------------------------------------------------------------------
# Tracy-Widom GUE


def _tw_det(s: float, m: int, L: float) -> float:
    hi = max(s, 0.0) + L
    g, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (hi + s) + 0.5 * (hi - s) * g
    sw = np.sqrt(0.5 * (hi - s) * w)
    K = airy_kernel(x, x)
    return float(np.linalg.det(np.eye(m) - sw[:, None] * K * sw[None, :]))


def tw_gue_cdf(s: float, m: int = 40, L: float = 12.0) -> FredholmResult:
    """F_GUE(s) = det(I - K_Ai) on L^2(s, inf), Gauss-Legendre on (s, max(s,0) + L)."""
    if not -8.0 <= s <= 4.0:
        raise ValueError("s must lie in [-8, 4]")
    v = _tw_det(s, m, L)
    sc = abs(v - _tw_det(s, 2 * m, L))
    return FredholmResult(v, sc, {"m": m, "L": L}, sc > SC_FLAG, "not self-converged" if sc > SC_FLAG else "")


# ---------------------------------------------------------------------------
# crossover CDF


def _tail_small(vals: np.ndarray, scale: float) -> bool:
    return bool(np.all(np.abs(vals) <= TAIL_REL * scale))


def auto_r_grid(params: CrossoverParams) -> tuple[float, float]:
    """Smallest u-interval (in steps of kappa) outside which |f| is negligible."""
    k = params.kappa
    step = max(k, params.panel)
    lo, hi = -2.0 * step, 2.0 * step
    f_lo = pdf_values([lo, lo - 0.5 * step], params)[0]
    f_hi = pdf_values([hi, hi + 0.5 * step], params)[0]
    scale = max(np.abs(f_lo).max(), np.abs(f_hi).max(), 1e-300)
    for _ in range(400):
        lo_ok = _tail_small(f_lo, scale)
        hi_ok = _tail_small(f_hi, scale)
        if lo_ok and hi_ok:
            return lo, hi
        if not lo_ok:
            lo -= step
            f_lo = pdf_values([lo, lo - 0.5 * step], params)[0]
            scale = max(scale, np.abs(f_lo).max())
        if not hi_ok:
            hi += step
            f_hi = pdf_values([hi, hi + 0.5 * step], params)[0]
            scale = max(scale, np.abs(f_hi).max())
    raise RuntimeError("could not bracket the support of f")


@dataclass
class CrossoverCDF:
    """f tabulated on composite Gauss nodes; G(s) by the Gumbel-weighted sum."""

    params: CrossoverParams
    u: np.ndarray
    w: np.ndarray
    f: np.ndarray
    flagged: bool

    @property
    def mass(self) -> float:
        return float(self.w @ self.f)

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        arg = s[:, None] - self.params.shift - self.u[None, :]
        with np.errstate(over="ignore"):
            g = np.exp(-np.exp(arg))
        return 1.0 - g @ (self.w * self.f)


def _u_nodes(lo: float, hi: float, panel: float, q: int) -> tuple[np.ndarray, np.ndarray]:
    nb = max(1, int(math.ceil((hi - lo) / panel - 1e-9)))
    e = np.linspace(lo, hi, nb + 1)
    g, w = np.polynomial.legendre.leggauss(q)
    mid = 0.5 * (e[:-1] + e[1:])
    hw = 0.5 * (e[1:] - e[:-1])
    return (mid[:, None] + hw[:, None] * g).ravel(), (hw[:, None] * w).ravel()


def build_cdf(params: CrossoverParams, r_grid: tuple[float, float] | None = None, validate: bool = True) -> CrossoverCDF:
    """Tabulate f on r_grid; rejects a grid whose ends carry non-negligible f."""
    grid = r_grid or params.r_grid
    if grid is None:
        grid = auto_r_grid(params)
    elif validate:
        ends = pdf_values([grid[0], grid[1]], params)[0]
        u, _ = _u_nodes(grid[0], grid[1], params.panel, 2)
        scale = max(np.abs(pdf_values(u, params)[0]).max(), 1e-300)
        if not _tail_small(ends, scale):
            need = auto_r_grid(params)
            raise ValueError(f"r_grid {tuple(grid)} too narrow; f is not negligible at its ends, need about {need}")
    u, w = _u_nodes(grid[0], grid[1], params.panel, params.r_nodes)
    f, flag = pdf_values(u, params)
    return CrossoverCDF(replace(params, r_grid=tuple(grid)), u, w, f, flag)


def crossover_cdf(s, params: CrossoverParams, refine=("m", "T", "L", "r"), stride: int = 1) -> list[FredholmResult]:
    """G_beta(s) for each s, each with its self-convergence figure.

    Each refinement doubles one of m, T, L or halves the u-panel.  With
    ``stride > 1`` the m/T/L refinements re-evaluate f only on every
    stride-th u-node and bound the change of G by stride * sum |df| w g(s, u);
    the u-panel refinement halves only every stride-th panel.  These are
    sampled estimates for cases where full refinement is too expensive.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    base = build_cdf(params)
    g0 = base(s)
    sc = np.zeros_like(g0)
    weight = np.exp(-np.exp(np.minimum(s[:, None] - base.params.shift - base.u[None, :], 700.0)))
    q = base.params.r_nodes
    for which in refine:
        alt_params = base.params.doubled(which)
        if stride <= 1:
            alt = build_cdf(alt_params, validate=False)
            sc = np.maximum(sc, np.abs(alt(s) - g0))
        elif which == "r":
            # halve every stride-th panel and compare its contribution to G
            est = np.zeros_like(g0)
            edges = np.linspace(*base.params.r_grid, base.u.size // q + 1)
            for j in range(0, edges.size - 1, stride):
                sl = slice(j * q, (j + 1) * q)
                u2, w2 = _u_nodes(edges[j], edges[j + 1], 0.5 * (edges[j + 1] - edges[j]), q)
                f2 = pdf_values(u2, alt_params)[0]
                g2 = np.exp(-np.exp(np.minimum(s[:, None] - base.params.shift - u2[None, :], 700.0)))
                est += np.abs(g2 @ (w2 * f2) - weight[:, sl] @ (base.w[sl] * base.f[sl]))
            sc = np.maximum(sc, stride * est)
        else:
            idx = np.arange(0, base.u.size, stride)
            df = np.abs(pdf_values(base.u[idx], alt_params)[0] - base.f[idx])
            sc = np.maximum(sc, stride * (weight[:, idx] @ (df * base.w[idx])))
    meta = base.params.to_dict()
    meta.update(mass=base.mass, refine=list(refine), stride=stride)
    note = "ill-conditioned solve" if base.flagged else ""
    return [FredholmResult(float(v), float(e), meta, base.flagged, note) for v, e in zip(g0, sc)]


def normal_cdf(s):
    return ndtr(s)


def gue_gap(beta_list, s_grid, refine=("m", "T", "L", "r"), stride: int = 1, **kw) -> list[dict]:
    """sup_s |G_beta(2^(4/3) beta^(4/3) s) - F_GUE(2^(1/3) s)| per beta."""
    s_grid = np.asarray(s_grid, dtype=float)
    tw = np.array([tw_gue_cdf(2.0 ** (1.0 / 3.0) * s).value for s in s_grid])
    out = []
    for beta in beta_list:
        p = CrossoverParams(beta, **kw)
        res = crossover_cdf(2.0 ** (4.0 / 3.0) * beta ** (4.0 / 3.0) * s_grid, p, refine, stride)
        g = np.array([r.value for r in res])
        sc = max(r.self_convergence for r in res)
        i = int(np.argmax(np.abs(g - tw)))
        out.append({"beta": beta, "gap": float(abs(g[i] - tw[i])), "s_at_gap": float(s_grid[i]), "self_convergence": sc, "mass": res[0].params["mass"], "flagged": res[0].flagged, "stride": res[0].params["stride"]})
    return out


def small_beta_check(beta_list, s_grid, refine=("m", "T", "L", "r"), stride=1, **kw) -> list[dict]:
    """sup_s |G_beta(2^(1/2) pi^(1/4) beta s) - Phi(s)| per beta."""
    if not any(b <= 0.5 for b in beta_list):
        raise ValueError("need at least one beta <= 0.5")
    s_grid = np.asarray(s_grid, dtype=float)
    ref = normal_cdf(s_grid)
    out = []
    for beta in beta_list:
        p = CrossoverParams(beta, **kw)
        st = stride(beta) if callable(stride) else stride
        res = crossover_cdf(math.sqrt(2.0) * math.pi**0.25 * beta * s_grid, p, refine, st)
        g = np.array([r.value for r in res])
        sc = max(r.self_convergence for r in res)
        i = int(np.argmax(np.abs(g - ref)))
        out.append({"beta": beta, "gap": float(abs(g[i] - ref[i])), "s_at_gap": float(s_grid[i]), "self_convergence": sc, "mass": res[0].params["mass"], "flagged": res[0].flagged, "stride": res[0].params["stride"]})
    return out
