"""Independent pseudo-Riemannian tensor calculus used as a cross-check.

Conventions: R(X,Y)Z = [nabla_X, nabla_Y]Z - nabla_[X,Y] Z with
R(d_k, d_l) d_j = R^i_{jkl} d_i, Ricci R_jl = R^i_{jil}.  Jacobi fields along
an affine geodesic with velocity u satisfy xi'' = -R^i_{jkl} u^j xi^k u^l, so
the "tidal" operator is xi -> R^i_{jkl} u^j xi^k u^l.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import exprdsl, jets
from .errors import (BranchAmbiguity, ConfigError, DegenerateMetric, FrameDegeneracy,
                     NoRealRoot, PreconditionError)
from .geometry import CausalStructure, CPoint, inertia_of, normalize_sff
from .integrate import Solution, dopri5
from .jets import Jet

Component = Callable[[Sequence], "float | Jet"]


@dataclass(frozen=True)
class Metric:
    """Symmetric matrix of component functions g_ij(x) on an N-dim chart."""

    dim: int
    components: tuple[tuple[Component | None, ...], ...] = field(compare=False)
    signature: tuple[int, int]
    name: str = ""
    exprs: Mapping[tuple[int, int], exprdsl.Ast] | None = field(default=None, compare=False)

    @classmethod
    def from_exprs(cls, entries: Mapping[tuple[int, int], "str | exprdsl.Ast"], dim: int,
                   signature: tuple[int, int], constants: Mapping[str, float] | None = None,
                   name: str = "") -> "Metric":
        constants = dict(constants or {})
        names = [f"x{i}" for i in range(dim)]
        allowed = frozenset(names) | frozenset(constants)
        comps: list[list[Component | None]] = [[None] * dim for _ in range(dim)]
        asts = {}
        for (i, j), e in entries.items():
            if not (0 <= i < dim and 0 <= j < dim):
                raise ConfigError(f"metric index ({i},{j}) out of range for dim {dim}")
            i, j = min(i, j), max(i, j)
            ast = exprdsl.parse(e, allowed) if isinstance(e, str) else e
            bad = exprdsl.variables(ast) - allowed
            if bad:
                raise ConfigError(f"metric entry g{i}{j} uses unknown identifiers {sorted(bad)}")
            asts[(i, j)] = ast

            def comp(xs, _ast=ast):
                env = dict(constants)
                env.update(zip(names, xs))
                return exprdsl.evaluate(_ast, env)

            comps[i][j] = comps[j][i] = comp
        return cls(dim, tuple(tuple(r) for r in comps), tuple(signature), name, asts)

    def at(self, x: Sequence[float]) -> np.ndarray:
        xs = [float(v) for v in x]
        g = np.zeros((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                c = self.components[i][j]
                if c is not None:
                    g[i, j] = g[j, i] = jets.value_of(c(xs))
        return g

    def derivs(self, x: Sequence[float], order: int = 2):
        """g, dg[k,i,j] = d_k g_ij and (order 2) ddg[k,l,i,j]."""
        N = self.dim
        xs = jets.seed_point([float(v) for v in x], order)
        g = np.zeros((N, N))
        dg = np.zeros((N, N, N))
        ddg = np.zeros((N, N, N, N)) if order >= 2 else None
        for i in range(N):
            for j in range(i, N):
                c = self.components[i][j]
                if c is None:
                    continue
                v = c(xs)
                if not isinstance(v, Jet):
                    g[i, j] = g[j, i] = float(v)
                    continue
                g[i, j] = g[j, i] = v.value
                dg[:, i, j] = dg[:, j, i] = v.gradient()
                if order >= 2:
                    hh = v.hessian()
                    ddg[:, :, i, j] = ddg[:, :, j, i] = hh
        return g, dg, ddg


def _inverse(g: np.ndarray) -> np.ndarray:
    scale = np.linalg.norm(g, 2)
    w = np.linalg.eigvalsh(g)
    if scale == 0.0 or np.min(np.abs(w)) < 1e-12 * scale:
        raise DegenerateMetric("metric is singular at the queried point")
    return np.linalg.inv(g)


def christoffel(m: Metric, x: Sequence[float]) -> np.ndarray:
    """Gamma^k_ij at x (first derivatives only)."""
    g, dg, _ = m.derivs(x, order=1)
    ginv = _inverse(g)
    g1 = 0.5 * (np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - dg)
    return np.einsum("kl,lij->kij", ginv, g1)


@dataclass(frozen=True)
class CurvatureAtPoint:
    gamma: np.ndarray    # Gamma^k_ij
    riemann: np.ndarray  # R^i_jkl
    ricci: np.ndarray
    scalar: float
    weyl: np.ndarray     # C^i_jkl
    schouten: np.ndarray
    g: np.ndarray
    ginv: np.ndarray

    @property
    def riemann_lowered(self) -> np.ndarray:
        return np.einsum("im,mjkl->ijkl", self.g, self.riemann)


def curvature(m: Metric, x: Sequence[float]) -> CurvatureAtPoint:
    N = m.dim
    if N < 4:
        raise PreconditionError("the Weyl/Schouten split is implemented for dim >= 4")
    g, dg, ddg = m.derivs(x, order=2)
    ginv = _inverse(g)
    # Christoffel symbols of the first kind and their derivatives
    g1 = 0.5 * (np.einsum("ilj->lij", dg) + np.einsum("jli->lij", dg) - dg)
    dg1 = 0.5 * (np.einsum("milj->mlij", ddg) + np.einsum("mjli->mlij", ddg) - ddg)
    gam = np.einsum("kl,lij->kij", ginv, g1)
    dginv = -np.einsum("ka,mab,bl->mkl", ginv, dg, ginv)
    dgam = np.einsum("mkl,lij->mkij", dginv, g1) + np.einsum("kl,mlij->mkij", ginv, dg1)
    riem = (np.einsum("kilj->ijkl", dgam) - np.einsum("likj->ijkl", dgam)
            + np.einsum("ikm,mlj->ijkl", gam, gam) - np.einsum("ilm,mkj->ijkl", gam, gam))
    ric = np.einsum("ijil->jl", riem)
    scal = float(np.einsum("jl,jl->", ginv, ric))
    sch = (ric - scal / (2 * (N - 1)) * g) / (N - 2)
    low = np.einsum("im,mjkl->ijkl", g, riem)
    kn = (np.einsum("ik,jl->ijkl", g, sch) - np.einsum("il,jk->ijkl", g, sch)
          + np.einsum("jl,ik->ijkl", g, sch) - np.einsum("jk,il->ijkl", g, sch))
    weyl = np.einsum("im,mjkl->ijkl", ginv, low - kn)
    return CurvatureAtPoint(gam, riem, ric, scal, weyl, sch, g, ginv)


def symmetry_residuals(c: CurvatureAtPoint) -> dict[str, float]:
    """Relative residuals of the algebraic Riemann identities and Weyl traces."""
    low = c.riemann_lowered
    scale = max(1.0, float(np.max(np.abs(low))))
    wlow = np.einsum("im,mjkl->ijkl", c.g, c.weyl)
    wscale = max(1.0, float(np.max(np.abs(wlow))))
    bianchi = low + np.einsum("iklj->ijkl", low) + np.einsum("iljk->ijkl", low)
    ric_from = np.einsum("ijil->jl", c.riemann)
    return {
        "antisym_kl": float(np.max(np.abs(low + np.einsum("ijlk->ijkl", low)))) / scale,
        "antisym_ij": float(np.max(np.abs(low + np.einsum("jikl->ijkl", low)))) / scale,
        "pair_sym": float(np.max(np.abs(low - np.einsum("klij->ijkl", low)))) / scale,
        "bianchi1": float(np.max(np.abs(bianchi))) / scale,
        "ricci_sym": float(np.max(np.abs(c.ricci - c.ricci.T))) / scale,
        "ricci_trace": float(np.max(np.abs(ric_from - c.ricci))) / scale,
        "weyl_trace": float(np.max(np.abs(np.einsum("ijil->jl", c.weyl)))) / wscale,
        "weyl_trace_13": float(np.max(np.abs(np.einsum("ik,ijkl->jl", c.ginv, wlow)))) / wscale,
    }


# geodesics -------------------------------------------------------------------

@dataclass
class OracleGeodesic:
    metric: Metric = field(repr=False)
    sol: Solution = field(repr=False)
    frame_size: int = 0

    @property
    def s(self) -> np.ndarray:
        return self.sol.grid_t

    def split(self, Y: np.ndarray):
        N = self.metric.dim
        x, u = Y[:N], Y[N:2 * N]
        e = Y[2 * N:].reshape(N, self.frame_size) if self.frame_size else None
        return x, u, e

    def state(self, s: float):
        return self.split(self.sol(s))

    @property
    def x(self) -> np.ndarray:
        return self.sol.grid_y[:, :self.metric.dim]

    @property
    def u(self) -> np.ndarray:
        N = self.metric.dim
        return self.sol.grid_y[:, N:2 * N]

    def null_norm(self) -> np.ndarray:
        return np.array([float(u @ self.metric.at(x) @ u) for x, u in zip(self.x, self.u)])


def null_geodesic(m: Metric, x0: Sequence[float], v0: Sequence[float],
                  t_span: tuple[float, float], tol: float = 1e-10,
                  frame: np.ndarray | None = None, samples: int = 101) -> OracleGeodesic:
    """Affine geodesic x'' = -Gamma(x', x'), optionally transporting a frame (N x k)."""
    N = m.dim
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g0 = m.at(x0)
    nn = float(v0 @ g0 @ v0)
    if abs(nn) >= 1e-10 * max(1.0, float(np.linalg.norm(g0)) * float(v0 @ v0)):
        raise PreconditionError(f"initial velocity is not null: g(v,v) = {nn:.3e}")
    k = 0 if frame is None else np.asarray(frame).shape[1]
    Y0 = np.concatenate([x0, v0, np.zeros(0) if frame is None else np.asarray(frame, float).ravel()])

    def rhs(s, Y):
        x, u = Y[:N], Y[N:2 * N]
        gam = christoffel(m, x)
        out = np.empty_like(Y)
        out[:N] = u
        out[N:2 * N] = -np.einsum("kij,i,j->k", gam, u, u)
        if k:
            e = Y[2 * N:].reshape(N, k)
            out[2 * N:] = (-np.einsum("kij,i,jb->kb", gam, u, e)).ravel()
        return out

    grid = np.linspace(t_span[0], t_span[1], samples)
    sol = dopri5(rhs, grid[0], Y0, grid[-1], rtol=tol, atol=1e-13, grid=grid)
    return OracleGeodesic(m, sol, k)


def screen_frame(m: Metric, x: Sequence[float], u: Sequence[float]) -> np.ndarray:
    """Default screen frame: e_b = d_b + c_b d_0 orthogonal to u, then g-orthonormalized."""
    N = m.dim
    g = m.at(x)
    u = np.asarray(u, dtype=float)
    gu = g @ u
    if abs(gu[0]) < 1e-12 * max(1.0, float(np.linalg.norm(gu))):
        raise FrameDegeneracy("g(d_0, u) vanishes; screen chart fails")
    E = np.zeros((N, N - 2))
    for b in range(1, N - 1):
        E[b, b - 1] = 1.0
        E[0, b - 1] = -gu[b] / gu[0]
    G = E.T @ g @ E
    inertia = inertia_of(G)
    # orthonormalize against -g so the screen metric reads eps
    T = normalize_sff(-G, (inertia[1], inertia[0]))
    return E @ T


def tidal_matrix(c: CurvatureAtPoint, u: np.ndarray, E: np.ndarray) -> np.ndarray:
    """R^a_b = G^{ac} g(e_c, Rm(e_b, u) u) in the frame E (columns)."""
    tid = np.einsum("ijkl,j,kb,l->ib", c.riemann, u, E, u)
    G = E.T @ c.g @ E
    return np.linalg.solve(G, E.T @ c.g @ tid)


@dataclass
class DeviationSeries:
    s: np.ndarray
    tidal: np.ndarray
    geodesic: OracleGeodesic = field(repr=False)

    @property
    def trace(self) -> np.ndarray:
        return np.trace(self.tidal, axis1=1, axis2=2)

    @property
    def tracefree(self) -> np.ndarray:
        m = self.tidal.shape[1]
        return self.tidal - (self.trace / m)[:, None, None] * np.eye(m)

    def at(self, s: float) -> np.ndarray:
        x, u, e = self.geodesic.state(s)
        return tidal_matrix(curvature(self.geodesic.metric, x), u, e)


def geodesic_deviation(m: Metric, geo: OracleGeodesic | None = None, *,
                       x0: Sequence[float] | None = None, v0: Sequence[float] | None = None,
                       t_span: tuple[float, float] = (0.0, 1.0), tol: float = 1e-10,
                       screen: np.ndarray | None = None, samples: int = 101) -> DeviationSeries:
    """Tidal matrices in a parallel-transported screen frame along a null geodesic."""
    if geo is None or geo.frame_size == 0:
        if geo is not None:
            x0, v0 = geo.x[0], geo.u[0]
            t_span = (geo.s[0], geo.s[-1])
            samples = len(geo.s)
        if x0 is None or v0 is None:
            raise PreconditionError("need a geodesic or initial data")
        E0 = screen_frame(m, x0, v0) if screen is None else np.asarray(screen, float)
        geo = null_geodesic(m, x0, v0, t_span, tol, frame=E0, samples=samples)
    tid = []
    for Y in geo.sol.grid_y:
        x, u, e = geo.split(Y)
        tid.append(tidal_matrix(curvature(m, x), u, e))
    return DeviationSeries(geo.s, np.array(tid), geo)


# graph form of the null cone -------------------------------------------------------

def graph_from_metric(m: Metric, signature: tuple[int, int] | None = None,
                      base_point: CPoint | None = None, name: str = "") -> CausalStructure:
    """Solve g(y, y) = 0 with y = (y^0, y^1.., 1) for the small root y^0."""
    N = m.dim
    n = N - 1
    comps = m.components

    def comp(i, j, xs):
        c = comps[i][j]
        return 0.0 if c is None else c(xs)

    def defining(xs, ys):
        a = comp(0, 0, xs)
        b = comp(0, n, xs)
        for k in range(1, n):
            g0k = comps[0][k]
            if g0k is not None:
                b = b + g0k(xs) * ys[k - 1]
        b = 2.0 * b
        c = comp(n, n, xs)
        for k in range(1, n):
            gkn = comps[k][n]
            if gkn is not None:
                c = c + 2.0 * gkn(xs) * ys[k - 1]
            for l in range(1, n):
                gkl = comps[k][l]
                if gkl is not None:
                    c = c + gkl(xs) * ys[k - 1] * ys[l - 1]
        disc = b * b - 4.0 * a * c
        dv = jets.value_of(disc)
        bv = jets.value_of(b)
        if dv < 0:
            raise NoRealRoot(f"null cone has no real point over this fiber value (disc = {dv:.3e})")
        if dv < 1e-12 or bv == 0.0:
            raise BranchAmbiguity(f"null-cone roots coalesce (disc = {dv:.3e})")
        root = jets.sqrt(disc)
        denom = b + root if bv > 0 else b - root
        return -2.0 * c / denom

    if signature is None:
        bp = base_point or CPoint((0.0,) * N, (0.0,) * (n - 1))
        probe = CausalStructure(n, (n - 1, 0), defining, name)
        H = probe.fiber_jet(bp, 2).hessian()
        signature = inertia_of(H)
    return CausalStructure(n, tuple(signature), defining, name or f"graph({m.name})")


def launch_velocity(S: CausalStructure, p: CPoint) -> np.ndarray:
    """Base velocity (F, y, 1) of the characteristic direction at p."""
    return np.array((S.F(p),) + p.y + (1.0,))


def shadow_frame_vectors(S: CausalStructure, p: CPoint, P0: np.ndarray) -> np.ndarray:
    """Tangent vectors sum_a P0[a,b] (d_a + F_a d_0), b = 1..n-1 (columns)."""
    n = S.n
    Fy = S.fiber_jet(p, 1).gradient()
    E = np.zeros((n + 1, n - 1))
    E[1:n, :] = P0
    E[0, :] = Fy @ P0
    return E


def reparametrize_by_xn(geo: OracleGeodesic, t_values: Sequence[float], n: int) -> np.ndarray:
    """Affine parameters s with x^n(s) - x^n(s0) = t (point-set matching)."""
    x_n0 = geo.x[0, n]
    xs_n = geo.x[:, n] - x_n0
    out = []
    for t in t_values:
        if t == 0:
            out.append(geo.s[0])
            continue
        i = int(np.searchsorted(xs_n, t))
        i = min(max(i, 1), len(xs_n) - 1)
        lo, hi = geo.s[i - 1], geo.s[i]
        f = lambda s: geo.sol(s)[n] - x_n0 - t
        if f(lo) * f(hi) > 0:
            raise ValueError(f"x^n = {t} not bracketed along the oracle geodesic")
        out.append(brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    return np.array(out)


# cross-validation against the characteristic flow -------------------------------

@dataclass
class CrossCheck:
    t: np.ndarray
    s: np.ndarray
    projection_error: float      # max coordinate distance after matching x^n
    tidal_error: float           # max ||wsf_flow - tf(oracle)|| / tidal scale
    eigen_error: float           # same, on sorted eigenvalues
    compared: int                # samples outside the base-point window
    run: object = field(repr=False, default=None)
    deviation: np.ndarray = field(repr=False, default=None)


def _sorted_eigs(M: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvals(M)
    return w[np.lexsort((w.imag, w.real))]


def cross_validate(S: CausalStructure, m: Metric, p: CPoint, t_span=(0.0, 1.0), samples: int = 41,
                   tol: float = 1e-10, oracle_tol: float = 1e-11, exclude_steps: float = 10.0) -> CrossCheck:
    """Compare the characteristic flow of S with null geodesics of m launched at p.

    The oracle screen frame is chosen to coincide with the flow's eps-frame
    at the base point, the affine parameter is traded for x^n, and the
    oracle tidal matrix is rescaled by (ds/dt)^2.  Errors are measured
    relative to the norm of the full oracle tidal matrix, which stays
    meaningful when the trace-free part itself vanishes.
    """
    from .flow import run_geodesic

    run = run_geodesic(S, p, t_span, tol=tol, samples=samples, exclude_steps=exclude_steps)
    if run.error is not None:
        raise run.error
    tr, sc = run.traj, run.scalars
    n = S.n
    v = launch_velocity(S, p)
    E = shadow_frame_vectors(S, p, run.jacobi.P0)
    span = t_span[1] - t_span[0]
    s_end = 2.0 * span
    for _ in range(8):
        geo = null_geodesic(m, p.x, v, (0.0, s_end), oracle_tol, frame=E, samples=samples)
        if geo.x[-1, n] - geo.x[0, n] >= span:
            break
        s_end *= 2.0
    s = reparametrize_by_xn(geo, tr.t - tr.t[0], n)
    proj = 0.0
    terr = eerr = 0.0
    compared = 0
    dev = np.full((len(s), n - 1, n - 1), np.nan)
    for i, si in enumerate(s):
        x, u, e = geo.state(si)
        proj = max(proj, float(np.max(np.abs(x - tr.x[i]))))
        if sc.in_window[i] or not np.all(np.isfinite(sc.wsf[i])):
            continue
        To = tidal_matrix(curvature(m, x), u, e) / (u[n] * u[n])
        dev[i] = To
        tf = To - np.trace(To) / (n - 1) * np.eye(n - 1)
        scale = float(np.linalg.norm(To)) or 1.0
        terr = max(terr, float(np.linalg.norm(sc.wsf[i] - tf)) / scale)
        eerr = max(eerr, float(np.max(np.abs(_sorted_eigs(sc.wsf[i]) - _sorted_eigs(tf)))) / scale)
        compared += 1
    return CrossCheck(tr.t, s, proj, terr, eerr, compared, run, dev)
