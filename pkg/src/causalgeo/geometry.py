"""Pointwise geometry of a causal structure given in graph form.

A structure on an (n+1)-manifold is described in one affine chart of the
projectivized tangent bundle by ``y^0 = F(x^0..x^n; y^1..y^{n-1})`` with
``y^n = 1``.  Everything here is a pure function of the structure and a
point; derivatives of ``F`` come from jets.

Variable layout for jets over the whole cone bundle is
``z = (x^0, .., x^n, y^1, .., y^{n-1})`` (length 2n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from . import exprdsl, jets
from .errors import (ConfigError, DegeneratePivot, SignatureMismatch,
                     TangentiallyDegenerate, PreconditionError)
from .jets import Jet

DefiningFunction = Callable[[Sequence, Sequence], "float | Jet"]


@dataclass(frozen=True)
class CPoint:
    """Point of the cone bundle: base coordinates x and affine fiber coordinates y."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))

    @property
    def n(self) -> int:
        return len(self.x) - 1

    @property
    def z(self) -> np.ndarray:
        return np.array(self.x + self.y)

    @classmethod
    def from_z(cls, z: Sequence[float], n: int) -> "CPoint":
        z = list(z)
        return cls(tuple(z[:n + 1]), tuple(z[n + 1:]))


@dataclass(frozen=True)
class CausalStructure:
    """Dimension, fiber signature and defining function of a causal structure.

    ``defining(xs, ys)`` must work on floats and on jets; ``xs`` has n+1
    entries and ``ys`` has n-1.
    """

    n: int
    signature: tuple[int, int]
    defining: DefiningFunction = field(compare=False)
    name: str = ""
    expr: exprdsl.Ast | None = field(default=None, compare=False)
    x_independent: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError(f"dim M = n+1 must be at least 4, got n = {self.n}")
        p, q = self.signature
        if p < 0 or q < 0 or p + q != self.n - 1:
            raise ConfigError(f"signature {self.signature} inconsistent with n = {self.n}")
        object.__setattr__(self, "signature", (int(p), int(q)))

    @classmethod
    def from_expr(cls, expr: "str | exprdsl.Ast", n: int, signature: tuple[int, int],
                  constants: Mapping[str, float] | None = None, name: str = "") -> "CausalStructure":
        constants = dict(constants or {})
        if isinstance(expr, str):
            ast = exprdsl.parse_expr(expr, n, constants)
        else:
            ast = expr
            bad = exprdsl.variables(ast) - exprdsl.default_names(n, constants)
            if bad:
                raise ConfigError(f"identifiers {sorted(bad)} not valid for n = {n}")
        xnames = [f"x{i}" for i in range(n + 1)]
        ynames = [f"y{a}" for a in range(1, n)]

        def defining(xs, ys, _ast=ast):
            env = dict(constants)
            env.update(zip(xnames, xs))
            env.update(zip(ynames, ys))
            return exprdsl.evaluate(_ast, env)

        used = exprdsl.variables(ast)
        x_free = not any(v in used for v in xnames)
        return cls(n, tuple(signature), defining, name, ast, x_free)

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def eps(self) -> np.ndarray:
        p, q = self.signature
        return np.diag([1.0] * p + [-1.0] * q)

    def F(self, p: CPoint) -> float:
        return float(self.defining(list(p.x), list(p.y)))

    def jet(self, p: CPoint, order: int) -> Jet:
        """Jet of F in all 2n cone-bundle variables."""
        zs = jets.seed_point(p.x + p.y, order)
        return _as_jet(self.defining(zs[:self.n + 1], zs[self.n + 1:]), 2 * self.n, order)

    def fiber_jet(self, p: CPoint, order: int) -> Jet:
        """Jet of F in the fiber variables y only, base point frozen."""
        ys = jets.seed_point(p.y, order)
        return _as_jet(self.defining(list(p.x), ys), self.n - 1, order)

    def check_point(self, p: CPoint) -> None:
        if len(p.x) != self.n + 1 or len(p.y) != self.n - 1:
            raise PreconditionError(
                f"point needs {self.n + 1} base and {self.n - 1} fiber coordinates")


def _as_jet(v, nvars: int, order: int) -> Jet:
    return v if isinstance(v, Jet) else Jet.constant(float(v), nvars, order)


def third_derivatives(j: Jet) -> np.ndarray:
    """Symmetric array of all third partials of a jet of order >= 3."""
    tab = jets.tables(j.nvars, j.order)
    m = j.nvars
    out = np.zeros((m, m, m))
    for r in range(tab.offsets[3], tab.offsets[4]):
        alpha = tab.monos[r]
        idx = [v for v, e in enumerate(alpha) for _ in range(e)]
        val = tab.factorial[r] * j.c[r]
        a, b, c = idx
        for perm in {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}:
            out[perm] = val
    return out


# vertical Hessian ----------------------------------------------------------

@dataclass(frozen=True)
class HessianInfo:
    H: np.ndarray
    inertia: tuple[int, int]


def inertia_of(H: np.ndarray, rel: float = 1e-10) -> tuple[int, int]:
    w = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = float(np.linalg.norm(H, 2)) if H.size else 0.0
    thr = rel * scale
    if scale == 0.0 or np.min(np.abs(w)) < thr:
        raise TangentiallyDegenerate(
            f"vertical Hessian is singular (eigenvalues {np.array2string(w, precision=3)})")
    return int(np.sum(w > 0)), int(np.sum(w < 0))


def vertical_hessian(S: CausalStructure, p: CPoint, check_signature: bool = True) -> HessianInfo:
    S.check_point(p)
    H = S.fiber_jet(p, 2).hessian()
    inertia = inertia_of(H)
    if check_signature and inertia != S.signature:
        raise SignatureMismatch(f"Hessian inertia {inertia} differs from declared {S.signature}")
    return HessianInfo(H, inertia)


# congruence normalization --------------------------------------------------

def _eps(signature: tuple[int, int]) -> np.ndarray:
    p, q = signature
    return np.diag([1.0] * p + [-1.0] * q)


def normalize_sff(h: np.ndarray, signature: tuple[int, int], seed: np.ndarray | None = None) -> np.ndarray:
    """Return T with T^t h T = eps, eps = diag(+1 x p, -1 x q).

    Bunch-Kaufman LDL^t (LAPACK sytrf through scipy), 2x2 pivot blocks split
    by a symmetric eigen-decomposition, then 1/sqrt|d| column scaling.  Without
    a seed the columns get deterministic signs and det T > 0; with a seed the
    result is post-composed with the eps-orthogonal factor closest to it.
    """
    h = 0.5 * (np.asarray(h, dtype=float) + np.asarray(h, dtype=float).T)
    m = h.shape[0]
    scale = float(np.linalg.norm(h, 2))
    if scale == 0.0:
        raise DegeneratePivot("second fundamental form vanishes")
    lu, d, _ = scipy.linalg.ldl(h, lower=True)
    lam = np.empty(m)
    Q = np.zeros((m, m))
    i = 0
    while i < m:
        if i + 1 < m and d[i + 1, i] != 0.0:
            w, v = np.linalg.eigh(d[i:i + 2, i:i + 2])
            lam[i:i + 2] = w
            Q[i:i + 2, i:i + 2] = v
            i += 2
        else:
            lam[i] = d[i, i]
            Q[i, i] = 1.0
            i += 1
    if np.min(np.abs(lam)) < 1e-12 * scale:
        raise DegeneratePivot(f"pivot {np.min(np.abs(lam)):.3e} below 1e-12*|h|")
    inertia = (int(np.sum(lam > 0)), int(np.sum(lam < 0)))
    if inertia != tuple(signature):
        raise SignatureMismatch(f"inertia {inertia} differs from declared {tuple(signature)}")
    # h = G diag(lam) G^t with G = lu Q, so T = G^{-t} |lam|^{-1/2}
    G = lu @ Q
    T = np.linalg.solve(G.T, np.diag(1.0 / np.sqrt(np.abs(lam))))
    order = [k for k in range(m) if lam[k] > 0] + [k for k in range(m) if lam[k] < 0]
    T = T[:, order]
    for k in range(m):
        col = T[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            T[:, k] = -col
    if np.linalg.det(T) < 0:
        T[:, -1] = -T[:, -1]
    if seed is not None:
        T = _align_to_seed(T, np.asarray(seed, dtype=float), _eps(signature))
    return T


def _align_to_seed(T: np.ndarray, seed: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Post-compose T by the eps-polar factor of T^{-1} seed."""
    M = np.linalg.solve(T, seed)
    S = eps @ M.T @ eps @ M
    try:
        root = scipy.linalg.sqrtm(S)
    except (ValueError, np.linalg.LinAlgError):
        return T
    if np.iscomplexobj(root):
        if np.max(np.abs(root.imag)) > 1e-8 * max(1.0, np.max(np.abs(root.real))):
            return T
        root = root.real
    if not np.all(np.isfinite(root)):
        return T
    Lam = M @ np.linalg.inv(root)
    return T @ Lam


# adapted coframe ------------------------------------------------------------

@dataclass(frozen=True)
class AdaptedCoframe:
    """Rows of W: (omega^0, omega^1..omega^{n-1}, omega^n, theta_1..theta_{n-1})
    in the basis (dx^0..dx^n, dy^1..dy^{n-1})."""

    point: CPoint
    W: np.ndarray
    T: np.ndarray
    H: np.ndarray
    h: np.ndarray
    signature: tuple[int, int]

    @property
    def n(self) -> int:
        return self.point.n

    @property
    def P(self) -> np.ndarray:
        """Shadow-space eps-frame in omega^a components: P^t H P = eps."""
        return self.h @ self.T

    @property
    def eps(self) -> np.ndarray:
        return _eps(self.signature)

    @property
    def omega0(self) -> np.ndarray:
        return self.W[0]

    @property
    def omega(self) -> np.ndarray:
        return self.W[1:self.n]

    @property
    def omegan(self) -> np.ndarray:
        return self.W[self.n]

    @property
    def theta(self) -> np.ndarray:
        return self.W[self.n + 1:]


@dataclass(frozen=True)
class _Derivs:
    F: float
    Fx: np.ndarray    # dF/dx^i, i = 0..n
    Fy: np.ndarray    # dF/dy^a
    hess: np.ndarray  # full 2n x 2n Hessian in z


def _derivs(S: CausalStructure, p: CPoint) -> _Derivs:
    j = S.jet(p, 2)
    g = j.gradient()
    n = S.n
    return _Derivs(j.value, g[:n + 1], g[n + 1:], j.hessian())


def adapted_coframe(S: CausalStructure, p: CPoint, seed: np.ndarray | None = None) -> AdaptedCoframe:
    S.check_point(p)
    n = S.n
    d = _derivs(S, p)
    H = d.hess[n + 1:, n + 1:]
    inertia = inertia_of(H)
    if inertia != S.signature:
        raise SignatureMismatch(f"Hessian inertia {inertia} differs from declared {S.signature}")
    h = np.linalg.inv(H)
    T = normalize_sff(h, S.signature, seed)
    y = np.array(p.y)
    W = np.zeros((2 * n, 2 * n))
    W[0, 0] = 1.0
    W[0, 1:n] = -d.Fy
    W[0, n] = y @ d.Fy - d.F
    for a in range(n - 1):
        W[1 + a, 1 + a] = 1.0
        W[1 + a, n] = -y[a]
    W[n, n] = 1.0
    theta = np.zeros((n - 1, 2 * n))
    for a in range(n - 1):
        ya = n + 1 + a
        theta[a, n + 1:] = H[a]
        theta[a, 0] = d.hess[0, ya]
        theta[a, 1:n] = d.hess[1:n, ya]
        theta[a, n] = d.hess[n, ya] - d.Fx[1 + a] - d.Fx[0] * d.Fy[a]
    W[n + 1:] = np.linalg.solve(T, theta)
    return AdaptedCoframe(p, W, T, H, h, S.signature)


def quadratic_form_g(cf: AdaptedCoframe) -> np.ndarray:
    """g = 2 omega^0 o omega^n - eps_ab w^a o w^b with w = P^{-1} omega."""
    w0, wn = cf.omega0, cf.omegan
    what = np.linalg.solve(cf.P, cf.omega)
    G = np.outer(w0, wn) + np.outer(wn, w0) - what.T @ cf.eps @ what
    return 0.5 * (G + G.T)


# Fubini cubic form ---------------------------------------------------------

@dataclass(frozen=True)
class FubiniCubic:
    F3: np.ndarray           # components in the eps-frame
    pick: float
    apolarity: np.ndarray
    raw: np.ndarray          # F_abc in the coordinate frame
    zero_tol: float
    signature: tuple[int, int]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.F3))

    @property
    def apolarity_residual(self) -> float:
        return float(np.linalg.norm(self.apolarity))

    @property
    def asymmetry(self) -> float:
        F = self.F3
        perms = [(0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
        return float(max(np.max(np.abs(F - F.transpose(pm))) for pm in perms))

    @property
    def is_zero(self) -> bool:
        return self.norm < self.zero_tol


def zero_threshold(H: np.ndarray, D3: np.ndarray) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(H)) + float(np.linalg.norm(D3)))


def fubini_cubic(S: CausalStructure, p: CPoint, seed: np.ndarray | None = None) -> FubiniCubic:
    S.check_point(p)
    j = S.fiber_jet(p, 3)
    H = j.hessian()
    inertia = inertia_of(H)
    if inertia != S.signature:
        raise SignatureMismatch(f"Hessian inertia {inertia} differs from declared {S.signature}")
    D3 = third_derivatives(j)
    n = S.n
    h = np.linalg.inv(H)
    a2 = abs(np.linalg.det(H)) ** (1.0 / (n + 1))
    Fa = np.einsum("bc,abc->a", h, D3)
    corr = (np.einsum("ab,c->abc", H, Fa) + np.einsum("bc,a->abc", H, Fa)
            + np.einsum("ca,b->abc", H, Fa))
    raw = (D3 - corr / (n + 1)) / a2
    T = normalize_sff(h, S.signature, seed)
    P = h @ T
    F3 = np.einsum("ijk,ia,jb,kc->abc", raw, P, P, P)
    eps = _eps(S.signature)
    e = np.diag(eps)
    pick = float(np.einsum("abc,a,b,c,abc->", F3, e, e, e, F3))
    apol = np.einsum("abc,bc->a", F3, eps)
    return FubiniCubic(F3, pick, apol, raw, zero_threshold(H, D3), S.signature)


def split_components(F3: np.ndarray, signature: tuple[int, int] = (1, 1)) -> tuple[float, float]:
    """(F^+, F^-) = (F^1_11 +- F^2_22)/sqrt 2 with one index raised by eps."""
    if F3.shape != (2, 2, 2) or tuple(signature) != (1, 1):
        raise PreconditionError("F^+ and F^- need n = 3 and signature (1,1)")
    up111 = F3[0, 0, 0]
    up222 = -F3[1, 1, 1]
    return float((up111 + up222) / math.sqrt(2.0)), float((up111 - up222) / math.sqrt(2.0))


def pick_identity_residual(fc: FubiniCubic) -> float:
    """|pick - 8 F^+ F^-| relative to max(1, |pick|, 8|F^+ F^-|)."""
    fp, fm = split_components(fc.F3, fc.signature)
    ref = max(1.0, abs(fc.pick), abs(8 * fp * fm))
    return abs(fc.pick - 8.0 * fp * fm) / ref


@dataclass(frozen=True)
class InvariantReport:
    point: CPoint
    inertia: tuple[int, int]
    fubini_norm: float
    pick: float
    apolarity_resid: float
    fplus: float | None
    fminus: float | None
    pick_identity_resid: float | None
    zero_tol: float
    flags: dict[str, bool]


def invariant_report(S: CausalStructure, p: CPoint) -> InvariantReport:
    fc = fubini_cubic(S, p)
    flags = {"fubini_zero": fc.is_zero}
    fp = fm = ident = None
    if S.n == 3 and S.signature == (1, 1):
        fp, fm = split_components(fc.F3)
        ident = pick_identity_residual(fc)
        flags["ruled_plus"] = abs(fp) < fc.zero_tol
        flags["ruled_minus"] = abs(fm) < fc.zero_tol
    return InvariantReport(p, S.signature, fc.norm, fc.pick, fc.apolarity_residual,
                           fp, fm, ident, fc.zero_tol, flags)


# Legendre dual --------------------------------------------------------------

def _lagrangian_jet(S: CausalStructure, p: CPoint, order: int = 1) -> Jet:
    n = S.n
    Y = jets.seed_point((S.F(p),) + p.y + (1.0,), order)
    Yn = Y[n]
    inner = S.defining(list(p.x), [Y[a] / Yn for a in range(1, n)])
    return 2.0 * Yn * (Y[0] - Yn * inner)


def legendre(S: CausalStructure, p: CPoint) -> np.ndarray:
    """p_i = dL/dy^i for L = 2 y^n (y^0 - y^n F(x; y/y^n)) at (F, y, 1)."""
    S.check_point(p)
    return _lagrangian_jet(S, p).gradient()


def legendre_graph_check(S: CausalStructure, p: CPoint) -> float:
    """Euler value p_i y^i, zero on the cone."""
    Y = np.array((S.F(p),) + p.y + (1.0,))
    return float(legendre(S, p) @ Y)


# gauge and chart changes ----------------------------------------------------

Lagrangian = Callable[[Sequence, "float | Jet", Sequence], "float | Jet"]


def graph_from_lagrangian(L: Lagrangian, n: int, signature: tuple[int, int],
                          y0_seed: float = 0.0, name: str = "") -> CausalStructure:
    """Graph form of the zero set of L(x; y^0, y) solved for y^0 by Newton's method."""

    def real_root(xs, ys):
        r = float(y0_seed)
        for _ in range(60):
            t = jets.seed_variable(0, r, 1, 1)
            lj = L(xs, t, ys)
            lv, dl = jets.value_of(lj), (lj.c[1] if isinstance(lj, Jet) else 0.0)
            if dl == 0.0:
                raise TangentiallyDegenerate("Lagrangian has zero y^0-derivative")
            step = lv / dl
            r -= step
            if abs(step) <= 1e-15 * max(1.0, abs(r)):
                break
        return r, dl

    def defining(xs, ys):
        sample = next((v for v in list(xs) + list(ys) if isinstance(v, Jet)), None)
        xv = [jets.value_of(v) for v in xs]
        yv = [jets.value_of(v) for v in ys]
        r, dl = real_root(xv, yv)
        if sample is None:
            return r
        y0 = Jet.constant(r, sample.nvars, sample.order)
        for _ in range(sample.order + 2):
            y0 = y0 - L(xs, y0, ys) / dl
        return y0

    return CausalStructure(n, tuple(signature), defining, name)


def lagrangian_rescaled(S: CausalStructure, factor: Callable | None = None) -> CausalStructure:
    """Graph form recovered from factor * (y^0 - F), factor > 0."""
    if factor is None:
        def factor(xs, y0, ys):
            acc = 1.0 + xs[0] * xs[0] + y0 * y0
            for v in ys:
                acc = acc + v * v
            return acc

    def L(xs, y0, ys):
        return factor(xs, y0, ys) * (y0 - S.defining(xs, ys))

    return graph_from_lagrangian(L, S.n, S.signature, name=f"{S.name}~rescaled")


@dataclass(frozen=True)
class FiberChartChange:
    """Affine fiber change y' = A y + b induced by x'^a = A x^a + b^a x^n."""

    A: np.ndarray
    b: np.ndarray

    def forward(self, p: CPoint) -> CPoint:
        n = p.n
        x = np.array(p.x)
        y = np.array(p.y)
        xa = self.A @ x[1:n] + self.b * x[n]
        return CPoint((x[0],) + tuple(xa) + (x[n],), tuple(self.A @ y + self.b))


def fiber_chart_change(S: CausalStructure, A: np.ndarray, b: np.ndarray) -> tuple[CausalStructure, FiberChartChange]:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Ainv = np.linalg.inv(A)
    n = S.n
    m = n - 1

    def defining(xs, ys):
        xn = xs[n]
        shifted = [xs[1 + k] - b[k] * xn for k in range(m)]
        xa = [sum(Ainv[i, k] * shifted[k] for k in range(m)) for i in range(m)]
        yy = [ys[k] - b[k] for k in range(m)]
        ya = [sum(Ainv[i, k] * yy[k] for k in range(m)) for i in range(m)]
        return S.defining([xs[0]] + xa + [xn], ya)

    out = CausalStructure(n, S.signature, defining, f"{S.name}~chart", None, S.x_independent)
    return out, FiberChartChange(A, b)
