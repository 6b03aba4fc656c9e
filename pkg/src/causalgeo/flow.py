"""Characteristic flow, null Jacobi fields and optical scalars.

The characteristic field in graph form is

    v = F d/dx^0 + y^a d/dx^a + d/dx^n + A^a d/dy^a,    H A = rhs,

so the curve parameter t satisfies x^n(t) - x^n(t0) = t - t0.

Jacobi data.  Variations delta solve delta' = Dv delta.  Their shadow
components V^a = omega^a(delta) obey a linear second-order system
V'' + P V' + Q V = 0 whose coefficients are recovered exactly from a full set
of 2(n-1) solutions (values, first and second derivatives come from order-2
jets of v).  The first-order term is removed by Gamma' = -P Gamma / 2, which
is integrated with the state.  In the resulting normal form A~'' = -R A~ the
tidal matrix R is frame-covariant up to a constant change of frame; it is the
conjugate, up to a trace term, of the parallel-frame tidal matrix whenever
the structure comes from a metric.  Everything is reported in the
eps-orthonormal shadow frame at t0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import ChartExit, ConjugatePoint, GeometricError, TangentiallyDegenerate
from .geometry import AdaptedCoframe, CausalStructure, CPoint, adapted_coframe
from .integrate import IntegratorStats, Solution, dopri5

CHART_BOUND = 1e6


# the field ------------------------------------------------------------------

@dataclass(frozen=True)
class FieldJet:
    """Characteristic field and its derivatives at one point z."""

    v: np.ndarray          # field value (2n)
    J: np.ndarray | None   # Jacobian Dv
    M: np.ndarray | None   # (D^2 v)[v, .]
    F: float
    Fx: np.ndarray
    Fy: np.ndarray


def field_jet(S: CausalStructure, z: np.ndarray, order: int = 1) -> FieldJet:
    """Field v as jets of ``order`` (0, 1 or 2) in all cone-bundle variables."""
    n = S.n
    m = n - 1
    N = 2 * n
    if not np.all(np.isfinite(z)) or np.max(np.abs(z[n + 1:]), initial=0.0) > CHART_BOUND:
        raise ChartExit(f"cone direction left the affine chart (y = {z[n + 1:]})")
    k = order + 2
    zs = jets.seed_point(z, k)
    Fj = S.defining(zs[:n + 1], zs[n + 1:])
    if not isinstance(Fj, jets.Jet):
        Fj = jets.Jet.constant(float(Fj), N, k)
    Fy = [Fj.d(n + 1 + a) for a in range(m)]
    H = [[Fy[a].d(n + 1 + b) for b in range(m)] for a in range(m)]
    Hval = np.array([[H[a][b].value for b in range(m)] for a in range(m)])
    w = np.linalg.eigvalsh(Hval)
    if np.min(np.abs(w)) < 1e-10 * max(np.max(np.abs(w)), 1e-300):
        raise TangentiallyDegenerate("vertical Hessian became singular along the curve")
    Fx = [Fj.d(i) for i in range(n + 1)]
    F = Fj.truncate(order + 1)
    rhs = []
    for a in range(m):
        r = Fx[1 + a] + Fx[0] * Fy[a] - F * Fy[a].d(0) - Fy[a].d(n)
        for b in range(m):
            r = r - zs[n + 1 + b] * Fy[a].d(1 + b)
        rhs.append(r)
    A = jets.solve(H, rhs)
    comps = [F.truncate(order)] + [zs[n + 1 + a].truncate(order) for a in range(m)]
    comps.append(jets.Jet.constant(1.0, N, order))
    comps += [a_.truncate(order) for a_ in A]
    v = np.array([c.value for c in comps])
    if not np.all(np.isfinite(v)):
        raise ChartExit("characteristic field is not finite")
    J = M = None
    if order >= 1:
        J = np.array([c.gradient() for c in comps])
    if order >= 2:
        M = np.array([c.hessian() @ v for c in comps])
    return FieldJet(v, J, M, Fj.value, np.array([f.value for f in Fx]),
                    np.array([f.value for f in Fy]))


def characteristic_vector(S: CausalStructure, p: CPoint) -> tuple[np.ndarray, np.ndarray]:
    """(x', y') of the characteristic field at p."""
    S.check_point(p)
    fj = field_jet(S, p.z, order=0)
    n = S.n
    return fj.v[:n + 1].copy(), fj.v[n + 1:].copy()


def omega0_row(n: int, fj: FieldJet, y: np.ndarray) -> np.ndarray:
    row = np.zeros(2 * n)
    row[0] = 1.0
    row[1:n] = -fj.Fy
    row[n] = y @ fj.Fy - fj.F
    return row


# trajectories ---------------------------------------------------------------

@dataclass
class Trajectory:
    structure: CausalStructure = field(repr=False)
    t: np.ndarray
    z: np.ndarray                         # samples x 2n
    coframes: list[AdaptedCoframe]
    stats: IntegratorStats
    tol: float
    complete: bool = True
    error: str | None = None

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def x(self) -> np.ndarray:
        return self.z[:, :self.n + 1]

    @property
    def y(self) -> np.ndarray:
        return self.z[:, self.n + 1:]

    def point(self, i: int) -> CPoint:
        return CPoint.from_z(self.z[i], self.n)


def sample_grid(t_span: tuple[float, float], samples: int) -> np.ndarray:
    if samples < 5:
        raise ValueError("at least 5 samples are needed")
    return np.linspace(t_span[0], t_span[1], samples)


def integrate_characteristic(S: CausalStructure, p0: CPoint, t_span: tuple[float, float] = (0.0, 1.0),
                             tol: float = 1e-9, samples: int = 101) -> Trajectory:
    """Characteristic curve through p0 with continuity-seeded coframes per sample.

    On a mid-flight geometric failure the raised error carries ``partial``,
    a Trajectory over the samples reached so far.
    """
    S.check_point(p0)
    grid = sample_grid(t_span, samples)

    def rhs(t, z):
        return field_jet(S, z, order=0).v

    try:
        sol = dopri5(rhs, grid[0], p0.z, grid[-1], rtol=tol, atol=1e-12, grid=grid)
    except GeometricError as exc:
        part = exc.partial
        exc.partial = _trajectory(S, part, tol, complete=False, error=str(exc))
        raise
    return _trajectory(S, sol, tol)


def _trajectory(S, sol: Solution, tol: float, complete: bool = True,
                error: str | None = None) -> Trajectory:
    coframes = []
    seed = None
    for zi in sol.grid_y:
        cf = adapted_coframe(S, CPoint.from_z(zi, S.n), seed=seed)
        coframes.append(cf)
        seed = cf.T
    return Trajectory(S, np.asarray(sol.grid_t), np.asarray(sol.grid_y), coframes,
                      sol.stats, tol, complete, error)


# Jacobi fields --------------------------------------------------------------

@dataclass
class JacobiTensor:
    t: np.ndarray
    z: np.ndarray
    A: np.ndarray        # raw shadow components in the t0 eps-frame, A(t0)=0, A'(t0)=I
    Ap: np.ndarray
    App: np.ndarray
    P: np.ndarray        # first-order coefficient (coordinate shadow frame)
    Pp: np.ndarray       # its t-derivative (finite differences on the grid)
    Gamma: np.ndarray
    At: np.ndarray       # normal-form Jacobi tensor, eps-frame
    Atp: np.ndarray
    Atpp: np.ndarray
    deltas: np.ndarray   # samples x variations x 2n
    omega0: np.ndarray   # omega^0(delta) per sample and variation
    omega0_drift: np.ndarray
    P0: np.ndarray
    eps: np.ndarray
    stats: IntegratorStats
    complete: bool = True
    error: str | None = None

    @property
    def mean_step(self) -> float:
        return float((self.t[-1] - self.t[0]) / max(self.stats.steps, 1))


def _fit_PQ(n, fj: FieldJet, z, D):
    """P, Q and shadow data for a stack of variations D (k x 2n)."""
    m = n - 1
    y = z[n + 1:]
    A = fj.v[n + 1:]
    Ap = (fj.J @ fj.v)[n + 1:]
    Dp = D @ fj.J.T
    Dpp = D @ (fj.M + fj.J @ fj.J).T
    V = D[:, 1:n] - y * D[:, n:n + 1]
    Vp = Dp[:, 1:n] - y * Dp[:, n:n + 1] - A * D[:, n:n + 1]
    Vpp = Dpp[:, 1:n] - y * Dpp[:, n:n + 1] - 2 * A * Dp[:, n:n + 1] - Ap * D[:, n:n + 1]
    Phi = np.vstack([V.T, Vp.T])           # 2m x 2m
    X = Vpp.T                               # m x 2m
    QP = -np.linalg.solve(Phi.T, X.T).T     # X Phi^{-1}
    return QP[:, :m], QP[:, m:], V.T, Vp.T, Vpp.T


def _fd_derivative(t: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Fourth-order finite differences along axis 0 on a uniform grid."""
    h = t[1] - t[0]
    k = len(t)
    out = np.empty_like(f)
    if k < 5:
        return np.gradient(f, t, axis=0)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return out


def initial_variations(S: CausalStructure, p0: CPoint, P0: np.ndarray) -> np.ndarray:
    """Vertical set, horizontal set (both with omega^0 = 0) and one transverse variation."""
    n = S.n
    m = n - 1
    N = 2 * n
    fj = field_jet(S, p0.z, order=0)
    D = np.zeros((2 * m + 1, N))
    for b in range(m):
        D[b, n + 1:] = P0[:, b]
        D[m + b, 1:n] = P0[:, b]
        D[m + b, 0] = fj.Fy @ P0[:, b]
    D[2 * m, 0] = 1.0
    return D


def propagate_jacobi(S: CausalStructure, traj: Trajectory, frame: np.ndarray | None = None,
                     tol: float | None = None) -> JacobiTensor:
    """Integrate the linearized flow along ``traj``'s grid and extract Jacobi data.

    ``frame`` is an optional constant change of the t0 eps-frame (an
    eps-orthogonal matrix for a change within the residual gauge).
    """
    n = S.n
    m = n - 1
    N = 2 * n
    tol = traj.tol if tol is None else tol
    cf0 = traj.coframes[0]
    P0 = cf0.P if frame is None else cf0.P @ frame
    p0 = traj.point(0)
    D0 = initial_variations(S, p0, P0)
    nv = D0.shape[0]
    off_d = N
    off_l = N + nv * N
    off_g = off_l + 1
    size = off_g + m * m
    y0 = np.zeros(size)
    y0[:N] = p0.z
    y0[off_d:off_l] = D0.ravel()
    y0[off_g:] = np.eye(m).ravel()

    def rhs(t, Y):
        z = Y[:N]
        fj = field_jet(S, z, order=2)
        D = Y[off_d:off_l].reshape(nv, N)
        out = np.empty_like(Y)
        out[:N] = fj.v
        out[off_d:off_l] = (D @ fj.J.T).ravel()
        out[off_l] = fj.Fx[0]
        _, P, *_ = _fit_PQ(n, fj, z, D[:2 * m])
        G = Y[off_g:].reshape(m, m)
        out[off_g:] = (-0.5 * P @ G).ravel()
        return out

    grid = traj.t
    complete, error = True, None
    try:
        sol = dopri5(rhs, grid[0], y0, grid[-1], rtol=tol, atol=1e-12, grid=grid)
    except GeometricError as exc:
        sol = exc.partial
        complete, error = False, str(exc)
        if len(sol.grid_t) < 5:
            raise
    ts = np.asarray(sol.grid_t)
    Ys = np.asarray(sol.grid_y)
    k = len(ts)
    A = np.empty((k, m, m)); Ap = np.empty_like(A); App = np.empty_like(A)
    Ps = np.empty_like(A); G = np.empty_like(A)
    deltas = np.empty((k, nv, N))
    om0 = np.empty((k, nv))
    drift = np.empty(k)
    for i, Y in enumerate(Ys):
        z = Y[:N]
        fj = field_jet(S, z, order=2)
        D = Y[off_d:off_l].reshape(nv, N)
        deltas[i] = D
        _, P, V, Vp, Vpp = _fit_PQ(n, fj, z, D[:2 * m])
        A[i], Ap[i], App[i] = V[:, :m], Vp[:, :m], Vpp[:, :m]
        Ps[i] = P
        G[i] = Y[off_g:].reshape(m, m)
        row = omega0_row(n, fj, z[n + 1:])
        om0[i] = D @ row
        scale_ = np.linalg.norm(row) * np.linalg.norm(D, axis=1)
        rel = np.abs(om0[i]) / scale_
        rel[-1] = abs(om0[i, -1] * np.exp(-Y[off_l]) - 1.0)
        drift[i] = float(np.max(rel))
    Pp = _fd_derivative(ts, Ps)
    P0inv = np.linalg.inv(P0)
    At = np.empty_like(A); Atp = np.empty_like(A); Atpp = np.empty_like(A)
    for i in range(k):
        Gi = np.linalg.inv(G[i])
        P, dP = Ps[i], Pp[i]
        At[i] = P0inv @ Gi @ A[i]
        Atp[i] = P0inv @ Gi @ (Ap[i] + 0.5 * P @ A[i])
        Atpp[i] = P0inv @ Gi @ (App[i] + P @ Ap[i] + 0.5 * dP @ A[i] + 0.25 * P @ P @ A[i])
    return JacobiTensor(ts, Ys[:, :N], P0inv @ A, P0inv @ Ap, P0inv @ App, Ps, Pp, G,
                        At, Atp, Atpp, deltas, om0, drift, P0, cf0.eps, sol.stats,
                        complete, error)


# optical scalars -------------------------------------------------------------

@dataclass
class OpticalScalars:
    t: np.ndarray
    theta: np.ndarray
    omega2: np.ndarray
    sigma2: np.ndarray
    pnn: np.ndarray
    wsf: np.ndarray
    R: np.ndarray
    B: np.ndarray
    raych_residual: np.ndarray
    decomposition_residual: np.ndarray
    in_window: np.ndarray

    @property
    def wsf_norm(self) -> np.ndarray:
        return np.linalg.norm(self.wsf, axis=(1, 2))

    @property
    def tidal_norm(self) -> np.ndarray:
        return np.linalg.norm(self.R, axis=(1, 2))

    def truncated(self, k: int) -> "OpticalScalars":
        return OpticalScalars(*(getattr(self, f)[:k] for f in self.__dataclass_fields__))


def optical_scalars(J: JacobiTensor, exclude_steps: float = 10.0) -> OpticalScalars:
    """Expansion, shear, vorticity, tidal split and Raychaudhuri residual.

    B = A~' A~^{-1} with the adjoint taken against eps; B' comes from the
    exact second derivative of A~, so R = -(B' + B^2).  Samples with
    |t - t0| < exclude_steps * mean step are flagged ``in_window``; the base
    point itself yields NaN.  ConjugatePoint is raised (with ``partial``)
    when A~ degenerates outside that window.
    """
    m = J.A.shape[1]
    eps = J.eps
    k = len(J.t)
    t0 = J.t[0]
    radius = exclude_steps * J.mean_step
    nan = np.full(k, np.nan)
    theta, om2, sg2, pnn, raych, dec = (nan.copy() for _ in range(6))
    R = np.full((k, m, m), np.nan)
    wsf = np.full((k, m, m), np.nan)
    B = np.full((k, m, m), np.nan)
    window = np.abs(J.t - t0) < radius
    I = np.eye(m)
    prev_sign = 0.0
    for i in range(k):
        At = J.At[i]
        nrm = np.linalg.norm(At, 2)
        sdet = np.linalg.det(At)
        det = abs(sdet)
        # a crossing between grid samples shows up as a sign flip of det
        flipped = not window[i] and prev_sign * sdet < 0
        if not window[i] and sdet != 0.0:
            prev_sign = np.sign(sdet)
        if nrm == 0.0 or det <= 1e-10 * nrm ** m or flipped:
            if window[i]:
                continue
            out = OpticalScalars(J.t, theta, om2, sg2, pnn, wsf, R, B, raych, dec, window)
            exc = ConjugatePoint(f"Jacobi tensor degenerate at t = {J.t[i]:.6g}")
            exc.partial = out.truncated(i)
            raise exc
        inv = np.linalg.inv(At)
        Bi = J.Atp[i] @ inv
        Bp = J.Atpp[i] @ inv - Bi @ Bi
        Ri = -(Bp + Bi @ Bi)
        Bstar = eps @ Bi.T @ eps
        th = float(np.trace(Bi))
        w = 0.5 * (Bi - Bstar)
        s = 0.5 * (Bi + Bstar) - th / m * I
        p = float(np.trace(Ri)) / m
        theta[i] = th
        om2[i] = float(np.trace(w @ w))
        sg2[i] = float(np.trace(s @ s))
        pnn[i] = p
        R[i] = Ri
        wsf[i] = Ri - p * I
        B[i] = Bi
        dec[i] = float(np.max(np.abs(w + s + th / m * I - Bi)))
        raych[i] = float(np.trace(Bp)) + m * p + om2[i] + sg2[i] + th * th / m
    return OpticalScalars(J.t, theta, om2, sg2, pnn, wsf, R, B, raych, dec, window)


# convenience ------------------------------------------------------------------

@dataclass
class GeodesicRun:
    traj: Trajectory
    jacobi: JacobiTensor | None
    scalars: OpticalScalars | None
    error: GeometricError | None = None

    @property
    def rows(self) -> int:
        return len(self.scalars.t) if self.scalars is not None else len(self.traj.t)


def run_geodesic(S: CausalStructure, p0: CPoint, t_span=(0.0, 1.0), tol: float = 1e-9,
                 samples: int = 101, exclude_steps: float = 10.0) -> GeodesicRun:
    """Trajectory, Jacobi tensor and optical scalars; failures yield partial data."""
    err = None
    try:
        traj = integrate_characteristic(S, p0, t_span, tol, samples)
    except GeometricError as exc:
        traj, err = exc.partial, exc
        if len(traj.t) < 5:
            return GeodesicRun(traj, None, None, err)
    try:
        J = propagate_jacobi(S, traj)
    except GeometricError as exc:
        return GeodesicRun(traj, None, None, err or exc)
    if not J.complete and err is None:
        err = GeometricError(J.error)
    try:
        sc = optical_scalars(J, exclude_steps)
    except ConjugatePoint as exc:
        return GeodesicRun(traj, J, exc.partial, exc)
    return GeodesicRun(traj, J, sc, err)
