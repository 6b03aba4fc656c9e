"""Embedded Dormand-Prince 5(4) integrator with grid landing.

Written in-house rather than wrapping ``scipy.integrate.solve_ivp`` because the
flow needs three things scipy does not expose: steps that land exactly on a
uniform output grid (finite differences are taken on it), rejected-step and
local-error statistics, and typed failures that carry the partial solution.
Dense output is cubic Hermite between accepted nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GeometricError, StepSizeUnderflow

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_BHAT = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _BHAT


@dataclass
class IntegratorStats:
    steps: int = 0
    rejected: int = 0
    evaluations: int = 0
    max_local_error: float = 0.0
    min_step: float = np.inf
    max_step: float = 0.0

    @property
    def mean_step(self) -> float:
        return self._span / self.steps if self.steps else np.nan

    _span: float = 0.0


@dataclass
class Solution:
    t: np.ndarray                # accepted nodes
    y: np.ndarray                # states at nodes
    f: np.ndarray                # derivatives at nodes
    stats: IntegratorStats
    grid_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    grid_y: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    complete: bool = True

    def __call__(self, t: float) -> np.ndarray:
        """Cubic Hermite dense output."""
        ts = self.t
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"t = {t} outside integrated range [{ts[0]}, {ts[-1]}]")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        h = ts[i + 1] - ts[i]
        s = (t - ts[i]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.y[i] + h10 * h * self.f[i]
                + h01 * self.y[i + 1] + h11 * h * self.f[i + 1])


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def dopri5(fun: Callable[[float, np.ndarray], np.ndarray], t0: float, y0: Sequence[float],
           t_end: float, *, rtol: float = 1e-9, atol: float = 1e-12,
           grid: Sequence[float] | None = None, h0: float | None = None,
           fixed_step: float | None = None, max_steps: int = 200_000,
           error_slice: slice | None = None) -> Solution:
    """Integrate y' = fun(t, y) on [t0, t_end] (forward only).

    ``grid`` lists output times; steps are clipped so each one is hit exactly
    and stored in ``grid_t``/``grid_y``.  Geometric errors raised by ``fun``
    propagate with a ``partial`` attribute holding the solution so far.
    ``error_slice`` restricts step-size control to a sub-vector of the state.
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    y = np.array(y0, dtype=float)
    stats = IntegratorStats(_span=t_end - t0)
    grid_pts = sorted(float(g) for g in (grid if grid is not None else [t_end]))
    grid_pts = [g for g in grid_pts if t0 - 1e-14 <= g <= t_end + 1e-14]
    gi = 0
    grid_t: list[float] = []
    grid_y: list[np.ndarray] = []
    while gi < len(grid_pts) and abs(grid_pts[gi] - t0) <= 1e-14 * max(1.0, abs(t0)):
        grid_t.append(t0)
        grid_y.append(y.copy())
        gi += 1

    ts = [t0]
    ys = [y.copy()]
    fs: list[np.ndarray] = []

    def partial_solution() -> Solution:
        ff = fs + [fs[-1]] * (len(ys) - len(fs)) if fs else [np.zeros_like(y)] * len(ys)
        return Solution(np.array(ts), np.array(ys), np.array(ff), stats,
                        np.array(grid_t), np.array(grid_y) if grid_y else np.empty((0, y.size)),
                        complete=False)

    def call(t, state):
        stats.evaluations += 1
        try:
            return np.asarray(fun(t, state), dtype=float)
        except GeometricError as exc:
            exc.partial = partial_solution()
            raise

    sel = error_slice if error_slice is not None else slice(None)
    f = call(t0, y)
    fs.append(f)
    t = t0
    if fixed_step is not None:
        h = float(fixed_step)
    elif h0 is not None:
        h = float(h0)
    else:
        sc = atol + rtol * np.abs(y[sel])
        d0, d1 = _rms(y[sel] / sc), _rms(f[sel] / sc)
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-4
        h = min(h, 0.1 * (t_end - t0))
    span_tol = 1e-13 * max(1.0, abs(t_end))

    while t < t_end - span_tol:
        if stats.steps + stats.rejected >= max_steps:
            exc = StepSizeUnderflow(f"step budget {max_steps} exhausted at t = {t}")
            exc.partial = partial_solution()
            raise exc
        target = grid_pts[gi] if gi < len(grid_pts) else t_end
        landing = False
        step = h
        if t + step >= target - span_tol:
            step = target - t
            landing = True
        elif t + 2 * step > target:
            step = 0.5 * (target - t)  # avoid a sliver step before the grid point
        if step < 1e-14 * max(1.0, abs(t)) and not landing:
            exc = StepSizeUnderflow(f"step size underflow at t = {t} (h = {step:.3e})")
            exc.partial = partial_solution()
            raise exc
        k = [f]
        for s in range(1, 7):
            ys_ = y + step * sum(a * kk for a, kk in zip(_A[s], k))
            k.append(call(t + _C[s] * step, ys_))
        y_new = y + step * sum(b * kk for b, kk in zip(_B, k) if b != 0.0)
        if fixed_step is not None:
            err = 0.0
        else:
            e = step * sum(c * kk for c, kk in zip(_E, k) if c != 0.0)
            sc = atol + rtol * np.maximum(np.abs(y[sel]), np.abs(y_new[sel]))
            err = _rms(e[sel] / sc)
        if err <= 1.0:
            t = target if landing else t + step
            y = y_new
            f = k[6]
            ts.append(t)
            ys.append(y.copy())
            fs.append(f)
            stats.steps += 1
            stats.max_local_error = max(stats.max_local_error, err)
            stats.min_step = min(stats.min_step, step)
            stats.max_step = max(stats.max_step, step)
            if landing and gi < len(grid_pts):
                grid_t.append(t)
                grid_y.append(y.copy())
                gi += 1
            if fixed_step is None:
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                h_new = step * fac
                # a clipped landing step says little about the natural scale
                h = max(h_new, h) if landing else h_new
        else:
            stats.rejected += 1
            h = step * max(0.2, 0.9 * err ** -0.2)
    while gi < len(grid_pts):
        grid_t.append(t)
        grid_y.append(y.copy())
        gi += 1
    return Solution(np.array(ts), np.array(ys), np.array(fs), stats,
                    np.array(grid_t), np.array(grid_y))
