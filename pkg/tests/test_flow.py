import numpy as np
import pytest

from causalgeo import catalog
from causalgeo.errors import ChartExit, ConjugatePoint, GeometricError
from causalgeo.flow import (characteristic_vector, field_jet, integrate_characteristic,
                            optical_scalars, propagate_jacobi, run_geodesic)
from causalgeo.geometry import CausalStructure, CPoint


def test_pp_wave_characteristic_vector():
    S = catalog.pp_wave()
    p = CPoint((0.0, 0.3, 0.0, 0.0), (0.1, 0.2))
    v, A = characteristic_vector(S, p)
    assert np.allclose(A, [0.0, 2 * 0.3])
    assert np.allclose(v[:4], [S.F(p), 0.1, 0.2, 1.0])


def test_isotrivial_jacobi_is_linear():
    S = catalog.cayley_scroll()
    p = CPoint((0.0, 0.1, -0.2, 0.0), (0.3, 0.1))
    run = run_geodesic(S, p, (0.0, 1.0), samples=41)
    assert run.error is None
    t = run.jacobi.t - run.jacobi.t[0]
    At = run.jacobi.At
    assert np.allclose(At, t[:, None, None] * np.eye(2), atol=1e-8)


def test_optical_scalars_identities_pp_wave():
    S = catalog.pp_wave()
    run = run_geodesic(S, CPoint((0.0, 0.2, 0.1, 0.0), (0.3, 0.5)), (0.0, 1.0), samples=41)
    sc = run.scalars
    ok = ~sc.in_window & np.isfinite(sc.theta)
    assert ok.sum() > 10
    R = sc.R[ok]
    # nilpotent, nonzero, traceless tidal operator
    assert np.allclose(np.einsum("kij,kjl->kil", R, R), 0.0, atol=1e-9)
    assert np.all(np.linalg.norm(R, axis=(1, 2)) > 0.1)
    assert np.allclose(sc.pnn[ok], 0.0, atol=1e-9)
    assert np.max(np.abs(sc.decomposition_residual[ok])) < 1e-12


def test_theta_derivative_consistency():
    # d theta/dt by finite differences against the Raychaudhuri right-hand side
    S = catalog.get("warped_generic").structure()
    run = run_geodesic(S, CPoint((0.1, -0.2, 0.2, 0.0), (0.2, -0.3)), (0.0, 1.5), samples=151)
    sc = run.scalars
    t = sc.t
    ok = ~sc.in_window & np.isfinite(sc.theta)
    idx = np.where(ok & (t > 0.4))[0][2:-2]
    m = 2
    dth = (sc.theta[idx + 1] - sc.theta[idx - 1]) / (t[idx + 1] - t[idx - 1])
    rhs = -(sc.theta[idx] ** 2 / m + sc.sigma2[idx] + sc.omega2[idx] + m * sc.pnn[idx])
    assert np.allclose(dth, rhs, rtol=1e-3, atol=1e-4)


def test_frame_gauge_within_residual_group():
    # eps-orthogonal change of the initial frame rotates wsf by conjugation
    S = catalog.get("warped_generic").structure()
    p = CPoint((0.1, -0.2, 0.2, 0.0), (0.2, -0.3))
    traj = integrate_characteristic(S, p, (0.0, 1.0), samples=41)
    c, s = np.cosh(0.4), np.sinh(0.4)
    L = np.array([[c, s], [s, c]])  # preserves diag(1,-1)
    J0 = propagate_jacobi(S, traj)
    J1 = propagate_jacobi(S, traj, frame=L)
    a, b = optical_scalars(J0), optical_scalars(J1)
    ok = ~a.in_window & np.isfinite(a.theta)
    Linv = np.linalg.inv(L)
    conj = np.einsum("ij,kjl,lm->kim", Linv, a.wsf[ok], L)
    assert np.allclose(conj, b.wsf[ok], atol=1e-7)
    assert np.allclose(a.theta[ok], b.theta[ok], rtol=1e-9)


def test_chart_exit_reports_partial():
    # y1 grows without bound once x1 is large: eventually the chart bound trips
    S = CausalStructure.from_expr("y1*y2 + exp(3*x1)", 3, (1, 1), name="runaway")
    run = run_geodesic(S, CPoint((0.0, 0.0, 0.0, 0.0), (0.5, 0.5)), (0.0, 20.0), samples=41)
    assert isinstance(run.error, GeometricError)
    assert 1 < run.rows < 41


def test_conjugate_point_detected():
    # one focusing direction: that column of A goes like sin(t) and vanishes at t = pi
    S = CausalStructure.from_expr("y1^2 + y2^2 - x1^2", 3, (2, 0), name="focusing")
    run = run_geodesic(S, CPoint((0.0,) * 4, (0.0, 0.0)), (0.0, 4.0), samples=81)
    assert isinstance(run.error, ConjugatePoint)
    t_stop = run.scalars.t[-1]
    assert 3.0 < t_stop < 3.3


def test_field_jet_refuses_far_chart():
    S = catalog.pp_wave()
    with pytest.raises(ChartExit):
        field_jet(S, np.array([0, 0, 0, 0, 1e7, 0.0]))
