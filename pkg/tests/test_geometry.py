import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalgeo import catalog
from causalgeo.errors import ConfigError, PreconditionError, SignatureMismatch, TangentiallyDegenerate
from causalgeo.geometry import (CausalStructure, CPoint, adapted_coframe, fiber_chart_change,
                                fubini_cubic, inertia_of, invariant_report, lagrangian_rescaled,
                                legendre, legendre_graph_check, normalize_sff,
                                pick_identity_residual, quadratic_form_g, split_components,
                                vertical_hessian)

from conftest import random_point

ORIGIN4 = CPoint((0.0,) * 4, (0.0, 0.0))


def test_structure_validation():
    with pytest.raises(ConfigError):
        CausalStructure.from_expr("y1^2", 2, (1, 0))
    with pytest.raises(ConfigError):
        CausalStructure.from_expr("y1*y2", 3, (2, 1))
    S = CausalStructure.from_expr("y1*y2", 3, (1, 1))
    with pytest.raises(PreconditionError):
        fubini_cubic(S, CPoint((0.0,) * 3, (0.0, 0.0)))


def test_flat_coframe_at_origin():
    S = catalog.flat_quadric(1, 1)
    cf = adapted_coframe(S, ORIGIN4)
    assert np.allclose(cf.W[:4, :4], np.eye(4))
    assert np.allclose(cf.W[:4, 4:], 0.0)
    assert np.allclose(cf.theta[:, 4:], math.sqrt(2) * np.diag([1.0, -1.0]))


def test_sff_normalization_flat():
    S = catalog.flat_quadric(2, 1)
    p = CPoint((0.1,) * 5, (0.2, -0.1, 0.3))
    cf = adapted_coframe(S, p)
    assert np.allclose(cf.P.T @ cf.H @ cf.P, cf.eps, atol=1e-14)


def test_cayley_fubini_at_base():
    S = catalog.cayley_scroll()
    fc = fubini_cubic(S, ORIGIN4)
    assert np.allclose(np.abs(fc.F3), 1 / math.sqrt(2))
    fp, fm = split_components(fc.F3)
    assert abs(fp) < 1e-15
    assert fm == pytest.approx(1.0)
    assert fc.pick == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("y1,expected", [(0.5, 2.83), (-0.2, 0.97), (0.3, 0.937)])
def test_cayley_fminus_values(y1, expected):
    fc = fubini_cubic(catalog.cayley_scroll(), CPoint((0.0,) * 4, (y1, 0.1)))
    assert abs(split_components(fc.F3)[1]) == pytest.approx(expected, abs=5e-3)


def test_cayley_fminus_bounded_below_on_box():
    S = catalog.cayley_scroll()
    vals = []
    for y1 in np.linspace(-0.5, 0.5, 41):
        fc = fubini_cubic(S, CPoint((0.0,) * 4, (y1, 0.0)))
        vals.append(abs(split_components(fc.F3)[1]))
    assert min(vals) > 0.5


def test_pp_wave_is_conformal():
    rep = invariant_report(catalog.pp_wave(), CPoint((0.1, 0.7, 0.2, 0.0), (0.3, -0.2)))
    assert rep.flags["fubini_zero"]
    assert rep.flags["ruled_plus"] and rep.flags["ruled_minus"]


def test_degenerate_hessian():
    S = CausalStructure.from_expr("y1^2 + x0*y2", 3, (1, 1))
    with pytest.raises(TangentiallyDegenerate):
        vertical_hessian(S, ORIGIN4)


def test_signature_mismatch():
    S = CausalStructure.from_expr("y1^2 + y2^2", 3, (1, 1))
    with pytest.raises(SignatureMismatch):
        fubini_cubic(S, ORIGIN4)


def _random_symmetric(draw_vals, p, q):
    rng = np.random.default_rng(draw_vals)
    m = p + q
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    w = np.concatenate([rng.uniform(0.2, 3.0, p), -rng.uniform(0.2, 3.0, q)])
    return Q @ np.diag(w) @ Q.T


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.integers(0, 3), q=st.integers(0, 3))
def test_normalize_sff_property(seed, p, q):
    if p + q < 2:
        return
    h = _random_symmetric(seed, p, q)
    assert inertia_of(h) == (p, q)
    T = normalize_sff(h, (p, q))
    eps = np.diag([1.0] * p + [-1.0] * q)
    assert np.allclose(T.T @ h @ T, eps, atol=1e-10)
    assert np.linalg.det(T) > 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_seeded_normalization_tracks_seed(seed):
    h = _random_symmetric(seed, 1, 1)
    T = normalize_sff(h, (1, 1))
    h2 = h + 1e-4 * _random_symmetric(seed + 1, 1, 1)
    T2 = normalize_sff(h2, (1, 1), seed=T)
    assert np.allclose(T2.T @ h2 @ T2, np.diag([1.0, -1.0]), atol=1e-10)
    assert np.linalg.norm(T2 - T) < 1e-2 * np.linalg.norm(T)


@pytest.mark.parametrize("name", ["flat_quadric_22", "flat_quadric_32", "cayley_scroll", "pp_wave",
                                  "iso_log", "iso_cubic_5d", "warped_generic"])
def test_quadratic_form_rank(name, rng):
    S = catalog.get(name).structure()
    for _ in range(5):
        cf = adapted_coframe(S, random_point(rng, S.n))
        g = quadratic_form_g(cf)
        assert np.allclose(g, g.T)
        assert np.linalg.matrix_rank(g, tol=1e-9) == S.n + 1


def test_pp_quadratic_form_matches_metric():
    # 2 w0 wn - eps w^ w^ reproduces -H_ab w^a w^b, i.e. the pp-wave metric up to scale
    S = catalog.pp_wave()
    p = CPoint((0.0, 0.4, 0.1, 0.0), (0.0, 0.0))
    g = quadratic_form_g(adapted_coframe(S, p))[:4, :4]
    m = catalog.get("metric_pp_wave").build().at(p.x)
    ratio = g[0, 3] / m[0, 3]
    assert np.allclose(g, ratio * m, atol=1e-12)


@pytest.mark.parametrize("name", ["flat_quadric_22", "cayley_scroll", "iso_exp", "pp_wave"])
def test_legendre_annihilates_cone(name, rng):
    S = catalog.get(name).structure()
    for _ in range(5):
        p = random_point(rng, S.n)
        assert legendre_graph_check(S, p) < 1e-12
        cf = adapted_coframe(S, p)
        L = legendre(S, p)
        assert np.allclose(L, 2.0 * cf.omega0[:S.n + 1], atol=1e-12)


def test_lagrangian_rescaling_preserves_defining_function(rng):
    S = catalog.cayley_scroll()
    R = lagrangian_rescaled(S)
    for _ in range(5):
        p = random_point(rng, 3)
        assert R.F(p) == pytest.approx(S.F(p), abs=1e-14)
        a, b = fubini_cubic(S, p), fubini_cubic(R, p)
        assert np.allclose(np.abs(a.F3), np.abs(b.F3), atol=1e-10)


def test_chart_change_positive_det_preserves_ruling(rng):
    S = catalog.cayley_scroll()
    C, change = fiber_chart_change(S, np.array([[1.2, 0.3], [0.1, 0.9]]), np.array([0.1, -0.2]))
    for _ in range(10):
        p = random_point(rng, 3)
        fc = fubini_cubic(C, change.forward(p))
        fp, fm = split_components(fc.F3)
        assert abs(fp) < fc.zero_tol
        assert abs(fm) > 1e-3
        assert pick_identity_residual(fc) < 1e-10


def test_chart_change_negative_det_swaps_components(rng):
    S = catalog.cayley_scroll()
    C, change = fiber_chart_change(S, np.diag([1.0, -1.0]), np.zeros(2))
    for _ in range(10):
        p = random_point(rng, 3)
        fp, fm = split_components(fubini_cubic(C, change.forward(p)).F3)
        assert abs(fm) < 1e-12
        assert abs(fp) > 0.1
