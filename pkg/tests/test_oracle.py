import numpy as np
import pytest

from causalgeo import catalog
from causalgeo.errors import BranchAmbiguity, DegenerateMetric, NoRealRoot, ParseError, PreconditionError
from causalgeo.geometry import CPoint, fubini_cubic
from causalgeo.oracle import (Metric, christoffel, cross_validate, curvature, geodesic_deviation,
                              graph_from_metric, launch_velocity, null_geodesic, symmetry_residuals)

from conftest import random_point


def metric(name):
    return catalog.get(name).build()


def test_flat_metric_has_no_curvature():
    c = curvature(metric("metric_flat_22"), [0.3, -0.1, 0.2, 0.5])
    assert np.allclose(c.riemann, 0.0)
    assert np.allclose(christoffel(metric("metric_flat_22"), [0.0] * 4), 0.0)


@pytest.mark.parametrize("name", ["metric_conformal_flat", "warped_cf"])
def test_conformally_flat_weyl_vanishes(name, rng):
    m = metric(name)
    for _ in range(3):
        x = rng.uniform(-0.4, 0.4, 4)
        c = curvature(m, x)
        assert np.max(np.abs(c.weyl)) < 1e-10
        assert np.max(np.abs(c.riemann)) > 1e-3


def test_pp_wave_is_ricci_flat():
    c = curvature(metric("metric_pp_wave"), [0.1, 0.4, -0.2, 0.3])
    assert np.allclose(c.ricci, 0.0, atol=1e-13)
    assert np.allclose(c.weyl, c.riemann, atol=1e-13)
    assert np.max(np.abs(c.riemann)) == pytest.approx(2.0)


def test_symmetries_warped_generic():
    res = symmetry_residuals(curvature(metric("warped_generic"), [0.1, 0.2, -0.3, 0.1]))
    assert set(res) >= {"antisym_kl", "pair_sym", "bianchi1", "weyl_trace"}
    assert max(res.values()) < 1e-12


def test_degenerate_metric():
    m = Metric.from_exprs({(0, 0): "x0", (1, 1): "1", (2, 2): "1", (3, 3): "1"}, 4, (4, 0))
    with pytest.raises(DegenerateMetric):
        christoffel(m, [0.0] * 4)


def test_three_dimensional_metric_refused():
    m = Metric.from_exprs({(0, 2): "1", (1, 1): "-1"}, 3, (2, 1))
    with pytest.raises(PreconditionError):
        curvature(m, [0.0] * 3)


def test_null_norm_preserved_pp_wave():
    m = metric("metric_pp_wave")
    x0 = np.array([0.0, 0.3, 0.1, 0.0])
    v = np.array([0.0, 0.2, -0.4, 1.0])
    g = m.at(x0)
    # solve for v^0 so that v is null
    v[0] = -(v[1:] @ g[1:, 1:] @ v[1:]) / (2 * g[0, 3] * v[3])
    geo = null_geodesic(m, x0, v, (0.0, 5.0))
    assert np.max(np.abs(geo.null_norm())) < 1e-8


def test_non_null_velocity_rejected():
    with pytest.raises(PreconditionError):
        null_geodesic(metric("metric_flat_22"), [0.0] * 4, [1.0, 0.0, 0.0, 1.0], (0.0, 1.0))


def test_euclidean_has_no_null_cone():
    with pytest.raises(NoRealRoot):
        graph_from_metric(metric("metric_euclidean"))


def test_branch_ambiguity_without_cross_term():
    m = Metric.from_exprs({(0, 0): "1", (1, 1): "-1", (2, 2): "-1", (3, 3): "-1"}, 4, (1, 3))
    with pytest.raises(BranchAmbiguity):
        graph_from_metric(m)


def test_pp_graph_reproduces_catalog_structure(rng):
    S = graph_from_metric(metric("metric_pp_wave"))
    ref = catalog.pp_wave()
    assert S.signature == (1, 1)
    for _ in range(10):
        p = random_point(rng, 3)
        assert S.F(p) == pytest.approx(ref.F(p), abs=1e-13)
    # the +2 x1^2 profile flips the sign of the potential term
    plus = graph_from_metric(metric("metric_pp_wave_plus"))
    p = CPoint((0.0, 0.5, 0.0, 0.0), (0.2, 0.1))
    assert plus.F(p) == pytest.approx(0.2 * 0.1 - 0.25)


@pytest.mark.parametrize("name", ["metric_conformal_flat", "warped_cf", "warped_generic", "metric_pp_wave"])
def test_metric_cones_have_vanishing_fubini(name, rng):
    S = catalog.get(name).structure()
    for _ in range(5):
        fc = fubini_cubic(S, random_point(rng, 3))
        assert np.max(np.abs(fc.F3)) < fc.zero_tol


def test_warped_cf_tidal_is_pure_trace():
    m = metric("warped_cf")
    S = catalog.get("warped_cf").structure()
    p = CPoint((0.1, 0.2, -0.1, 0.0), (0.1, -0.2))
    dev = geodesic_deviation(m, x0=p.x, v0=launch_velocity(S, p), t_span=(0.0, 1.0), samples=21)
    assert np.max(np.abs(dev.tracefree)) < 1e-10
    assert np.min(np.abs(dev.trace)) > 1e-3


def test_cross_validate_pp_wave():
    S = catalog.pp_wave()
    chk = cross_validate(S, metric("metric_pp_wave"), CPoint((0.0, 0.2, 0.1, 0.0), (0.3, -0.2)),
                         samples=21)
    assert chk.compared > 5
    assert chk.projection_error < 1e-10
    assert chk.tidal_error < 1e-8


def test_unknown_symbol_in_metric_entry():
    with pytest.raises(ParseError):
        Metric.from_exprs({(0, 3): "1 + z"}, 4, (2, 2))
