import numpy as np
import pytest

from causalgeo import catalog
from causalgeo.errors import ConfigError
from causalgeo.flow import run_geodesic
from causalgeo.geometry import CausalStructure, invariant_report
from causalgeo.oracle import Metric

from conftest import random_point


def test_registry_is_read_only():
    with pytest.raises(TypeError):
        catalog.REGISTRY["new"] = None


def test_alias_and_unknown_names():
    assert catalog.get("cayley").name == "cayley_scroll"
    with pytest.raises(ConfigError, match="unknown catalog entry"):
        catalog.get("no_such_thing")


def test_kinds_build_matching_objects():
    for name in catalog.names("structure"):
        assert isinstance(catalog.get(name).build(), CausalStructure)
    for name in catalog.names("metric"):
        assert isinstance(catalog.get(name).build(), Metric)


def test_flag_sources_validated():
    with pytest.raises(ValueError):
        catalog.Flag(True, "rumour")


@pytest.mark.parametrize("entry", [e for e in catalog.structures()], ids=lambda e: e.name)
def test_fubini_flag_reproduced(entry, rng):
    expected = entry.expected("fubini_zero")
    if expected is None:
        pytest.skip("no fubini claim")
    S = entry.structure()
    hits = [invariant_report(S, random_point(rng, S.n)).flags["fubini_zero"] for _ in range(5)]
    if expected:
        assert all(hits)
    else:
        assert not any(hits)


@pytest.mark.parametrize("name", ["cayley_scroll", "iso_log", "flat_quadric_32", "warped_cf"])
def test_wsf_zero_flag_reproduced(name, rng):
    S = catalog.get(name).structure()
    for _ in range(2):
        run = run_geodesic(S, random_point(rng, S.n), (0.0, 1.0), samples=41)
        assert run.error is None
        ok = ~run.scalars.in_window & np.isfinite(run.scalars.theta)
        assert np.max(np.abs(run.scalars.wsf[ok])) < 1e-6


@pytest.mark.parametrize("name", ["pp_wave", "warped_generic"])
def test_wsf_nonzero_flag_reproduced(name, rng):
    assert catalog.get(name).expected("wsf_zero") is False
    S = catalog.get(name).structure()
    run = run_geodesic(S, random_point(rng, S.n), (0.0, 1.0), samples=41)
    ok = ~run.scalars.in_window & np.isfinite(run.scalars.theta)
    assert np.max(np.abs(run.scalars.wsf[ok])) > 1e-3


def test_warp_factor_must_be_positive():
    with pytest.raises(ConfigError):
        catalog.warped_product_surfaces(0.1, 0.2, "x1")
    with pytest.raises(ConfigError):
        catalog.warped_product_surfaces(0.1, 0.2, "-1")


def test_warped_flat_is_flat():
    from causalgeo.oracle import curvature
    c = curvature(catalog.get("warped_flat").build(), [0.2, -0.1, 0.3, 0.1])
    assert np.allclose(c.riemann, 0.0, atol=1e-14)


def test_describe_is_plain_data():
    d = catalog.describe("pp_wave")
    assert d["name"] == "pp_wave" and d["kind"] == "structure"
    assert d["flags"]["wsf_zero"]["source"] == "oracle"
    assert d["flags"]["halfflat_plus"] is None
