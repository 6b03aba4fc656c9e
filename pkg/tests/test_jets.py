import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalgeo import jets
from causalgeo.errors import DomainError, JetError
from causalgeo.jets import Jet

finite = st.floats(-2.0, 2.0, allow_nan=False)


def test_seed_variable_and_index_errors():
    x = jets.seed_variable(1, 0.5, 3, 2)
    assert x.value == 0.5
    assert list(x.gradient()) == [0.0, 1.0, 0.0]
    with pytest.raises(JetError):
        jets.seed_variable(3, 0.0, 3, 2)
    with pytest.raises(JetError):
        jets.Jet.constant(1.0, 2, 7)


def test_graded_lex_layout():
    tab = jets.tables(2, 2)
    assert list(tab.monos) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_product_rule_coefficients():
    x, y = jets.seed_point([1.0, 2.0], 3)
    f = x * x * y
    # x^2 y at (1,2): d/dx = 2xy = 4, d/dy = x^2 = 1, d2/dxdy = 2x = 2, d3/dx2dy = 2
    assert f.partial((1, 0)) == pytest.approx(4.0)
    assert f.partial((0, 1)) == pytest.approx(1.0)
    assert f.partial((1, 1)) == pytest.approx(2.0)
    assert f.partial((2, 1)) == pytest.approx(2.0)
    assert f.partial((3, 0)) == 0.0


def test_exp_log_roundtrip():
    x, y = jets.seed_point([0.3, -0.2], 4)
    f = jets.log(jets.exp(x + 2 * y))
    g = x + 2 * y
    assert np.allclose(f.c, g.c, atol=1e-14)


def test_sin_cos_identity():
    (x,) = jets.seed_point([0.7], 4)
    one = jets.sin(x) ** 2 + jets.cos(x) ** 2
    assert one.value == pytest.approx(1.0)
    assert np.allclose(one.c[1:], 0.0, atol=1e-14)


def test_sqrt_square():
    (x,) = jets.seed_point([1.7], 4)
    s = jets.sqrt(x)
    assert np.allclose((s * s).c, x.c, atol=1e-14)


def test_domain_errors():
    (x,) = jets.seed_point([-1.0], 2)
    with pytest.raises(DomainError):
        jets.log(x)
    with pytest.raises(DomainError):
        jets.sqrt(x)
    with pytest.raises(DomainError):
        jets.reciprocal(x - (-1.0))


def test_derivative_lowers_order():
    x, y = jets.seed_point([0.5, 0.25], 3)
    f = x ** 3 * y
    dfx = f.d(0)
    assert dfx.order == 2
    assert dfx.value == pytest.approx(3 * 0.25 * 0.25)
    assert dfx.partial((1, 0)) == pytest.approx(6 * 0.5 * 0.25)


def test_solve_matches_numpy():
    x, y = jets.seed_point([0.2, 0.3], 2)
    A = [[2.0 + x, y], [x * y, 3.0 - y]]
    b = [1.0 + x, y * y]
    sol = jets.solve(A, b)
    An = np.array([[2.2, 0.3], [0.06, 2.7]])
    assert np.allclose([s.value for s in sol], np.linalg.solve(An, [1.2, 0.09]))
    # derivative by central differences
    def solve_at(u, v):
        return np.linalg.solve(np.array([[2 + u, v], [u * v, 3 - v]]), [1 + u, v * v])
    h = 1e-6
    fd = (solve_at(0.2 + h, 0.3) - solve_at(0.2 - h, 0.3)) / (2 * h)
    assert np.allclose([s.partial((1, 0)) for s in sol], fd, rtol=1e-7)


def test_numpy_scalars_defer_to_jets():
    (x,) = jets.seed_point([1.0], 1)
    out = np.float64(2.0) * x
    assert isinstance(out, Jet)
    assert out.partial((1,)) == 2.0


@settings(max_examples=60, deadline=None)
@given(a=finite, b=finite, c=st.floats(0.2, 2.0))
def test_quotient_rule(a, b, c):
    x, y = jets.seed_point([a, c], 2)
    f = (x * x + b) / y
    assert f.partial((1, 0)) == pytest.approx(2 * a / c, rel=1e-12, abs=1e-12)
    assert f.partial((0, 1)) == pytest.approx(-(a * a + b) / c ** 2, rel=1e-12, abs=1e-12)
    assert f.partial((1, 1)) == pytest.approx(-2 * a / c ** 2, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.1, 3.0), e=st.floats(-2.5, 2.5))
def test_real_power_derivatives(a, e):
    (x,) = jets.seed_point([a], 3)
    f = jets.pow_real(x, e)
    for k in range(4):
        exact = math.prod(e - j for j in range(k)) * a ** (e - k)
        assert f.partial((k,)) == pytest.approx(exact, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(vals=st.lists(finite, min_size=3, max_size=3))
def test_multiplication_commutes_and_associates(vals):
    x, y, z = jets.seed_point(vals, 3)
    f, g = jets.sin(x) + y, jets.exp(0.3 * z) * x
    assert np.allclose((f * g).c, (g * f).c, atol=1e-13)
    assert np.allclose(((f * g) * y).c, (f * (g * y)).c, atol=1e-12)
