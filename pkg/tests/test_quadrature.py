import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from langevin_noise.quadrature import QuadratureNotConverged, adaptive_simpson, cumulative, hermite


def test_polynomial_exact():
    assert adaptive_simpson(lambda x: x**3 - 2 * x, 0.0, 2.0) == pytest.approx(0.0, abs=1e-13)


def test_gaussian_against_scipy():
    got = float(adaptive_simpson(lambda x: np.exp(-x * x), -3.0, 1.5))
    want = integrate.quad(lambda x: np.exp(-x * x), -3.0, 1.5, epsabs=1e-14)[0]
    assert got == pytest.approx(want, rel=1e-9)


def test_vectorized_panels():
    a = np.array([0.0, 1.0, 2.0])
    b = a + 1.0
    got = adaptive_simpson(np.sin, a, b)
    assert np.allclose(got, np.cos(a) - np.cos(b), rtol=1e-9)


def test_reversed_limits_change_sign():
    assert float(adaptive_simpson(np.exp, 1.0, 0.0)) == pytest.approx(-(np.e - 1), rel=1e-9)


def test_non_convergence_raises():
    with pytest.raises(QuadratureNotConverged):
        adaptive_simpson(lambda x: np.sign(x - 1 / 3) * np.abs(x - 1 / 3) ** -0.9, 0.0, 1.0, rtol=1e-12, atol=0.0, max_depth=8)


def test_cumulative_matches_closed_form():
    nodes = np.linspace(0.0, 4.0, 33)
    assert np.allclose(cumulative(np.cos, nodes), np.sin(nodes), atol=1e-10)


def test_hermite_reproduces_cubics():
    nodes = np.linspace(-1.0, 2.0, 7)
    r = np.linspace(-1.0, 2.0, 101)
    f = lambda x: 2 * x**3 - x + 1
    df = lambda x: 6 * x**2 - 1
    assert np.allclose(hermite(nodes, f(nodes), df(nodes), r), f(r), atol=1e-12)


@given(st.floats(-5, 5), st.floats(0.01, 5), st.floats(0.1, 3))
def test_linear_in_integrand(a, width, k):
    b = a + width
    one = float(adaptive_simpson(lambda x: np.cos(k * x), a, b))
    two = float(adaptive_simpson(lambda x: 2 * np.cos(k * x), a, b))
    assert two == pytest.approx(2 * one, rel=1e-7, abs=1e-12)
    assert one == pytest.approx((np.sin(k * b) - np.sin(k * a)) / k, rel=1e-7, abs=1e-10)
