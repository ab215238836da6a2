import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import legendre as npleg

from dgblowup.time_basis import (IntervalMap, gauss_legendre, legendre_eval, lifting_Q, lifting_Q_dt,
                                 orthonormal_endpoint_values, orthonormal_values, project_L2_time,
                                 time_derivative_matrix, time_quadrature_size)


def test_legendre_constant():
    assert legendre_eval(0, 0.3) == 1.0


@pytest.mark.parametrize("i", range(8))
def test_legendre_endpoints(i):
    assert legendre_eval(i, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert legendre_eval(i, -1.0) == pytest.approx((-1.0) ** i, abs=1e-15)


def test_legendre_p2_at_zero():
    assert legendre_eval(2, 0.0) == -0.5


@given(st.integers(0, 12), st.floats(-1, 1))
def test_legendre_matches_numpy(i, t):
    coef = np.zeros(i + 1)
    coef[i] = 1.0
    assert legendre_eval(i, t) == pytest.approx(npleg.legval(t, coef), abs=1e-12)


def test_legendre_negative_degree():
    with pytest.raises(ValueError):
        legendre_eval(-1, 0.0)


@pytest.mark.parametrize("r", range(7))
def test_lifting_endpoints(r):
    imap = IntervalMap(0.3, 0.7)
    assert lifting_Q(r, 0.3, imap) == pytest.approx(-1.0, abs=1e-14)
    assert lifting_Q(r, 0.7, imap) == pytest.approx(0.0, abs=1e-14)


def test_lifting_midpoint_r1():
    imap = IntervalMap(0.0, 2.0)
    assert lifting_Q(1, 1.0, imap) == pytest.approx(0.25, abs=1e-15)


@given(st.floats(0.01, 10.0), st.floats(0.0, 1.0))
def test_lifting_derivative_r0(k, s):
    imap = IntervalMap(1.0, 1.0 + k)
    assert lifting_Q_dt(0, 1.0 + s * k, imap) == pytest.approx(1.0 / k, rel=1e-12)


@pytest.mark.parametrize("r", range(6))
def test_lifting_derivative_finite_difference(r):
    imap = IntervalMap(0.2, 0.45)
    for t in np.linspace(0.21, 0.44, 7):
        h = 1e-6
        fd = (lifting_Q(r, t + h, imap) - lifting_Q(r, t - h, imap)) / (2 * h)
        assert lifting_Q_dt(r, t, imap) == pytest.approx(fd, rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("r", range(6))
def test_lifting_orthogonal_to_lower_degrees(r):
    # Q is orthogonal to polynomials of degree < r on the slab
    imap = IntervalMap(0.0, 0.5)
    quad = gauss_legendre(r + 3)
    t = imap.nodes(quad)
    w = imap.weights(quad)
    for j in range(r):
        assert abs(w @ (lifting_Q(r, t, imap) * t**j)) < 1e-14


def test_projection_of_square_r0():
    coef = project_L2_time(lambda t: t * t, 0, IntervalMap(0.0, 1.0), gauss_legendre(3))
    # coefficient against phi_0 = 1 on a unit slab
    assert coef[0] == pytest.approx(1.0 / 3.0, abs=1e-15)


@pytest.mark.parametrize("r", range(5))
def test_projection_reproduces_polynomials(r):
    imap = IntervalMap(-0.3, 0.9)
    quad = gauss_legendre(r + 2)
    poly = np.polynomial.Polynomial(np.arange(1.0, r + 2))
    coef = project_L2_time(poly, r, imap, quad)
    t = np.linspace(-0.3, 0.9, 11)
    assert np.allclose(coef @ orthonormal_values(r, t, imap), poly(t), atol=1e-12)


@pytest.mark.parametrize("r", range(6))
def test_orthonormality(r):
    imap = IntervalMap(0.0, 0.37)
    quad = gauss_legendre(r + 1)
    phi = orthonormal_values(r, imap.nodes(quad), imap)
    gram = (phi * imap.weights(quad)) @ phi.T
    assert np.allclose(gram, np.eye(r + 1), atol=1e-13)


@pytest.mark.parametrize("r", range(6))
def test_endpoint_values(r):
    imap = IntervalMap(1.0, 1.25)
    plus, minus = orthonormal_endpoint_values(r, imap.k)
    assert np.allclose(plus, orthonormal_values(r, [1.0], imap)[:, 0])
    assert np.allclose(minus, orthonormal_values(r, [1.25], imap)[:, 0])


@pytest.mark.parametrize("r", range(6))
def test_derivative_matrix(r):
    k = 0.3
    imap = IntervalMap(0.0, k)
    quad = gauss_legendre(r + 1)
    t = imap.nodes(quad)
    D = time_derivative_matrix(r) / k
    assert np.allclose(np.tril(D), 0.0, atol=1e-13)
    assert np.allclose(D.T @ orthonormal_values(r, t, imap), orthonormal_values(r, t, imap, 1), atol=1e-10)


@pytest.mark.parametrize("r,q", [(0, 1), (1, 2), (2, 2), (3, 3), (2, 4)])
def test_quadrature_size_exact_for_projection(r, q):
    # f(U) has degree q r; its products with phi_r need degree q r + r
    n = time_quadrature_size(r, q)
    assert 2 * n - 1 >= q * r + r


def test_interval_validation():
    with pytest.raises(ValueError):
        IntervalMap(1.0, 1.0)


@settings(max_examples=50)
@given(st.integers(0, 6), st.floats(-1, 1), st.floats(1e-2, 1.0), st.floats(0, 1), st.floats(-1e3, 1e3))
def test_lifting_identity_property(r, t0, k, s, z):
    # z - int_{t0}^{t} Q' z = -Q(t) z
    imap = IntervalMap(t0, t0 + k)
    t = t0 + s * k
    if t <= t0:
        integral = 0.0
    else:
        sub = IntervalMap(t0, t)
        quad = gauss_legendre(r + 2)
        integral = float(sub.weights(quad) @ lifting_Q_dt(r, sub.nodes(quad), imap)) * z
    assert z - integral == pytest.approx(-lifting_Q(r, t, imap) * z, abs=1e-11 * max(1.0, abs(z)))


def test_gauss_rule_exactness():
    q = gauss_legendre(4)
    assert math.isclose(q.weights @ q.points**6, 2.0 / 7.0, rel_tol=1e-14)
    with pytest.raises(ValueError):
        gauss_legendre(0)
