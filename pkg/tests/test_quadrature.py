import math

import numpy as np
import pytest
from scipy.integrate import quad

from telewell import InternalConsistencyError, NonConvergent
from telewell.passage import exit_constants
from telewell.quadrature import (
    Integrand1D,
    Node,
    QuadratureResult,
    integrate_endpoint_singular,
    integrate_iterated,
    integrate_rows,
    integrate_square,
    integrate_triangle,
)


def test_inverse_square_root():
    res = integrate_endpoint_singular(Integrand1D(lambda x: x ** -0.5, 0.0, 1.0, (-0.5, 0.0)), tol=1e-12)
    assert res.value == pytest.approx(2.0, abs=1e-10)
    assert res.error_estimate < 1e-9


def test_constant():
    assert integrate_endpoint_singular(Integrand1D(np.ones_like, 0.0, 1.0)).value == pytest.approx(1.0, abs=1e-14)


def test_empty_interval():
    res = integrate_endpoint_singular(Integrand1D(np.ones_like, 0.3, 0.3))
    assert (res.value, res.error_estimate) == (0.0, 0.0)


def test_offsets_resolve_distance_below_rounding():
    # log(dist) near the right end; anchor + offset rounds to 1 for tiny offsets
    def f(node):
        with np.errstate(divide="ignore"):
            return np.where(node.anchor == 1.0, np.log(np.abs(node.offset)), np.log(1.0 - node.value))

    est, _, _ = integrate_rows(f, [0.0], [1.0], rtol=1e-12)
    assert est[0] == pytest.approx(-1.0, abs=1e-11)


def test_oriented_rows():
    est, _, _ = integrate_rows(lambda n: n.value ** 2, [0.0, 1.0, 2.0], [1.0, 0.0, 2.0], rows=3)
    assert est == pytest.approx([1 / 3, -1 / 3, 0.0], abs=1e-13)


def test_matches_scipy_for_endpoint_singular_integrand():
    f = lambda x: x ** -0.3 * (1 - x) ** 0.7 * np.cos(3 * x)
    ref, _ = quad(
        lambda x: (1 - x) ** 0.7 * math.cos(3 * x), 0, 1, weight="alg", wvar=(-0.3, 0), epsabs=1e-14, epsrel=1e-13)
    res = integrate_endpoint_singular(Integrand1D(f, 0.0, 1.0, (-0.3, 0.7)), tol=1e-12)
    assert res.value == pytest.approx(ref, rel=1e-11)


def test_declared_exponent_checked():
    with pytest.raises(InternalConsistencyError):
        integrate_endpoint_singular(Integrand1D(lambda x: x ** -0.5, 0.0, 1.0, (0.5, 0.0)))
    with pytest.raises(InternalConsistencyError):
        integrate_endpoint_singular(Integrand1D(lambda x: 1 / x, 0.0, 1.0, (-1.0, 0.0)))


def test_nonconvergent():
    wild = lambda x: np.sin(1e4 * x)
    with pytest.raises(NonConvergent):
        integrate_rows(lambda n: wild(n.value), [0.0], [1.0], rtol=1e-14, max_levels=4)


def test_error_estimate_must_be_nonnegative():
    with pytest.raises(InternalConsistencyError):
        QuadratureResult(1.0, -1.0, 3)


def test_triangle_area_and_orientations():
    x, y = 0.2, 1.0
    area = 0.5 * (y - x) ** 2
    assert integrate_triangle(lambda a, b: np.ones(np.broadcast(a, b).shape), x, y).value == pytest.approx(area, rel=1e-12)
    d0 = integrate_triangle(lambda a, b: a * b ** 2, x, y, "delta0").value
    d1 = integrate_triangle(lambda a, b: a * b ** 2, x, y, "delta1").value
    square = integrate_square(lambda a, b: a * b ** 2, x, y, x, y).value
    exact_square = 0.5 * (y ** 2 - x ** 2) * (y ** 3 - x ** 3) / 3
    assert square == pytest.approx(exact_square, rel=1e-12)
    assert d0 + d1 == pytest.approx(exact_square, rel=1e-10)
    # delta0 region: x < a < b < y
    inner = lambda a_val: (y ** 3 - a_val ** 3) / 3
    ref, _ = quad(lambda s: s * inner(s), x, y, epsabs=1e-15)
    assert d0 == pytest.approx(ref, rel=1e-12)


def test_iterated_separable():
    # int_0^1 u du * int_u^2 w dw = int_0^1 u (4 - u^2)/2 du = 1 - 1/8
    res = integrate_iterated(lambda u: u.value, lambda u, w: w.value, [0.0], [1.0], 2.0, tol=1e-12)
    assert res.value == pytest.approx(7 / 8, rel=1e-12)


def test_node_value_and_reshape():
    n = Node(np.array([1.0, 2.0]), np.array([1e-20, -1e-3]))
    assert n.value.tolist() == [1.0, 1.999]
    assert n.reshape(2, 1).shape == (2, 1)
    assert Node.at([0.5]).offset.tolist() == [0.0]


def test_exit_normalizers_match_scipy(reference):
    dyn = reference.dynamics
    B0, B1, shift = exit_constants(reference, tol=1e-12)
    b0, a0 = dyn.regime.regions.g_zero
    f0 = lambda z: math.exp(float(dyn.log_Psi(z)) - shift) / float(dyn.gap(0, z))
    f1 = lambda z: math.exp(float(dyn.log_Psi(z)) - shift) / float(dyn.gap(1, z))
    r0, _ = quad(f0, b0, a0, epsabs=0, epsrel=1e-12, limit=200)
    r1, _ = quad(f1, b0, a0, epsabs=0, epsrel=1e-12, limit=200)
    assert B0.value == pytest.approx(r0, rel=1e-9)
    assert B1.value == pytest.approx(r1, rel=1e-9)
    # the symmetric configuration is its own mirror: B1 = -B0
    assert B1.value == pytest.approx(-B0.value, rel=1e-10)
