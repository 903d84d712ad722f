"""Quadrature, Lagrange bases and trace-free matrix coordinates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plastmix.basis import (DevMatrix2, ShapeSet, continuous_shape, dev,
                            frob_inner, frobenius, gauss_lobatto_nodes,
                            gauss_rule, gauss_shape, lagrange_matrix)


# ----------------------------------------------------------------------
# quadrature
# ----------------------------------------------------------------------

@pytest.mark.parametrize("n", range(1, 9))
def test_gauss_rule_exact_for_polynomials(n):
    # an n-point Gauss rule integrates degree 2n-1 exactly on [-1, 1]
    rule = gauss_rule(n)
    for k in range(2 * n):
        exact = 0.0 if k % 2 == 1 else 2.0 / (k + 1)
        val = float(np.sum(rule.weights * rule.nodes**k))
        assert abs(val - exact) < 1e-13


def test_gauss_rule_2d_layout_and_weights():
    rule = gauss_rule(3)
    assert rule.points2d.shape == (9, 2)
    # x-fastest ordering: k = j*n + i -> (x_i, x_j)
    for j in range(3):
        for i in range(3):
            k = j * 3 + i
            assert rule.points2d[k, 0] == rule.nodes[i]
            assert rule.points2d[k, 1] == rule.nodes[j]
            assert rule.weights2d[k] == rule.weights[i] * rule.weights[j]
    assert abs(rule.weights2d.sum() - 4.0) < 1e-14


def test_gauss_rule_2d_exactness():
    rule = gauss_rule(2)
    # integral of x^2 y^2 over the square is (2/3)^2
    val = float(np.sum(rule.weights2d * rule.points2d[:, 0] ** 2
                       * rule.points2d[:, 1] ** 2))
    assert abs(val - 4.0 / 9.0) < 1e-14


def test_gauss_lobatto_known_nodes():
    assert np.allclose(gauss_lobatto_nodes(1), [-1.0, 1.0])
    assert np.allclose(gauss_lobatto_nodes(2), [-1.0, 0.0, 1.0])
    r = 1.0 / np.sqrt(5.0)
    assert np.allclose(gauss_lobatto_nodes(3), [-1.0, -r, r, 1.0])
    s = np.sqrt(3.0 / 7.0)
    assert np.allclose(gauss_lobatto_nodes(4), [-1.0, -s, 0.0, s, 1.0])


# ----------------------------------------------------------------------
# Lagrange matrices
# ----------------------------------------------------------------------

def test_lagrange_matrix_kronecker():
    nodes = gauss_lobatto_nodes(4)
    vals = lagrange_matrix(nodes, nodes)
    assert np.allclose(vals, np.eye(len(nodes)), atol=1e-12)


def test_lagrange_matrix_reproduces_polynomials():
    nodes = gauss_lobatto_nodes(3)
    x = np.linspace(-1, 1, 17)
    vals = lagrange_matrix(nodes, x)
    # interpolation of a cubic is exact
    f = nodes**3 - 2 * nodes + 0.5
    assert np.allclose(vals @ f, x**3 - 2 * x + 0.5, atol=1e-12)


def test_lagrange_matrix_derivative():
    nodes = gauss_lobatto_nodes(3)
    x = np.linspace(-1, 1, 9)
    d1 = lagrange_matrix(nodes, x, deriv=1)
    f = nodes**3 - 2 * nodes + 0.5
    assert np.allclose(d1 @ f, 3 * x**2 - 2, atol=1e-11)
    d2 = lagrange_matrix(nodes, x, deriv=2)
    assert np.allclose(d2 @ f, 6 * x, atol=1e-10)


# ----------------------------------------------------------------------
# shape sets
# ----------------------------------------------------------------------

@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_continuous_shape_partition_of_unity(p):
    shape = continuous_shape(p)
    pts = np.random.default_rng(p).uniform(-1, 1, (20, 2))
    vals = shape.eval(pts)
    assert vals.shape == (20, (p + 1) ** 2)
    assert np.allclose(vals.sum(axis=1), 1.0, atol=1e-12)
    # gradients of a constant field vanish
    assert np.allclose(shape.grad(pts).sum(axis=1), 0.0, atol=1e-11)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_shape_kronecker_at_nodes(p):
    shape = continuous_shape(p)
    vals = shape.eval(shape.nodes2d)
    assert np.allclose(vals, np.eye(shape.ndof), atol=1e-12)
    gs = gauss_shape(p)
    assert gs.degree == p - 1
    assert np.allclose(gs.eval(gs.nodes2d), np.eye(gs.ndof), atol=1e-12)


def test_shape_reproduces_tensor_polynomial():
    shape = continuous_shape(2)
    # f(x, y) = x^2 y - x y^2 + 3 is in the tensor space Q2
    nodes = shape.nodes2d
    f = nodes[:, 0] ** 2 * nodes[:, 1] - nodes[:, 0] * nodes[:, 1] ** 2 + 3.0
    pts = np.random.default_rng(1).uniform(-1, 1, (30, 2))
    got = shape.eval(pts) @ f
    want = pts[:, 0] ** 2 * pts[:, 1] - pts[:, 0] * pts[:, 1] ** 2 + 3.0
    assert np.allclose(got, want, atol=1e-12)
    # exact gradient
    gx = 2 * pts[:, 0] * pts[:, 1] - pts[:, 1] ** 2
    gy = pts[:, 0] ** 2 - 2 * pts[:, 0] * pts[:, 1]
    grads = np.einsum("nmd,m->nd", shape.grad(pts), f)
    assert np.allclose(grads[:, 0], gx, atol=1e-11)
    assert np.allclose(grads[:, 1], gy, atol=1e-11)


def test_shape_hessian():
    shape = continuous_shape(2)
    nodes = shape.nodes2d
    f = nodes[:, 0] ** 2 * nodes[:, 1] + nodes[:, 1] ** 2
    pts = np.random.default_rng(2).uniform(-1, 1, (10, 2))
    h = np.einsum("nmh,m->nh", shape.hess(pts), f)
    assert np.allclose(h[:, 0], 2 * pts[:, 1], atol=1e-11)     # xx
    assert np.allclose(h[:, 1], 2 * pts[:, 0], atol=1e-11)     # xy
    assert np.allclose(h[:, 2], 2.0, atol=1e-11)               # yy


# ----------------------------------------------------------------------
# trace-free matrix coordinates
# ----------------------------------------------------------------------

def test_dev_coordinates():
    m = np.array([[3.0, 1.0], [1.0, -1.0]])
    d = dev(m)
    # dev removes the trace part: m - tr(m)/2 I
    want = m - np.trace(m) / 2.0 * np.eye(2)
    assert np.allclose(d.matrix(), want)
    assert d.a == 2.0 and d.b == 1.0


def test_dev_rejects_asymmetric():
    with pytest.raises(ValueError):
        dev(np.array([[1.0, 2.0], [0.0, -1.0]]))


coeff = st.floats(-50, 50, allow_nan=False)


@given(coeff, coeff)
@settings(max_examples=200, deadline=None)
def test_frobenius_matches_matrix_norm(a, b):
    q = DevMatrix2(a, b)
    assert np.isclose(q.frobenius(), np.linalg.norm(q.matrix(), "fro"),
                      atol=1e-12)


@given(coeff, coeff, coeff, coeff)
@settings(max_examples=200, deadline=None)
def test_frob_inner_matches_contraction(a1, b1, a2, b2):
    q1, q2 = DevMatrix2(a1, b1), DevMatrix2(a2, b2)
    want = float(np.sum(q1.matrix() * q2.matrix()))
    assert np.isclose(frob_inner(q1, q2), want, atol=1e-10)


def test_frobenius_vectorized():
    pairs = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 4.0]])
    want = [np.linalg.norm(DevMatrix2(*ab).matrix(), "fro") for ab in pairs]
    assert np.allclose(frobenius(pairs), want)


def test_shapeset_rejects_trivial():
    s = ShapeSet(ShapeSet.CONTINUOUS_NODAL, [-1.0, 1.0])
    assert s.degree == 1 and s.ndof == 4
