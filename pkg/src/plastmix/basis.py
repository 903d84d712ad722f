"""Polynomial bases on the reference square [-1,1]^2 and Gauss quadrature.

Two basis families are used:

* CONTINUOUS_NODAL -- tensor Gauss-Lobatto-Lagrange nodal basis of degree p,
  used for the displacement space (easy C0 coupling and hanging-node
  constraints).
* GAUSS_LAGRANGE -- tensor Lagrange basis of degree p-1 sitting on the p^2
  Gauss-Legendre points, used for the plastic-strain and multiplier spaces.
  It has the Kronecker property: coefficients equal point values at the
  Gauss points.

Trace-free symmetric 2x2 matrices are represented by two coefficients (a, b)
with respect to E1 = [[1,0],[0,-1]] and E2 = [[0,1],[1,0]]; note
|a E1 + b E2|_F^2 = 2 (a^2 + b^2).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as npoly

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "gauss_lobatto_nodes",
    "lagrange_matrix",
    "ShapeSet",
    "continuous_shape",
    "gauss_shape",
    "DevMatrix2",
    "dev",
    "frobenius",
    "frob_inner",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule with n points per direction."""

    n: int
    nodes: np.ndarray       # (n,) 1D nodes on [-1, 1]
    weights: np.ndarray     # (n,) 1D weights
    points2d: np.ndarray    # (n*n, 2), index k = j*n + i -> (x_i, x_j)
    weights2d: np.ndarray   # (n*n,)


@lru_cache(maxsize=None)
def gauss_rule(n):
    if n < 1:
        raise ValueError("quadrature rule needs at least one point")
    x, w = npleg.leggauss(n)
    pts = np.column_stack([np.tile(x, n), np.repeat(x, n)])
    w2 = np.repeat(w, n) * np.tile(w, n)
    return QuadratureRule(n, x, w, pts, w2)


@lru_cache(maxsize=None)
def gauss_lobatto_nodes(p):
    """p+1 Gauss-Lobatto nodes on [-1, 1] (endpoints included)."""
    if p < 1:
        raise ValueError("degree must be >= 1")
    if p == 1:
        return np.array([-1.0, 1.0])
    # interior nodes are the roots of P_p'
    coef = np.zeros(p + 1)
    coef[p] = 1.0
    interior = npleg.legroots(npleg.legder(coef))
    return np.concatenate([[-1.0], np.sort(interior), [1.0]])


def _lagrange_coeffs(nodes):
    """Monomial coefficients (rows, ascending) of the Lagrange basis."""
    nodes = np.asarray(nodes, dtype=float)
    m = len(nodes)
    coeffs = np.zeros((m, m))
    for i in range(m):
        c = npoly.polyfromroots(np.delete(nodes, i))
        c = c / npoly.polyval(nodes[i], c)
        coeffs[i, : len(c)] = c
    return coeffs


def lagrange_matrix(nodes, x, deriv=0):
    """Values (or derivatives) of the Lagrange basis on `nodes` at `x`.

    Returns an array of shape (len(x), len(nodes)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coeffs = _lagrange_coeffs(nodes)
    for _ in range(deriv):
        reduced = np.zeros((coeffs.shape[0], max(coeffs.shape[1] - 1, 1)))
        for i in range(coeffs.shape[0]):
            d = npoly.polyder(coeffs[i])
            reduced[i, : len(d)] = d
        coeffs = reduced
    vander = npoly.polyvander(x, coeffs.shape[1] - 1)
    return vander @ coeffs.T


class ShapeSet:
    """Tensor-product Lagrange basis on the reference square.

    Local index of basis function (i, j) is j*m + i (x-fastest), matching
    the 2D quadrature point ordering.
    """

    CONTINUOUS_NODAL = "CONTINUOUS_NODAL"
    GAUSS_LAGRANGE = "GAUSS_LAGRANGE"

    def __init__(self, kind, nodes1d):
        self.kind = kind
        self.nodes1d = np.asarray(nodes1d, dtype=float)
        m = len(self.nodes1d)
        self.m = m
        self.ndof = m * m
        self.degree = m - 1
        self._c0 = _lagrange_coeffs(self.nodes1d)
        self._c1 = np.zeros_like(self._c0)
        self._c2 = np.zeros_like(self._c0)
        for i in range(m):
            d1 = npoly.polyder(self._c0[i])
            self._c1[i, : len(d1)] = d1
            if len(d1) > 1:
                d2 = npoly.polyder(d1)
                self._c2[i, : len(d2)] = d2

    @property
    def nodes2d(self):
        x = self.nodes1d
        return np.column_stack([np.tile(x, self.m), np.repeat(x, self.m)])

    def _vals1d(self, x, coeffs):
        vander = npoly.polyvander(np.asarray(x, dtype=float), self.m - 1)
        return vander @ coeffs.T

    def eval(self, points):
        """Basis values at reference points; shape (npts, ndof)."""
        points = np.atleast_2d(points)
        vx = self._vals1d(points[:, 0], self._c0)
        vy = self._vals1d(points[:, 1], self._c0)
        return np.einsum("ki,kj->kji", vx, vy).reshape(len(points), self.ndof)

    def grad(self, points):
        """Reference gradients; shape (npts, ndof, 2)."""
        points = np.atleast_2d(points)
        vx = self._vals1d(points[:, 0], self._c0)
        vy = self._vals1d(points[:, 1], self._c0)
        dx = self._vals1d(points[:, 0], self._c1)
        dy = self._vals1d(points[:, 1], self._c1)
        n = len(points)
        g = np.empty((n, self.ndof, 2))
        g[:, :, 0] = np.einsum("ki,kj->kji", dx, vy).reshape(n, self.ndof)
        g[:, :, 1] = np.einsum("ki,kj->kji", vx, dy).reshape(n, self.ndof)
        return g

    def hess(self, points):
        """Reference second derivatives (xx, xy, yy); shape (npts, ndof, 3)."""
        points = np.atleast_2d(points)
        vx = self._vals1d(points[:, 0], self._c0)
        vy = self._vals1d(points[:, 1], self._c0)
        dx = self._vals1d(points[:, 0], self._c1)
        dy = self._vals1d(points[:, 1], self._c1)
        dxx = self._vals1d(points[:, 0], self._c2)
        dyy = self._vals1d(points[:, 1], self._c2)
        n = len(points)
        h = np.empty((n, self.ndof, 3))
        h[:, :, 0] = np.einsum("ki,kj->kji", dxx, vy).reshape(n, self.ndof)
        h[:, :, 1] = np.einsum("ki,kj->kji", dx, dy).reshape(n, self.ndof)
        h[:, :, 2] = np.einsum("ki,kj->kji", vx, dyy).reshape(n, self.ndof)
        return h


@lru_cache(maxsize=None)
def continuous_shape(p):
    """Degree-p tensor Gauss-Lobatto-Lagrange nodal basis."""
    return ShapeSet(ShapeSet.CONTINUOUS_NODAL, tuple(gauss_lobatto_nodes(p)))


@lru_cache(maxsize=None)
def gauss_shape(p):
    """Degree-(p-1) Lagrange basis at the p Gauss points per direction."""
    return ShapeSet(ShapeSet.GAUSS_LAGRANGE, tuple(gauss_rule(p).nodes))


@dataclass(frozen=True)
class DevMatrix2:
    """Symmetric trace-free 2x2 matrix a*E1 + b*E2."""

    a: float
    b: float

    def matrix(self):
        return np.array([[self.a, self.b], [self.b, -self.a]])

    def frobenius(self):
        return float(np.sqrt(2.0 * (self.a**2 + self.b**2)))


def dev(m, tol=1e-12):
    """Deviatoric part of a symmetric 2x2 matrix in (a, b) coordinates."""
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.max(np.abs(m))))
    if abs(m[0, 1] - m[1, 0]) > tol * scale:
        raise ValueError("input matrix is not symmetric")
    return DevMatrix2(0.5 * (m[0, 0] - m[1, 1]), 0.5 * (m[0, 1] + m[1, 0]))


def frobenius(q):
    if isinstance(q, DevMatrix2):
        return q.frobenius()
    q = np.asarray(q, dtype=float)
    return np.sqrt(2.0 * (q[..., 0] ** 2 + q[..., 1] ** 2))


def frob_inner(q1, q2):
    """Frobenius inner product of two trace-free matrices in coordinates."""
    if isinstance(q1, DevMatrix2):
        q1 = np.array([q1.a, q1.b])
    if isinstance(q2, DevMatrix2):
        q2 = np.array([q2.a, q2.b])
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return 2.0 * (q1[..., 0] * q2[..., 0] + q1[..., 1] * q2[..., 1])
