"""Assembly of the saddle-point system and of the discrete energy.

Block structure (Q-space layout from `spaces`):

    [ K   B^T ] [u]   [ F  ]
    [ B   D   ] [p] + [ M lam ] = 0-row for the second line

with K the elasticity stiffness, B the coupling -(C eps(u), q),
D = ((C + H) p, q) and M the multiplier mass (lam, q).  On the trace-free
space C acts as multiplication by 2*mu, so D and M are diagonal in the
Gauss-Lagrange basis: D = (2*mu + h0) * diag(2w), M = diag(2w).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from . import kernels
from .basis import continuous_shape, gauss_rule, gauss_shape
from .mesh import LOCAL_EDGES, element_map, NEUMANN
from .spaces import q_pairs

__all__ = [
    "MaterialParams",
    "ProblemData",
    "SaddleSystem",
    "assemble",
    "assemble_h1",
    "psi_hp",
    "psi_exact",
    "energy",
    "export_matrix_market",
]


@dataclass(frozen=True)
class MaterialParams:
    lam: float          # first Lame constant
    mu: float           # second Lame constant (shear modulus)
    hardening: float    # hardening modulus h0
    sigma_y: float      # yield stress

    def __post_init__(self):
        if self.mu <= 0 or self.lam < 0:
            raise ValueError("need mu > 0 and lam >= 0")
        if self.hardening <= 0 or self.sigma_y <= 0:
            raise ValueError("need hardening > 0 and sigma_y > 0")


@dataclass
class ProblemData:
    material: MaterialParams
    f: Optional[Callable] = None   # f(points) -> (n, 2) volume load
    g: Optional[Callable] = None   # g(points, normals) -> (n, 2) traction
    exact_u: Optional[Callable] = None  # optional, for verification


@dataclass
class SaddleSystem:
    K: sp.csr_matrix            # (2Ns, 2Ns)
    B: sp.csr_matrix            # (2Np, 2Ns)
    dvals: np.ndarray           # diagonal of D, (2Np,)
    mvals: np.ndarray           # diagonal of M, (2Np,)
    F: np.ndarray               # (2Ns,)
    free: np.ndarray            # free (non-Dirichlet) vector dof indices
    material: MaterialParams
    domain_area: float
    mesh: object = field(repr=False, default=None)
    dofmap: object = field(repr=False, default=None)
    _schur_lu: object = field(repr=False, default=None, compare=False)


def _elasticity_local(wq, gphys, lam, mu):
    """Local vector stiffness for (C eps(u), eps(v)); interleaved dofs."""
    gx = gphys[:, :, 0]
    gy = gphys[:, :, 1]
    axx = np.einsum("q,qm,qn->mn", wq, gx, gx)
    ayy = np.einsum("q,qm,qn->mn", wq, gy, gy)
    axy = np.einsum("q,qm,qn->mn", wq, gx, gy)
    kxx = (lam + 2 * mu) * axx + mu * ayy
    kyy = (lam + 2 * mu) * ayy + mu * axx
    kxy = lam * axy + mu * axy.T
    m = gx.shape[1]
    k = np.zeros((2 * m, 2 * m))
    k[0::2, 0::2] = kxx
    k[0::2, 1::2] = kxy
    k[1::2, 0::2] = kxy.T
    k[1::2, 1::2] = kyy
    return k


def _edge_quadrature(emap, le, n1d):
    """Points, weights and outward normals for a boundary edge integral."""
    s, w1 = npleg.leggauss(n1d)
    if le == 0:
        ref = np.column_stack([s, -np.ones_like(s)])
        col, sign = 0, 1.0
    elif le == 1:
        ref = np.column_stack([np.ones_like(s), s])
        col, sign = 1, 1.0
    elif le == 2:
        ref = np.column_stack([s, np.ones_like(s)])
        col, sign = 0, -1.0
    else:
        ref = np.column_stack([-np.ones_like(s), s])
        col, sign = 1, -1.0
    jac = emap.jacobian(ref)
    tang = sign * jac[:, :, col]
    lens = np.linalg.norm(tang, axis=1)
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / lens[:, None]
    return ref, w1 * lens, normals


def assemble(mesh, dofmap, data):
    mat = data.material
    lam, mu, h0 = mat.lam, mat.mu, mat.hardening
    ns2 = 2 * dofmap.n_scalar
    n = dofmap.N_p
    w = dofmap.q_weights
    mvals = 2.0 * np.concatenate([w, w])
    dvals = (2 * mu + h0) * mvals
    F = np.zeros(ns2)
    krows, kcols, kvals = [], [], []
    brows, bcols, bvals = [], [], []
    eye2 = np.eye(2)

    for t in range(mesh.n_elements):
        p = int(mesh.degrees[t])
        emap = element_map(mesh, t)
        shape = continuous_shape(p)
        masters = dofmap.elem_masters[t]
        cv = np.kron(dofmap.elem_C[t], eye2)
        gv = (2 * masters[:, None] + np.array([0, 1])).ravel()

        # stiffness
        quad = gauss_rule(p + 1)
        jinv = np.linalg.inv(emap.jacobian(quad.points2d))
        gphys = np.einsum("qmd,qdk->qmk", shape.grad(quad.points2d), jinv)
        wq = quad.weights2d * np.abs(emap.det(quad.points2d))
        kred = cv.T @ _elasticity_local(wq, gphys, lam, mu) @ cv
        krows.append(np.repeat(gv, len(gv)))
        kcols.append(np.tile(gv, len(gv)))
        kvals.append(kred.ravel())

        # coupling B at the Q-space Gauss points (Kronecker structure)
        qr = gauss_rule(p)
        jinvq = np.linalg.inv(emap.jacobian(qr.points2d))
        gq = np.einsum("qmd,qdk->qmk", shape.grad(qr.points2d), jinvq)
        wk = w[dofmap.q_slice(t)]
        nq = p * p
        m = shape.ndof
        bloc = np.zeros((2 * nq, 2 * m))
        bloc[:nq, 0::2] = -2 * mu * wk[:, None] * gq[:, :, 0]
        bloc[:nq, 1::2] = +2 * mu * wk[:, None] * gq[:, :, 1]
        bloc[nq:, 0::2] = -2 * mu * wk[:, None] * gq[:, :, 1]
        bloc[nq:, 1::2] = -2 * mu * wk[:, None] * gq[:, :, 0]
        bred = bloc @ cv
        qrows = np.arange(dofmap.q_offset[t], dofmap.q_offset[t] + nq)
        qrows = np.concatenate([qrows, n + qrows])
        brows.append(np.repeat(qrows, len(gv)))
        bcols.append(np.tile(gv, 2 * nq))
        bvals.append(bred.ravel())

        # volume load
        if data.f is not None:
            qf = gauss_rule(p + 3)
            vals = shape.eval(qf.points2d)
            wf = qf.weights2d * np.abs(emap.det(qf.points2d))
            fv = np.asarray(data.f(emap.map_points(qf.points2d)))
            floc = np.zeros(2 * m)
            floc[0::2] = vals.T @ (wf * fv[:, 0])
            floc[1::2] = vals.T @ (wf * fv[:, 1])
            np.add.at(F, gv, cv.T @ floc)

        # surface load on Neumann edges
        if data.g is not None:
            for le in range(4):
                if mesh.boundary_tags.get(mesh.facet_key(t, le)) != NEUMANN:
                    continue
                ref, dsw, normals = _edge_quadrature(emap, le, p + 4)
                vals = shape.eval(ref)
                gvalues = np.asarray(data.g(emap.map_points(ref), normals))
                floc = np.zeros(2 * m)
                floc[0::2] = vals.T @ (dsw * gvalues[:, 0])
                floc[1::2] = vals.T @ (dsw * gvalues[:, 1])
                np.add.at(F, gv, cv.T @ floc)

    K = sp.coo_matrix((np.concatenate(kvals),
                       (np.concatenate(krows), np.concatenate(kcols))),
                      shape=(ns2, ns2)).tocsr()
    B = sp.coo_matrix((np.concatenate(bvals),
                       (np.concatenate(brows), np.concatenate(bcols))),
                      shape=(2 * n, ns2)).tocsr()
    return SaddleSystem(K=K, B=B, dvals=dvals, mvals=mvals, F=F,
                        free=dofmap.free, material=mat,
                        domain_area=mesh.domain_area,
                        mesh=mesh, dofmap=dofmap)


def assemble_h1(mesh, dofmap):
    """Vector H1 matrix: (v, v)_0 + (eps(v), eps(v))_0."""
    ns2 = 2 * dofmap.n_scalar
    rows, cols, vals = [], [], []
    eye2 = np.eye(2)
    for t in range(mesh.n_elements):
        p = int(mesh.degrees[t])
        emap = element_map(mesh, t)
        shape = continuous_shape(p)
        quad = gauss_rule(p + 1)
        jinv = np.linalg.inv(emap.jacobian(quad.points2d))
        gphys = np.einsum("qmd,qdk->qmk", shape.grad(quad.points2d), jinv)
        wq = quad.weights2d * np.abs(emap.det(quad.points2d))
        # strain seminorm == elasticity form with lam = 0, mu = 1/2
        k = _elasticity_local(wq, gphys, 0.0, 0.5)
        v = shape.eval(quad.points2d)
        mloc = np.einsum("q,qm,qn->mn", wq, v, v)
        k[0::2, 0::2] += mloc
        k[1::2, 1::2] += mloc
        cv = np.kron(dofmap.elem_C[t], eye2)
        kred = cv.T @ k @ cv
        masters = dofmap.elem_masters[t]
        gv = (2 * masters[:, None] + np.array([0, 1])).ravel()
        rows.append(np.repeat(gv, len(gv)))
        cols.append(np.tile(gv, len(gv)))
        vals.append(kred.ravel())
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(ns2, ns2)).tocsr()


def psi_hp(q, dofmap, sigma_y):
    """Discretized plasticity functional: quadrature of sigma_y * |q|_F
    (midpoint rule on degree-1 elements, Gauss rule otherwise)."""
    pairs = np.ascontiguousarray(q_pairs(dofmap, q))
    return sigma_y * kernels.weighted_frobenius_sum(pairs, dofmap.q_weights)


def psi_exact(q, mesh, dofmap, sigma_y, oversample=None):
    """Oversampled-quadrature approximation of the continuous functional."""
    from .spaces import eval_q
    total = 0.0
    for t in range(mesh.n_elements):
        p = int(mesh.degrees[t])
        nq = max(p + 2, oversample or 0)
        rule = gauss_rule(nq)
        emap = element_map(mesh, t)
        w = rule.weights2d * np.abs(emap.det(rule.points2d))
        c = eval_q(mesh, dofmap, q, t, rule.points2d)
        total += float(np.sum(w * np.sqrt(2.0 * (c[:, 0] ** 2 + c[:, 1] ** 2))))
    return sigma_y * total


def energy(u, p, sys, sigma_y=None):
    """Discrete energy 1/2 a((u,p),(u,p)) + psi_hp(p) - l(u)."""
    if sigma_y is None:
        sigma_y = sys.material.sigma_y
    quad = 0.5 * (u @ (sys.K @ u) + 2.0 * (p @ (sys.B @ u))
                  + p @ (sys.dvals * p))
    return float(quad + psi_hp(p, sys.dofmap, sigma_y) - sys.F @ u)


def export_matrix_market(sys, directory):
    """Debug export of the assembled blocks in Matrix Market format."""
    import os
    from scipy.io import mmwrite
    os.makedirs(directory, exist_ok=True)
    mmwrite(os.path.join(directory, "K.mtx"), sys.K)
    mmwrite(os.path.join(directory, "B.mtx"), sys.B)
    mmwrite(os.path.join(directory, "D.mtx"), sp.diags(sys.dvals))
    mmwrite(os.path.join(directory, "M.mtx"), sp.diags(sys.mvals))
    np.savetxt(os.path.join(directory, "F.txt"), sys.F)
