"""Global degree-of-freedom management for the three discrete spaces.

* Displacement space: continuous, vector-valued, tensor Gauss-Lobatto nodal
  basis of per-element degree p_T.  Hanging-node and degree-transition
  constraints are eliminated by expressing every local node value as a linear
  combination of master dofs (per-element constraint matrix C_T).
* Plastic-strain and multiplier spaces: discontinuous, trace-free-matrix
  valued, Gauss-Lagrange basis of degree p_T - 1 per element.  Coefficients
  equal point values at the p_T^2 Gauss points; both spaces share one layout.

Q-space coefficient vectors have length 2*N_p: the first N_p entries are the
E1-coordinates (a), the last N_p the E2-coordinates (b), elementwise
contiguous within each half.
"""

import numpy as np

from . import kernels
from .basis import (continuous_shape, gauss_lobatto_nodes, gauss_rule,
                    gauss_shape, lagrange_matrix)
from .mesh import LOCAL_EDGES, _key, element_map, DIRICHLET

__all__ = [
    "DofMap",
    "q_pairs",
    "pairs_to_q",
    "qnorm",
    "qinner",
    "eval_u",
    "grad_u",
    "eval_q",
    "grad_q",
    "l2_project",
    "gauss_interpolate",
    "lambda_feasible",
    "project_onto_lambda",
]


class _Entity:
    """A master edge: carries the trace dofs shared by its neighbors."""

    __slots__ = ("pe", "va", "vb", "xa", "xb", "dofs")

    def __init__(self, pe, va, vb, xa, xb, dofs):
        self.pe = pe
        self.va = va
        self.vb = vb
        self.xa = xa
        self.xb = xb
        self.dofs = dofs


def _edge_nodes01(pe):
    return (gauss_lobatto_nodes(pe) + 1.0) / 2.0


class DofMap:
    def __init__(self, mesh):
        self.mesh = mesh
        self._build_scalar()
        self._build_q()

    # ------------------------------------------------------------------
    # displacement (scalar component) dofs
    # ------------------------------------------------------------------

    def _build_scalar(self):
        mesh = self.mesh
        positions = []
        dirichlet = []

        def new_dof(pos, diri=False):
            positions.append(np.asarray(pos, dtype=float))
            dirichlet.append(diri)
            return len(positions) - 1

        # vertex dofs (hanging vertices are constrained, not dofs)
        vert_dof = {}
        diri_vertices = set()
        for (a, b), tag in mesh.boundary_tags.items():
            if tag == DIRICHLET:
                diri_vertices.add(a)
                diri_vertices.add(b)
        for v in range(mesh.n_vertices):
            if v in mesh.hanging:
                continue
            vert_dof[v] = new_dof(mesh.vertices[v], v in diri_vertices)

        # edge entities
        entities = {}
        for key, own in mesh.facet_owners.items():
            if key in mesh.half_parent:
                continue
            degs = [int(mesh.degrees[t]) for t, _ in own]
            if key in mesh.parent_mid:
                vm = mesh.parent_mid[key]
                a, b = key
                for half in (_key(a, vm), _key(vm, b)):
                    degs += [int(mesh.degrees[t])
                             for t, _ in mesh.facet_owners[half]]
            pe = min(degs)
            va, vb = key
            xa, xb = mesh.vertices[va], mesh.vertices[vb]
            diri = mesh.boundary_tags.get(key) == DIRICHLET
            dofs = []
            if pe >= 2:
                for s in _edge_nodes01(pe)[1:-1]:
                    dofs.append(new_dof(xa + s * (xb - xa), diri))
            entities[key] = _Entity(pe, va, vb, xa, xb,
                                    np.array(dofs, dtype=np.int64))

        self._entities = entities

        # vertex resolution with memoization (handles hanging chains)
        memo = {}

        def resolve_vertex(v):
            if v in memo:
                return memo[v]
            if v in vert_dof:
                comb = {vert_dof[v]: 1.0}
            else:
                a, b = mesh.hanging[v]
                comb = entity_eval(entities[_key(a, b)], 0.5)
            memo[v] = comb
            return comb

        def entity_eval(ent, t):
            weights = lagrange_matrix(_edge_nodes01(ent.pe), [t])[0]
            comb = {}

            def add(sub, w):
                if abs(w) < 1e-12:
                    return
                for d, wd in sub.items():
                    comb[d] = comb.get(d, 0.0) + w * wd

            add(resolve_vertex(ent.va), weights[0])
            add(resolve_vertex(ent.vb), weights[-1])
            for j, d in enumerate(ent.dofs):
                w = weights[1 + j]
                if abs(w) >= 1e-12:
                    comb[int(d)] = comb.get(int(d), 0.0) + w
            return _clean(comb)

        def _clean(comb):
            comb = {d: w for d, w in comb.items() if abs(w) > 1e-12}
            for d, w in comb.items():
                if abs(w - 1.0) < 1e-9 and \
                        sum(abs(x) for dd, x in comb.items() if dd != d) < 1e-9:
                    return {d: 1.0}
            return comb

        # per-element constraint matrices
        elem_masters = []
        elem_C = []
        for t in range(mesh.n_elements):
            p = int(mesh.degrees[t])
            el = mesh.elements[t]
            emap = element_map(mesh, t)
            g = gauss_lobatto_nodes(p)
            m = p + 1
            rows = []
            for j in range(m):
                for i in range(m):
                    if 0 < i < p and 0 < j < p:
                        d = new_dof(emap.map_points([[g[i], g[j]]])[0])
                        rows.append({d: 1.0})
                        continue
                    corner = {(0, 0): 0, (p, 0): 1, (p, p): 2, (0, p): 3}.get(
                        (i, j))
                    if corner is not None:
                        rows.append(resolve_vertex(int(el[corner])))
                        continue
                    if j == 0:
                        le = 0
                    elif i == p:
                        le = 1
                    elif j == p:
                        le = 2
                    else:
                        le = 3
                    key = mesh.facet_key(t, le)
                    key = mesh.half_parent.get(key, key)
                    ent = entities[key]
                    pos = emap.map_points([[g[i], g[j]]])[0]
                    seg = ent.xb - ent.xa
                    tpar = float(np.dot(pos - ent.xa, seg) / np.dot(seg, seg))
                    rows.append(entity_eval(ent, tpar))
            masters = sorted(set().union(*[r.keys() for r in rows]))
            midx = {d: c for c, d in enumerate(masters)}
            C = np.zeros((len(rows), len(masters)))
            for r, comb in enumerate(rows):
                for d, w in comb.items():
                    C[r, midx[d]] = w
            elem_masters.append(np.array(masters, dtype=np.int64))
            elem_C.append(C)

        self.n_scalar = len(positions)
        self.positions = np.array(positions)
        self.dirichlet = np.array(dirichlet, dtype=bool)
        self.elem_masters = elem_masters
        self.elem_C = elem_C
        free_scalar = np.nonzero(~self.dirichlet)[0]
        self.free = np.sort(np.concatenate([2 * free_scalar,
                                            2 * free_scalar + 1]))

    # ------------------------------------------------------------------
    # plastic strain / multiplier dofs
    # ------------------------------------------------------------------

    def _build_q(self):
        mesh = self.mesh
        offsets = [0]
        pts = []
        wts = []
        for t in range(mesh.n_elements):
            p = int(mesh.degrees[t])
            rule = gauss_rule(p)
            emap = element_map(mesh, t)
            pts.append(emap.map_points(rule.points2d))
            # for p=1 this reduces to the midpoint rule with weight |T|,
            # since det of a bilinear map is linear on the reference square
            wts.append(rule.weights2d * np.abs(emap.det(rule.points2d)))
            offsets.append(offsets[-1] + rule.n * rule.n)
        self.q_offset = np.array(offsets, dtype=np.int64)
        self.N_p = int(offsets[-1])
        self.q_points = np.vstack(pts)
        self.q_weights = np.concatenate(wts)

    def q_slice(self, t):
        return slice(int(self.q_offset[t]), int(self.q_offset[t + 1]))


# ----------------------------------------------------------------------
# coefficient helpers
# ----------------------------------------------------------------------

def q_pairs(dofmap, q):
    n = dofmap.N_p
    return np.column_stack((q[:n], q[n:]))


def pairs_to_q(pairs):
    return np.concatenate((pairs[:, 0], pairs[:, 1]))


def qnorm(dofmap, q):
    return float(np.sqrt(kernels.qnorm_sq(q_pairs(dofmap, q),
                                          dofmap.q_weights)))


def qinner(dofmap, q1, q2):
    n = dofmap.N_p
    w = dofmap.q_weights
    return float(np.sum(2.0 * w * (q1[:n] * q2[:n] + q1[n:] * q2[n:])))


# ----------------------------------------------------------------------
# field evaluation
# ----------------------------------------------------------------------

def _u_local(dofmap, u, t):
    u2 = u.reshape(-1, 2)
    return dofmap.elem_C[t] @ u2[dofmap.elem_masters[t]]


def eval_u(mesh, dofmap, u, t, ref_pts):
    loc = _u_local(dofmap, u, t)
    shape = continuous_shape(int(mesh.degrees[t]))
    return shape.eval(ref_pts) @ loc


def grad_u(mesh, dofmap, u, t, ref_pts):
    """Physical gradients du_c/dx_k; shape (npts, 2, 2)."""
    loc = _u_local(dofmap, u, t)
    shape = continuous_shape(int(mesh.degrees[t]))
    gref = shape.grad(ref_pts)                      # (n, m, 2)
    emap = element_map(mesh, t)
    jinv = np.linalg.inv(emap.jacobian(ref_pts))    # (n, 2, 2)
    gu = np.einsum("nmd,mc->ncd", gref, loc)
    return np.einsum("ncd,ndk->nck", gu, jinv)


def eval_q(mesh, dofmap, q, t, ref_pts):
    """Q-field coefficients (a, b) at reference points; shape (npts, 2)."""
    sl = dofmap.q_slice(t)
    shape = gauss_shape(int(mesh.degrees[t]))
    vals = shape.eval(ref_pts)
    n = dofmap.N_p
    return np.column_stack((vals @ q[:n][sl], vals @ q[n:][sl]))


def grad_q(mesh, dofmap, q, t, ref_pts):
    """Physical gradients of (a, b); shape (npts, 2coord, 2deriv)."""
    sl = dofmap.q_slice(t)
    shape = gauss_shape(int(mesh.degrees[t]))
    gref = shape.grad(ref_pts)
    emap = element_map(mesh, t)
    jinv = np.linalg.inv(emap.jacobian(ref_pts))
    n = dofmap.N_p
    loc = np.column_stack((q[:n][sl], q[n:][sl]))
    gq = np.einsum("nmd,mc->ncd", gref, loc)
    return np.einsum("ncd,ndk->nck", gq, jinv)


# ----------------------------------------------------------------------
# projection / interpolation / feasibility
# ----------------------------------------------------------------------

def l2_project(func, mesh, dofmap):
    """L2-projection of a matrix field (given in (a, b) coordinates) onto the
    discontinuous Q-space; elevated quadrature of degree p_T + 2."""
    out = np.zeros(2 * dofmap.N_p)
    n = dofmap.N_p
    for t in range(mesh.n_elements):
        p = int(mesh.degrees[t])
        rule = gauss_rule(p + 2)
        emap = element_map(mesh, t)
        w = rule.weights2d * np.abs(emap.det(rule.points2d))
        vals = gauss_shape(p).eval(rule.points2d)     # (nq, nloc)
        f = np.asarray(func(emap.map_points(rule.points2d)))
        mass = vals.T @ (w[:, None] * vals)
        sol = np.linalg.solve(mass, vals.T @ (w[:, None] * f))
        sl = dofmap.q_slice(t)
        out[:n][sl] = sol[:, 0]
        out[n:][sl] = sol[:, 1]
    return out


def gauss_interpolate(func, mesh, dofmap):
    """Interpolation at the Gauss points (midpoint for p_T = 1)."""
    f = np.asarray(func(dofmap.q_points))
    return np.concatenate((f[:, 0], f[:, 1]))


def lambda_feasible(q, dofmap, sigma_y, tol=1e-10):
    """Check |q|_F <= sigma_y at every Gauss point.

    Returns (feasible, worst violation, location of the worst point).
    """
    pairs = q_pairs(dofmap, q)
    norms = np.sqrt(2.0 * (pairs[:, 0] ** 2 + pairs[:, 1] ** 2))
    k = int(np.argmax(norms))
    viol = max(0.0, float(norms[k] - sigma_y))
    return viol <= tol, viol, dofmap.q_points[k]


def project_onto_lambda(q, dofmap, sigma_y):
    """Pointwise radial scaling onto the discrete multiplier set."""
    pairs = np.ascontiguousarray(q_pairs(dofmap, q))
    return pairs_to_q(kernels.radial_project(pairs, sigma_y))
