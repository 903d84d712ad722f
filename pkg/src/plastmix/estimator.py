"""Residual a posteriori error estimator and adaptive marking.

Total estimator:

    eta^2 = sum_T eta_T^2 + sum_e eta_e^2 + sum_e eta_{e,N}^2
            + ||dev(sigma(u,p) - H p) - lam||_0^2
            + ||lam - mu*||_0^2 + [(sigma_y, |p|_F)_0 - (mu*, p)_0]

with eta_T^2 = (h_T^2/p_T^2) ||f + div sigma||_T^2, interior-edge jumps
eta_e^2 = (h_e/p_e) ||[sigma n]||_e^2 and Neumann mismatches
eta_{e,N}^2 = (h_e/p_e) ||sigma n - g||_e^2.  The cut-off multiplier is
mu* = min{1, sigma_y/|mu^|_F} mu^ with mu^ = lam + p/2.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from .assembly import psi_hp
from .basis import continuous_shape, gauss_rule, gauss_shape, lagrange_matrix
from .mesh import NEUMANN, element_map, _key
from .spaces import (eval_q, grad_q, grad_u, pairs_to_q, project_onto_lambda,
                     q_pairs)

__all__ = [
    "EstimatorReport",
    "estimate",
    "cutoff_mu_star",
    "mark_dorfler",
    "decide_hp",
    "H_REFINE",
    "P_ENRICH",
]

H_REFINE = "H_REFINE"
P_ENRICH = "P_ENRICH"


@dataclass
class EstimatorReport:
    eta_T2: np.ndarray                 # per element
    interior_edges: list               # (elem_a, elem_b, eta_e^2, key)
    neumann_edges: list                # (elem, eta_eN^2, key)
    consistency2: float
    cutoff2: float
    bracket: float
    total2: float = field(init=False)

    def __post_init__(self):
        self.total2 = (float(np.sum(self.eta_T2))
                       + sum(v for _, _, v, _ in self.interior_edges)
                       + sum(v for _, v, _ in self.neumann_edges)
                       + self.consistency2 + self.cutoff2 + self.bracket)

    @property
    def eta(self):
        return float(np.sqrt(max(self.total2, 0.0)))

    def local_indicators(self):
        """Per-element markers: element term plus half of each edge term
        (Neumann edges have a single adjacent element and count fully)."""
        ind = self.eta_T2.copy()
        for ta, tb, v, _ in self.interior_edges:
            ind[ta] += 0.5 * v
            ind[tb] += 0.5 * v
        for t, v, _ in self.neumann_edges:
            ind[t] += v
        return ind

    def to_csv(self, path):
        import csv
        ind = self.local_indicators()
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["element", "eta_T2", "indicator2"])
            for t in range(len(self.eta_T2)):
                wr.writerow([t, self.eta_T2[t], ind[t]])
            wr.writerow(["consistency2", self.consistency2, ""])
            wr.writerow(["cutoff2", self.cutoff2, ""])
            wr.writerow(["bracket", self.bracket, ""])
            wr.writerow(["total2", self.total2, ""])


def _sigma_at(mesh, dofmap, data, sol, t, ref_pts):
    """Full stress tensor components (s11, s22, s12) at reference points."""
    mat = data.material
    gu = grad_u(mesh, dofmap, sol.u, t, ref_pts)
    c = eval_q(mesh, dofmap, sol.p, t, ref_pts)   # (n, 2): p11 = a, p12 = b
    div = gu[:, 0, 0] + gu[:, 1, 1]
    s11 = mat.lam * div + 2 * mat.mu * gu[:, 0, 0] - 2 * mat.mu * c[:, 0]
    s22 = mat.lam * div + 2 * mat.mu * gu[:, 1, 1] + 2 * mat.mu * c[:, 0]
    s12 = mat.mu * (gu[:, 0, 1] + gu[:, 1, 0]) - 2 * mat.mu * c[:, 1]
    return s11, s22, s12


def _div_sigma(mesh, dofmap, data, sol, t, ref_pts):
    """Divergence of the discrete stress (exact differentiation)."""
    mat = data.material
    emap = element_map(mesh, t)
    if not emap.is_affine:
        raise NotImplementedError("eta_T needs affine elements")
    jinv = np.linalg.inv(emap.jacobian(ref_pts[:1]))[0]   # constant

    p = int(mesh.degrees[t])
    shape = continuous_shape(p)
    loc = dofmap.elem_C[t] @ sol.u.reshape(-1, 2)[dofmap.elem_masters[t]]
    href = shape.hess(ref_pts)                   # (n, m, 3): xx, xy, yy
    # physical second derivatives via the constant chain rule
    hu = np.einsum("nmh,mc->nch", href, loc)     # (n, 2comp, 3)

    def h_phys(h, i, j):
        # d^2/dx_i dx_j = sum_{a,b} Jinv[a,i] Jinv[b,j] d^2/dxi_a dxi_b
        hxx, hxy, hyy = h[..., 0], h[..., 1], h[..., 2]
        return (jinv[0, i] * jinv[0, j] * hxx
                + (jinv[0, i] * jinv[1, j] + jinv[1, i] * jinv[0, j]) * hxy
                + jinv[1, i] * jinv[1, j] * hyy)

    ux_xx = h_phys(hu[:, 0], 0, 0)
    ux_xy = h_phys(hu[:, 0], 0, 1)
    ux_yy = h_phys(hu[:, 0], 1, 1)
    uy_xx = h_phys(hu[:, 1], 0, 0)
    uy_xy = h_phys(hu[:, 1], 0, 1)
    uy_yy = h_phys(hu[:, 1], 1, 1)
    gq = grad_q(mesh, dofmap, sol.p, t, ref_pts)  # (n, 2coord, 2deriv)
    pa_x, pa_y = gq[:, 0, 0], gq[:, 0, 1]
    pb_x, pb_y = gq[:, 1, 0], gq[:, 1, 1]
    lam, mu = mat.lam, mat.mu
    div1 = (lam * (ux_xx + uy_xy) + 2 * mu * ux_xx - 2 * mu * pa_x
            + mu * (ux_yy + uy_xy) - 2 * mu * pb_y)
    div2 = (mu * (ux_xy + uy_xx) - 2 * mu * pb_x
            + lam * (ux_xy + uy_yy) + 2 * mu * uy_yy + 2 * mu * pa_y)
    return np.column_stack([div1, div2])


def _edge_points(mesh, key, n1d):
    """Quadrature points/weights on a straight mesh edge given by vertex ids."""
    s, w1 = npleg.leggauss(n1d)
    a, b = key
    xa, xb = mesh.vertices[a], mesh.vertices[b]
    pts = xa + 0.5 * (s[:, None] + 1.0) * (xb - xa)
    length = float(np.linalg.norm(xb - xa))
    tang = (xb - xa) / length
    normal = np.array([tang[1], -tang[0]])
    return pts, 0.5 * length * w1, normal, length


def _sigma_n_on(mesh, dofmap, data, sol, t, pts, normal):
    emap = element_map(mesh, t)
    ref = emap.inverse(pts)
    s11, s22, s12 = _sigma_at(mesh, dofmap, data, sol, t, ref)
    return np.column_stack([s11 * normal[0] + s12 * normal[1],
                            s12 * normal[0] + s22 * normal[1]])


def estimate(mesh, dofmap, data, sol):
    mat = data.material
    ne = mesh.n_elements

    # element residuals
    eta_t2 = np.zeros(ne)
    consistency2 = 0.0
    for t in range(ne):
        p = int(mesh.degrees[t])
        rule = gauss_rule(p + 2)
        emap = element_map(mesh, t)
        w = rule.weights2d * np.abs(emap.det(rule.points2d))
        div = _div_sigma(mesh, dofmap, data, sol, t, rule.points2d)
        r = div.copy()
        if data.f is not None:
            r += np.asarray(data.f(emap.map_points(rule.points2d)))
        ht = mesh.element_size(t)
        eta_t2[t] = (ht**2 / p**2) * float(np.sum(w * np.sum(r**2, axis=1)))

        # consistency term: dev(sigma - H p) - lam, in (a, b) coordinates
        gu = grad_u(mesh, dofmap, sol.u, t, rule.points2d)
        cp = eval_q(mesh, dofmap, sol.p, t, rule.points2d)
        cl = eval_q(mesh, dofmap, sol.lam, t, rule.points2d)
        dev_a = mat.mu * (gu[:, 0, 0] - gu[:, 1, 1])
        dev_b = mat.mu * (gu[:, 0, 1] + gu[:, 1, 0])
        ra = dev_a - (2 * mat.mu + mat.hardening) * cp[:, 0] - cl[:, 0]
        rb = dev_b - (2 * mat.mu + mat.hardening) * cp[:, 1] - cl[:, 1]
        consistency2 += float(np.sum(w * 2.0 * (ra**2 + rb**2)))

    # edge residuals
    interior = []
    neumann = []
    seen = set()
    for key, own in mesh.facet_owners.items():
        if key in seen:
            continue
        tag = mesh.boundary_tags.get(key)
        if tag is not None:
            if tag != NEUMANN:
                continue
            t = own[0][0]
            pe = int(mesh.degrees[t])
            pts, wts, normal, length = _edge_points(mesh, key, pe + 2)
            # orient outward
            if np.dot(normal, pts.mean(axis=0) - mesh.centroid(t)) < 0:
                normal = -normal
            sn = _sigma_n_on(mesh, dofmap, data, sol, t, pts, normal)
            gv = (np.asarray(data.g(pts, np.tile(normal, (len(pts), 1))))
                  if data.g is not None else np.zeros_like(sn))
            val = (length / pe) * float(np.sum(wts * np.sum((sn - gv)**2,
                                                            axis=1)))
            neumann.append((t, val, key))
            continue
        if key in mesh.parent_mid:
            continue          # handled from the fine halves
        if key in mesh.half_parent:
            # hanging interface: fine element vs coarse element's trace
            tf = own[0][0]
            pk = mesh.half_parent[key]
            tc = mesh.facet_owners[pk][0][0]
            pe = max(int(mesh.degrees[tf]), int(mesh.degrees[tc]))
            pts, wts, normal, length = _edge_points(mesh, key, pe + 2)
            jump = (_sigma_n_on(mesh, dofmap, data, sol, tf, pts, normal)
                    - _sigma_n_on(mesh, dofmap, data, sol, tc, pts, normal))
            val = (length / pe) * float(np.sum(wts * np.sum(jump**2, axis=1)))
            interior.append((tf, tc, val, key))
            seen.add(key)
            continue
        if len(own) == 2:
            ta, tb = own[0][0], own[1][0]
            pe = max(int(mesh.degrees[ta]), int(mesh.degrees[tb]))
            pts, wts, normal, length = _edge_points(mesh, key, pe + 2)
            jump = (_sigma_n_on(mesh, dofmap, data, sol, ta, pts, normal)
                    - _sigma_n_on(mesh, dofmap, data, sol, tb, pts, normal))
            val = (length / pe) * float(np.sum(wts * np.sum(jump**2, axis=1)))
            interior.append((ta, tb, val, key))

    # cut-off terms (Q-space quantities; the diagonal quadrature inner
    # product is exact for these polynomial integrands on affine elements)
    mustar = cutoff_mu_star(sol, mat.sigma_y, dofmap)
    w = dofmap.q_weights
    dl = q_pairs(dofmap, sol.lam - mustar)
    cutoff2 = float(np.sum(2.0 * w * (dl[:, 0] ** 2 + dl[:, 1] ** 2)))
    pp = q_pairs(dofmap, sol.p)
    ms = q_pairs(dofmap, mustar)
    bracket = (psi_hp(sol.p, dofmap, mat.sigma_y)
               - float(np.sum(2.0 * w * (ms[:, 0] * pp[:, 0]
                                         + ms[:, 1] * pp[:, 1]))))
    return EstimatorReport(eta_t2, interior, neumann, consistency2, cutoff2,
                           bracket)


def cutoff_mu_star(sol, sigma_y, dofmap):
    """mu* = min{1, sigma_y / |mu^|_F} mu^ with mu^ = lam + p/2."""
    return project_onto_lambda(sol.lam + 0.5 * sol.p, dofmap, sigma_y)


def mark_dorfler(indicators, theta):
    """Minimal-cardinality greedy marking: smallest set carrying a theta^2
    fraction of the total squared indicator."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must be in (0, 1]")
    indicators = np.asarray(indicators, dtype=float)
    total = float(indicators.sum())
    if total <= 0.0:
        return set()
    order = np.argsort(indicators)[::-1]
    marked = set()
    acc = 0.0
    target = theta**2 * total
    for t in order:
        if indicators[t] <= 0.0:
            break
        marked.add(int(t))
        acc += indicators[t]
        if acc >= target * (1.0 - 1e-12):
            break
    return marked


def _legendre_smooth(mesh, dofmap, u, t):
    """Crude local smoothness test: decay of the highest Legendre
    coefficients of the displacement on the element."""
    p = int(mesh.degrees[t])
    if p < 2:
        return False
    shape = continuous_shape(p)
    loc = dofmap.elem_C[t] @ u.reshape(-1, 2)[dofmap.elem_masters[t]]
    nodes = shape.nodes1d
    v1 = npleg.legvander(nodes, p)
    trans = np.linalg.inv(np.kron(v1, v1))   # nodal -> tensor Legendre
    # nodal ordering is x-fastest (j*m+i); kron(v1, v1) row j*m+i matches it
    coef = trans @ loc                        # ((p+1)^2, 2)
    mag = np.linalg.norm(coef, axis=1)
    deg_sum = (np.arange(p + 1)[:, None] + np.arange(p + 1)[None, :]).ravel()
    top = mag[deg_sum >= p].max()
    return top <= 0.1 * max(mag.max(), 1e-300)


def decide_hp(history, marked, mesh=None, dofmap=None, u=None, delta=0.5):
    """Choose between H_REFINE and P_ENRICH for each marked element.

    `history` maps an element key to a list of (degree, indicator) samples
    from previous levels (may be empty / missing: cold start).  An element
    whose indicator decayed by the factor `delta` under the last p-increase
    is p-enriched; otherwise a Legendre-coefficient decay test of the local
    displacement decides; the default is H_REFINE.
    """
    actions = {}
    for t in marked:
        samples = history.get(t, [])
        action = H_REFINE
        if len(samples) >= 2:
            (deg_prev, ind_prev), (deg_cur, ind_cur) = samples[-2], samples[-1]
            if deg_cur > deg_prev and ind_cur <= delta * ind_prev > 0:
                action = P_ENRICH
        if action == H_REFINE and mesh is not None and u is not None:
            if _legendre_smooth(mesh, dofmap, u, t):
                action = P_ENRICH
        actions[t] = action
    return actions
