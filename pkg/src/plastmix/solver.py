"""Solvers for the discrete mixed elastoplasticity problem.

The linear block

    [ K   B^T ] [u]   [  F      ]
    [ B   D   ] [p] = [ -M lam  ]

is solved through the Schur complement K - B^T D^{-1} B (D is diagonal),
factorized once per system.  The Uzawa outer loop updates the multiplier by
lam <- Proj(lam + rho * p) with the pointwise radial projection; the
semismooth Newton solver linearizes the same projection on active/inactive
Gauss-point sets.  A small-scale proximal-gradient energy minimizer serves
as an independent oracle for tests.
"""

import csv
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, eigsh, spilu, splu

from .assembly import assemble_h1, energy
from .spaces import pairs_to_q, project_onto_lambda, q_pairs, qnorm

__all__ = [
    "SolverConfig",
    "SolutionTriple",
    "solve",
    "solve_uzawa",
    "solve_ssn",
    "solve_oracle",
    "infsup_constant",
    "write_convergence_csv",
]


@dataclass
class SolverConfig:
    rho: Optional[float] = None        # Uzawa step; defaults to h0
    eps_out: Optional[float] = None    # tolerance on the Q-norm of the update
    max_outer: int = 5000
    inner: str = "direct"              # "direct" | "cg"
    algorithm: str = "UZAWA"           # "UZAWA" | "SEMISMOOTH_NEWTON"
    newton_max: int = 60
    lam0: Optional[np.ndarray] = None


@dataclass
class SolutionTriple:
    u: np.ndarray            # full displacement vector (Dirichlet zeros kept)
    p: np.ndarray            # plastic strain coefficients (2 Np)
    lam: np.ndarray          # multiplier coefficients (2 Np)
    converged: bool
    iterations: int
    log: list = field(default_factory=list)  # (iteration, residual, energy)
    algorithm: str = "UZAWA"


def _resolve(sys, cfg):
    cfg = cfg or SolverConfig()
    rho = cfg.rho if cfg.rho is not None else sys.material.hardening
    eps = cfg.eps_out
    if eps is None:
        eps = 1e-9 * sys.material.sigma_y * np.sqrt(sys.domain_area)
    return cfg, rho, eps


class _InnerSolver:
    """Factorize-once solver for the SPD linear block at fixed multiplier."""

    def __init__(self, sys, inner="direct"):
        free = sys.free
        self.Kff = sys.K[free][:, free].tocsc()
        self.Bf = sys.B[:, free].tocsr()
        self.d = sys.dvals
        self.m = sys.mvals
        self.Ff = sys.F[free]
        schur = (self.Kff - self.Bf.T @ (sp.diags(1.0 / self.d) @ self.Bf))
        schur = schur.tocsc()
        if inner == "direct":
            # symmetric-pattern minimum degree keeps the LU fill moderate
            self._lu = splu(schur, permc_spec="MMD_AT_PLUS_A")
            self._solve = self._lu.solve
        else:
            ilu = spilu(schur, drop_tol=1e-5, fill_factor=20)
            prec = LinearOperator(schur.shape, ilu.solve)

            def _cgsolve(rhs):
                x, info = cg(schur, rhs, rtol=1e-12, atol=0.0, M=prec,
                             maxiter=10000)
                if info != 0:
                    raise RuntimeError(f"inner CG failed (info={info})")
                return x

            self._solve = _cgsolve

    def solve(self, lam):
        rhs = self.Ff + self.Bf.T @ (self.m * lam / self.d)
        uf = self._solve(rhs)
        p = -(self.m * lam + self.Bf @ uf) / self.d
        return uf, p


def _inner(sys, cfg):
    if sys._schur_lu is None or sys._schur_lu[0] != cfg.inner:
        sys._schur_lu = (cfg.inner, _InnerSolver(sys, cfg.inner))
    return sys._schur_lu[1]


def _embed(sys, uf):
    u = np.zeros(sys.K.shape[0])
    u[sys.free] = uf
    return u


def solve(sys, cfg=None):
    cfg = cfg or SolverConfig()
    if cfg.algorithm == "SEMISMOOTH_NEWTON":
        return solve_ssn(sys, cfg)
    return solve_uzawa(sys, cfg)


def solve_uzawa(sys, cfg=None):
    cfg, rho, eps = _resolve(sys, cfg)
    dofmap = sys.dofmap
    sigma_y = sys.material.sigma_y
    inner = _inner(sys, cfg)
    lam = np.zeros(len(sys.dvals)) if cfg.lam0 is None else cfg.lam0.copy()
    log = []
    converged = False
    res0 = None
    it = 0
    for it in range(1, cfg.max_outer + 1):
        uf, p = inner.solve(lam)
        lam_new = project_onto_lambda(lam + rho * p, dofmap, sigma_y)
        res = qnorm(dofmap, lam_new - lam)
        log.append((it, res, energy(_embed(sys, uf), p, sys)))
        lam = lam_new
        if res <= eps:
            converged = True
            break
        if res0 is None:
            res0 = res
        elif it > 20 and res > 100.0 * res0:
            warnings.warn("Uzawa iteration appears to diverge; "
                          "returning best iterate")
            break
    if not converged and it == cfg.max_outer:
        warnings.warn("Uzawa reached the iteration limit before the "
                      "requested tolerance")
    # final consistent state: (u, p) solve the linear block at the final
    # (feasible) multiplier, so B u + D p + M lam = 0 holds exactly
    uf, p = inner.solve(lam)
    return SolutionTriple(_embed(sys, uf), p, lam, converged, it, log,
                          "UZAWA")


def _projection_blocks(z_pairs, sigma_y):
    """Projection values and generalized derivative per Gauss point."""
    nrm = np.sqrt(2.0 * (z_pairs[:, 0] ** 2 + z_pairs[:, 1] ** 2))
    active = nrm > sigma_y
    pi = z_pairs.copy()
    scale = np.ones_like(nrm)
    scale[active] = sigma_y / nrm[active]
    pi *= scale[:, None]
    # derivative: identity when inactive, scaled tangential projector when
    # active: (sigma_y / |z|_F) (I - zhat zhat^T)
    p00 = np.ones_like(nrm)
    p01 = np.zeros_like(nrm)
    p11 = np.ones_like(nrm)
    if np.any(active):
        za = z_pairs[active]
        r2 = za[:, 0] ** 2 + za[:, 1] ** 2
        s = scale[active]
        p00[active] = s * (1.0 - za[:, 0] ** 2 / r2)
        p01[active] = s * (-za[:, 0] * za[:, 1] / r2)
        p11[active] = s * (1.0 - za[:, 1] ** 2 / r2)
    return pi, p00, p01, p11


def _block2_matrix(npts, p00, p01, p11):
    """Sparse (2Np, 2Np) matrix acting blockwise on (a, b) pairs."""
    k = np.arange(npts)
    rows = np.concatenate([k, k, npts + k, npts + k])
    cols = np.concatenate([k, npts + k, k, npts + k])
    vals = np.concatenate([p00, p01, p01, p11])
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(2 * npts, 2 * npts)).tocsr()


def solve_ssn(sys, cfg=None):
    cfg, rho, eps = _resolve(sys, cfg)
    dofmap = sys.dofmap
    sigma_y = sys.material.sigma_y
    mat = sys.material
    free = sys.free
    Kff = sys.K[free][:, free].tocsr()
    Bf = sys.B[:, free].tocsr()
    m = sys.mvals
    Ff = sys.F[free]
    npts = dofmap.N_p
    mu2h = 2 * mat.mu + mat.hardening
    fscale = max(1.0, float(np.linalg.norm(Ff)))

    uf = np.zeros(len(free))
    p = np.zeros(2 * npts)
    log = []
    converged = False

    def residuals(uf, p):
        lam = -(Bf @ uf + sys.dvals * p) / m
        z = lam + rho * p
        pi, p00, p01, p11 = _projection_blocks(q_pairs(dofmap, z), sigma_y)
        g3 = lam - pairs_to_q(pi)
        g1 = Kff @ uf + Bf.T @ p - Ff
        res = np.linalg.norm(g1) / fscale + qnorm(dofmap, g3)
        return lam, g1, g3, res, (p00, p01, p11)

    lam, g1, g3, res, blocks = residuals(uf, p)
    it = 0
    for it in range(1, cfg.newton_max + 1):
        log.append((it, res, energy(_embed(sys, uf), p, sys)))
        if res <= eps:
            converged = True
            break
        pmat = _block2_matrix(npts, *blocks)
        imp = sp.identity(2 * npts, format="csr") - pmat
        a21 = -(imp @ (sp.diags(1.0 / m) @ Bf))
        a22 = -(mu2h * imp + rho * pmat)
        amat = sp.bmat([[Kff, Bf.T], [a21, a22]], format="csc")
        rhs = -np.concatenate([g1, g3])
        try:
            delta = splu(amat, permc_spec="MMD_AT_PLUS_A").solve(rhs)
        except RuntimeError:
            break
        du, dp = delta[: len(free)], delta[len(free):]
        step = 1.0
        accepted = False
        for _ in range(10):
            lam2, g1n, g3n, resn, blocksn = residuals(uf + step * du,
                                                      p + step * dp)
            if resn < res or resn <= eps:
                uf, p = uf + step * du, p + step * dp
                lam, g1, g3, res, blocks = lam2, g1n, g3n, resn, blocksn
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    if not converged:
        warnings.warn("semismooth Newton did not converge; "
                      "falling back to the Uzawa solver")
        fallback = SolverConfig(rho=cfg.rho, eps_out=cfg.eps_out,
                                max_outer=cfg.max_outer, inner=cfg.inner)
        tri = solve_uzawa(sys, fallback)
        tri.algorithm = "SEMISMOOTH_NEWTON+UZAWA_FALLBACK"
        tri.log = log + tri.log
        return tri
    # feasible multiplier + consistent linear state at that multiplier
    lam_out = project_onto_lambda(lam + rho * p, dofmap, sigma_y)
    uf, p = _inner(sys, cfg).solve(lam_out)
    return SolutionTriple(_embed(sys, uf), p, lam_out, converged, it, log,
                          "SEMISMOOTH_NEWTON")


def solve_oracle(sys, tol=1e-8, max_iter=500000):
    """Proximal-gradient (accelerated, with restart) minimizer of the
    discrete energy.  Intended for small systems; returns (u, p, certificate).
    """
    dofmap = sys.dofmap
    sigma_y = sys.material.sigma_y
    free = sys.free
    Kff = sys.K[free][:, free].tocsr()
    Bf = sys.B[:, free].tocsr()
    npts = dofmap.N_p
    nf = len(free)
    amat = sp.bmat([[Kff, Bf.T], [Bf, sp.diags(sys.dvals)]], format="csr")
    rhs = np.concatenate([sys.F[free], np.zeros(2 * npts)])
    if amat.shape[0] > 2000:
        warnings.warn("oracle solver called on a large system; "
                      "this will be slow")
    lip = float(eigsh(amat, k=1, which="LA", tol=1e-4,
                      return_eigenvectors=False)[0]) * 1.01
    w = dofmap.q_weights
    kappa = (sigma_y * np.sqrt(2.0) * w) / lip   # prox threshold per point
    scale = max(1.0, float(np.linalg.norm(rhs)))

    def prox(x):
        c = x[nf:].reshape(2, npts).T
        cn = np.sqrt(c[:, 0] ** 2 + c[:, 1] ** 2)
        fac = np.maximum(0.0, 1.0 - kappa / np.maximum(cn, 1e-300))
        x[nf:] = (c * fac[:, None]).T.ravel()
        return x

    def certificate(x):
        g = amat @ x - rhs
        ru = g[:nf]
        gp = g[nf:].reshape(2, npts).T
        c = x[nf:].reshape(2, npts).T
        cn = np.sqrt(c[:, 0] ** 2 + c[:, 1] ** 2)
        thr = sigma_y * np.sqrt(2.0) * w
        r = np.empty(npts)
        on = cn > 1e-14 * max(1.0, cn.max() if npts else 1.0)
        sub = gp[on] + thr[on, None] * c[on] / cn[on, None]
        r[on] = np.linalg.norm(sub, axis=1)
        gn = np.linalg.norm(gp[~on], axis=1)
        r[~on] = np.maximum(0.0, gn - thr[~on])
        return float(np.sqrt(np.linalg.norm(ru) ** 2 + np.sum(r**2)))

    x = np.zeros(amat.shape[0])
    y = x.copy()
    tk = 1.0
    cert = np.inf
    for it in range(1, max_iter + 1):
        xn = prox(y - (amat @ y - rhs) / lip)
        if np.dot(y - xn, xn - x) > 0.0:   # gradient restart
            tk = 1.0
            y = xn.copy()
        else:
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = xn + ((tk - 1.0) / tn) * (xn - x)
            tk = tn
        x = xn
        if it % 100 == 0:
            cert = certificate(x)
            if cert <= tol * scale:
                break
    u = _embed(sys, x[:nf])
    p = x[nf:].copy()
    return u, p, cert


def infsup_constant(sys, dofmap):
    """Discrete inf-sup constant of the multiplier coupling, computed from a
    dense generalized eigenvalue problem in the norm ||v||_1^2 + ||q||_0^2."""
    free = sys.free
    h1 = assemble_h1(sys.mesh, dofmap)
    nmat = h1[free][:, free].toarray()
    mq = np.diag(sys.mvals)
    nf = nmat.shape[0]
    nq = mq.shape[0]
    amat = np.zeros((nf + nq, nf + nq))
    amat[:nf, :nf] = nmat
    amat[nf:, nf:] = mq
    ainv = np.linalg.inv(amat)
    smat = mq @ ainv[nf:, nf:] @ mq
    eigs = sla.eigh(smat, mq, eigvals_only=True)
    return float(np.sqrt(max(eigs.min(), 0.0)))


def write_convergence_csv(log, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "residual", "energy"])
        for row in log:
            wr.writerow(row)
