"""Problem presets, overkill references, error norms, EOC studies.

The benchmark problem lives on (-1,1)^2 with homogeneous Dirichlet data on
the bottom edge, traction g = (0, -400 min(0, x^2 - 1/4)^2) on the top edge,
Lame constants 1000, hardening modulus 500 and yield stress 5.  A smooth
manufactured linear-elasticity problem (huge yield stress, plasticity
inactive) provides a clean verification path with known convergence rates.
"""

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .assembly import MaterialParams, ProblemData, assemble, assemble_h1
from .estimator import H_REFINE, P_ENRICH, decide_hp, estimate, mark_dorfler
from .mesh import (DIRICHLET, NEUMANN, Mesh, build_rectangle_mesh,
                   element_map, refine, with_degrees, enrich_degrees)
from .solver import (SolutionTriple, SolverConfig, solve,
                     write_convergence_csv)
from .spaces import DofMap, eval_u, eval_q, pairs_to_q, qnorm
from .vtk import write_vtk

__all__ = [
    "StudyConfig",
    "ConvergenceRecord",
    "benchmark_s6",
    "manufactured_elastic",
    "overkill_reference",
    "prolong_u",
    "prolong_q",
    "error_norms",
    "run_study",
    "compute_eoc",
    "total_dofs",
]


def _bottom_dirichlet(mid):
    return DIRICHLET if abs(mid[1] + 1.0) < 1e-12 else NEUMANN


def benchmark_s6(nx=5, ny=5, p=1):
    """Benchmark data: quartic downward traction on the top edge."""
    mat = MaterialParams(lam=1000.0, mu=1000.0, hardening=500.0, sigma_y=5.0)
    mesh = build_rectangle_mesh((-1.0, -1.0, 1.0, 1.0), nx, ny, p,
                                _bottom_dirichlet)

    def g(points, normals):
        out = np.zeros_like(points)
        mask = np.abs(points[:, 1] - 1.0) < 1e-9
        x = points[mask, 0]
        out[mask, 1] = -400.0 * np.minimum(0.0, x**2 - 0.25) ** 2
        return out

    return ProblemData(material=mat, f=None, g=g), mesh


_MANUFACTURED = None


def _manufactured_callables():
    """Sympy-derived loads for a smooth displacement field (computed once)."""
    global _MANUFACTURED
    if _MANUFACTURED is not None:
        return _MANUFACTURED
    import sympy as sp
    x, y = sp.symbols("x y")
    lam, mu = 1000, 1000
    u1 = sp.sin(sp.pi * x) * (1 + y) / 4
    u2 = sp.cos(sp.pi * x) * (1 + y) ** 2 / 8
    e11 = sp.diff(u1, x)
    e22 = sp.diff(u2, y)
    e12 = (sp.diff(u1, y) + sp.diff(u2, x)) / 2
    tr = e11 + e22
    s11 = lam * tr + 2 * mu * e11
    s22 = lam * tr + 2 * mu * e22
    s12 = 2 * mu * e12
    f1 = -(sp.diff(s11, x) + sp.diff(s12, y))
    f2 = -(sp.diff(s12, x) + sp.diff(s22, y))
    fns = {k: sp.lambdify((x, y), expr, "numpy")
           for k, expr in [("u1", u1), ("u2", u2), ("s11", s11),
                           ("s22", s22), ("s12", s12), ("f1", f1),
                           ("f2", f2)]}
    _MANUFACTURED = fns
    return fns


def manufactured_elastic(nx=4, ny=4, p=1):
    """Smooth elastic verification problem (plasticity never activates)."""
    fns = _manufactured_callables()
    mat = MaterialParams(lam=1000.0, mu=1000.0, hardening=500.0,
                         sigma_y=1e9)
    mesh = build_rectangle_mesh((-1.0, -1.0, 1.0, 1.0), nx, ny, p,
                                _bottom_dirichlet)

    def f(points):
        return np.column_stack([fns["f1"](points[:, 0], points[:, 1]),
                                fns["f2"](points[:, 0], points[:, 1])])

    def g(points, normals):
        s11 = fns["s11"](points[:, 0], points[:, 1])
        s22 = fns["s22"](points[:, 0], points[:, 1])
        s12 = fns["s12"](points[:, 0], points[:, 1])
        return np.column_stack([s11 * normals[:, 0] + s12 * normals[:, 1],
                                s12 * normals[:, 0] + s22 * normals[:, 1]])

    def exact_u(points):
        return np.column_stack([fns["u1"](points[:, 0], points[:, 1]),
                                fns["u2"](points[:, 0], points[:, 1])])

    return ProblemData(material=mat, f=f, g=g, exact_u=exact_u), mesh


@dataclass
class StudyConfig:
    preset: str = "BENCHMARK_S6"       # BENCHMARK_S6 | MANUFACTURED_ELASTIC
    mode: str = "UNIFORM_H"            # UNIFORM_H | UNIFORM_P | ADAPTIVE_H
    #                                  # | ADAPTIVE_HP
    p: int = 1
    nx: int = 5
    ny: int = 5
    levels: int = 4
    theta: float = 0.5
    rho: Optional[float] = None
    eps_out: Optional[float] = None
    algorithm: Optional[str] = None    # default chosen per preset
    max_dofs: int = 200000
    outdir: str = "plastmix_out"
    mesh_file: Optional[str] = None    # overrides the preset's initial mesh
    write_fields: bool = True
    magnify: float = 10.0
    elastic_threshold: float = 2.22e-15
    seed: int = 0

    @classmethod
    def from_file(cls, path):
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ImportError:      # Python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                d = tomllib.load(fh)
        else:
            with open(path) as fh:
                d = json.load(fh)
        return cls(**d)


@dataclass
class ConvergenceRecord:
    config: dict
    levels: list = field(default_factory=list)
    eoc: dict = field(default_factory=dict)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump({"config": self.config, "levels": self.levels,
                       "eoc": self.eoc}, fh, indent=2)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            d = json.load(fh)
        return cls(d["config"], d["levels"], d["eoc"])


def _problem(cfg):
    if cfg.preset == "BENCHMARK_S6":
        data, mesh = benchmark_s6(cfg.nx, cfg.ny, cfg.p)
    elif cfg.preset == "MANUFACTURED_ELASTIC":
        data, mesh = manufactured_elastic(cfg.nx, cfg.ny, cfg.p)
    else:
        raise ValueError(f"unknown preset {cfg.preset!r}")
    if cfg.mesh_file:
        mesh = Mesh.load(cfg.mesh_file)
    return data, mesh


def _solver_config(cfg, data):
    algorithm = cfg.algorithm
    if algorithm is None:
        algorithm = ("SEMISMOOTH_NEWTON"
                     if cfg.preset == "MANUFACTURED_ELASTIC" else "UZAWA")
    eps = cfg.eps_out
    if eps is None and cfg.preset == "MANUFACTURED_ELASTIC":
        # the default tolerance scales with sigma_y, which is huge here
        eps = 1e-7
    return SolverConfig(rho=cfg.rho, eps_out=eps, algorithm=algorithm)


def total_dofs(dofmap):
    """Unknowns of the full triple: free u dofs plus p and lambda."""
    return int(len(dofmap.free) + 4 * dofmap.N_p)


# ----------------------------------------------------------------------
# overkill reference and error norms
# ----------------------------------------------------------------------

def overkill_reference(mesh, data, scfg, cache_dir=None):
    """Reference solve on the uniformly refined mesh with degrees + 1,
    cached to disk by a content hash."""
    rmesh = refine(mesh, range(mesh.n_elements))
    rmesh = with_degrees(rmesh, rmesh.degrees + 1)
    rdm = DofMap(rmesh)
    payload = json.dumps({
        "mesh": rmesh.to_dict(),
        "material": asdict(data.material),
        "solver": [scfg.rho, scfg.eps_out, scfg.algorithm],
    }, sort_keys=True).encode()
    key = hashlib.sha256(payload).hexdigest()[:20]
    path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, f"ref_{key}.npz")
        if os.path.exists(path):
            d = np.load(path)
            sol = SolutionTriple(d["u"], d["p"], d["lam"],
                                 bool(d["converged"]), int(d["iterations"]))
            return rmesh, rdm, sol
    sys = assemble(rmesh, rdm, data)
    sol = solve(sys, scfg)
    if path is not None:
        np.savez(path, u=sol.u, p=sol.p, lam=sol.lam,
                 converged=sol.converged, iterations=sol.iterations)
    return rmesh, rdm, sol


def prolong_u(cmesh, cdm, u, rmesh, rdm):
    """Exact nested prolongation of a displacement field by evaluation at
    the reference mesh's nodal dof positions."""
    pts = rdm.positions
    el = cmesh.locate(pts)
    out = np.zeros((rdm.n_scalar, 2))
    for t in np.unique(el):
        mask = el == t
        ref = element_map(cmesh, int(t)).inverse(pts[mask])
        ref = np.clip(ref, -1.0, 1.0)
        out[mask] = eval_u(cmesh, cdm, u, int(t), ref)
    return out.ravel()


def prolong_q(cmesh, cdm, q, rmesh, rdm):
    pts = rdm.q_points
    el = cmesh.locate(pts)
    out = np.zeros((rdm.N_p, 2))
    for t in np.unique(el):
        mask = el == t
        ref = element_map(cmesh, int(t)).inverse(pts[mask])
        out[mask] = eval_q(cmesh, cdm, q, int(t), ref)
    return pairs_to_q(out)


def error_norms(cmesh, cdm, sol, rmesh, rdm, ref, h1=None):
    """(e_u, e_p, e_lambda) against a reference triple on a finer mesh."""
    if h1 is None:
        h1 = assemble_h1(rmesh, rdm)
    du = prolong_u(cmesh, cdm, sol.u, rmesh, rdm) - ref.u
    e_u = float(np.sqrt(max(du @ (h1 @ du), 0.0)))
    dp = prolong_q(cmesh, cdm, sol.p, rmesh, rdm) - ref.p
    e_p = qnorm(rdm, dp)
    dl = prolong_q(cmesh, cdm, sol.lam, rmesh, rdm) - ref.lam
    e_l = qnorm(rdm, dl)
    return e_u, e_p, e_l


def compute_eoc(ns, errors, window=3):
    """Least-squares slope of log(e) vs log(N) over the last `window`
    levels, negated (EOC with respect to dofs)."""
    pts = [(n, e) for n, e in zip(ns, errors) if e > 0]
    pts = pts[-window:]
    if len(pts) < 2:
        return float("nan")
    ln = np.log([p[0] for p in pts])
    le = np.log([p[1] for p in pts])
    return float(-np.polyfit(ln, le, 1)[0])


def _centroid_key(mesh, t):
    c = mesh.centroid(t)
    return (round(float(c[0]), 9), round(float(c[1]), 9))


def run_study(cfg):
    os.makedirs(cfg.outdir, exist_ok=True)
    data, mesh = _problem(cfg)
    scfg = _solver_config(cfg, data)
    np.random.seed(cfg.seed)

    level_meshes, level_dms, level_sols, level_etas, level_secs = \
        [], [], [], [], []
    history = {}
    for lvl in range(cfg.levels):
        dm = DofMap(mesh)
        if level_meshes and total_dofs(dm) > cfg.max_dofs:
            break
        t0 = time.perf_counter()
        sys = assemble(mesh, dm, data)
        sol = solve(sys, scfg)
        report = estimate(mesh, dm, data, sol)
        secs = time.perf_counter() - t0
        level_meshes.append(mesh)
        level_dms.append(dm)
        level_sols.append(sol)
        level_etas.append(report.eta)
        level_secs.append(secs)
        write_convergence_csv(sol.log,
                              os.path.join(cfg.outdir,
                                           f"solver_L{lvl}.csv"))
        report.to_csv(os.path.join(cfg.outdir, f"estimator_L{lvl}.csv"))
        if cfg.write_fields:
            write_vtk(os.path.join(cfg.outdir, f"fields_L{lvl}.vtk"),
                      mesh, dm, sol, magnify=cfg.magnify,
                      elastic_threshold=cfg.elastic_threshold)
        if lvl == cfg.levels - 1:
            break
        ind = report.local_indicators()
        if cfg.mode == "UNIFORM_H":
            mesh = refine(mesh, range(mesh.n_elements))
        elif cfg.mode == "UNIFORM_P":
            mesh = with_degrees(mesh, mesh.degrees + 1)
        elif cfg.mode == "ADAPTIVE_H":
            mesh = refine(mesh, mark_dorfler(ind, cfg.theta))
        elif cfg.mode == "ADAPTIVE_HP":
            for t in range(mesh.n_elements):
                history.setdefault(_centroid_key(mesh, t), []).append(
                    (int(mesh.degrees[t]), float(ind[t])))
            marked = mark_dorfler(ind, cfg.theta)
            hist = {t: history.get(_centroid_key(mesh, t), [])
                    for t in marked}
            actions = decide_hp(hist, marked, mesh, dm, sol.u)
            penrich = {t for t, a in actions.items() if a == P_ENRICH}
            hrefine = {t for t, a in actions.items() if a == H_REFINE}
            if penrich:
                mesh = enrich_degrees(mesh, penrich)
            mesh = refine(mesh, hrefine)
        else:
            raise ValueError(f"unknown mode {cfg.mode!r}")

    rmesh, rdm, ref = overkill_reference(level_meshes[-1], data, scfg,
                                         os.path.join(cfg.outdir, "refcache"))
    h1 = assemble_h1(rmesh, rdm)

    record = ConvergenceRecord(config=asdict(cfg))
    ns, eus, eps_, els = [], [], [], []
    for lvl, (m, dmm, s) in enumerate(zip(level_meshes, level_dms,
                                          level_sols)):
        e_u, e_p, e_l = error_norms(m, dmm, s, rmesh, rdm, ref, h1)
        n = total_dofs(dmm)
        ns.append(n)
        eus.append(e_u)
        eps_.append(e_p)
        els.append(e_l)
        record.levels.append({
            "level": lvl, "N": n, "e_u": e_u, "e_p": e_p, "e_lambda": e_l,
            "eta": level_etas[lvl], "seconds": level_secs[lvl],
        })
    for name, errs in [("e_u", eus), ("e_p", eps_), ("e_lambda", els)]:
        eoc_n = compute_eoc(ns, errs)
        record.eoc[name] = {"vs_N": eoc_n, "vs_h": 2.0 * eoc_n}

    with open(os.path.join(cfg.outdir, "convergence.csv"), "w") as fh:
        fh.write("level,N,e_u,e_p,e_lambda,eta,seconds\n")
        for row in record.levels:
            fh.write("{level},{N},{e_u:.12e},{e_p:.12e},{e_lambda:.12e},"
                     "{eta:.12e},{seconds:.3f}\n".format(**row))
    record.to_json(os.path.join(cfg.outdir, "record.json"))
    return record
