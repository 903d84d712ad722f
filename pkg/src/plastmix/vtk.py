"""Legacy ASCII VTK output of solution fields on a quad mesh."""

import numpy as np

from .mesh import element_map
from .spaces import eval_u, q_pairs

__all__ = ["write_vtk"]

_REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def write_vtk(path, mesh, dofmap, sol, magnify=10.0,
              elastic_threshold=2.22e-15):
    """Write vertices, quad cells, displacement vectors (plain and
    magnified) and per-cell |p|_F / |lambda|_F with an elastic-region mask."""
    nv = mesh.n_vertices
    ne = mesh.n_elements

    uvert = np.zeros((nv, 2))
    for t in range(ne):
        vals = eval_u(mesh, dofmap, sol.u, t, _REF_CORNERS)
        uvert[mesh.elements[t]] = vals

    w = dofmap.q_weights
    pp = q_pairs(dofmap, sol.p)
    ll = q_pairs(dofmap, sol.lam)
    pn = np.sqrt(2.0 * (pp[:, 0] ** 2 + pp[:, 1] ** 2))
    ln = np.sqrt(2.0 * (ll[:, 0] ** 2 + ll[:, 1] ** 2))
    p_cell = np.zeros(ne)
    l_cell = np.zeros(ne)
    for t in range(ne):
        sl = dofmap.q_slice(t)
        p_cell[t] = pn[sl].max()
        l_cell[t] = ln[sl].max()

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("plastmix fields\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.12g} {y:.12g} 0\n")
        fh.write(f"CELLS {ne} {5 * ne}\n")
        for el in mesh.elements:
            fh.write("4 " + " ".join(str(int(v)) for v in el) + "\n")
        fh.write(f"CELL_TYPES {ne}\n")
        fh.write("9\n" * ne)
        fh.write(f"POINT_DATA {nv}\n")
        fh.write("VECTORS displacement double\n")
        for ux, uy in uvert:
            fh.write(f"{ux:.12g} {uy:.12g} 0\n")
        fh.write("VECTORS displacement_magnified double\n")
        for ux, uy in magnify * uvert:
            fh.write(f"{ux:.12g} {uy:.12g} 0\n")
        fh.write(f"CELL_DATA {ne}\n")
        fh.write("SCALARS p_frobenius double 1\nLOOKUP_TABLE default\n")
        for v in p_cell:
            fh.write(f"{v:.12g}\n")
        fh.write("SCALARS lambda_frobenius double 1\nLOOKUP_TABLE default\n")
        for v in l_cell:
            fh.write(f"{v:.12g}\n")
        fh.write("SCALARS elastic_region int 1\nLOOKUP_TABLE default\n")
        for v in p_cell:
            fh.write(f"{1 if v <= elastic_threshold else 0}\n")
