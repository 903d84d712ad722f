"""Command-line interface and VTK output."""

import json

import numpy as np
import pytest

from plastmix.cli import main
from plastmix.mesh import build_rectangle_mesh
from plastmix.spaces import DofMap
from plastmix.vtk import write_vtk


def test_cli_run(tmp_path, capsys):
    cfg = {"preset": "BENCHMARK_S6", "mode": "UNIFORM_H", "p": 1,
           "nx": 2, "ny": 2, "levels": 2, "outdir": str(tmp_path / "out")}
    path = tmp_path / "study.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path)]) == 0
    out = capsys.readouterr().out
    assert "EOC(e_u)" in out
    assert (tmp_path / "out" / "record.json").exists()


def test_cli_solve(tmp_path, capsys):
    mesh = build_rectangle_mesh((-1.0, -1.0, 1.0, 1.0), 2, 2, 1,
                                lambda mid: "DIRICHLET"
                                if abs(mid[1] + 1) < 1e-12 else "NEUMANN")
    mpath = tmp_path / "mesh.json"
    mesh.save(mpath)
    assert main(["solve", "--mesh", str(mpath), "--level", "1",
                 "--preset", "BENCHMARK_S6", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "converged: True" in out
    assert "feasible: True" in out
    assert (tmp_path / "fields_L1.vtk").exists()


def test_cli_eoc(tmp_path, capsys):
    rec = {"config": {}, "levels": [
        {"level": 0, "N": 100, "e_u": 1.0, "e_p": 1.0, "e_lambda": 1.0},
        {"level": 1, "N": 400, "e_u": 0.5, "e_p": 0.5, "e_lambda": 0.5}],
        "eoc": {"e_u": {"vs_N": 0.5, "vs_h": 1.0}}}
    path = tmp_path / "record.json"
    path.write_text(json.dumps(rec))
    assert main(["eoc", "--record", str(path)]) == 0
    out = capsys.readouterr().out
    assert "0.50" in out


def test_cli_requires_command(capsys):
    with pytest.raises(SystemExit):
        main([])


def test_vtk_writer_contents(tmp_path, bench_small, bench_small_sol):
    data, mesh, dm, sys = bench_small
    path = tmp_path / "fields.vtk"
    write_vtk(path, mesh, dm, bench_small_sol, magnify=5.0)
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    body = "\n".join(text)
    assert f"POINTS {mesh.n_vertices} double" in body
    assert f"CELLS {mesh.n_elements}" in body
    assert "VECTORS displacement double" in body
    assert "VECTORS displacement_magnified double" in body
    assert "SCALARS p_frobenius double 1" in body
    assert "SCALARS lambda_frobenius double 1" in body
    assert "SCALARS elastic_region int 1" in body
    # magnified vectors are 5x the plain ones
    i = text.index("VECTORS displacement double") + 1
    j = text.index("VECTORS displacement_magnified double") + 1
    v = np.array(text[i].split(), dtype=float)
    vm = np.array(text[j].split(), dtype=float)
    assert np.allclose(vm, 5.0 * v, atol=1e-12)


def test_vtk_elastic_mask(tmp_path, bench_small):
    # the mask threshold is absolute and tiny, so converge the multiplier
    # far enough that the elastic elements carry only roundoff plastic strain
    from plastmix.solver import SolverConfig, solve_uzawa
    data, mesh, dm, sys = bench_small
    sol = solve_uzawa(sys, SolverConfig(eps_out=1e-13))
    path = tmp_path / "fields.vtk"
    write_vtk(path, mesh, dm, sol)
    lines = path.read_text().splitlines()
    k = lines.index("SCALARS elastic_region int 1") + 2
    mask = [int(x) for x in lines[k:k + mesh.n_elements]]
    # the benchmark has both elastic and plastic elements at this level
    assert 0 < sum(mask) < mesh.n_elements
