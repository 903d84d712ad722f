"""Command-line interface.

    plastmix run --config study.toml      # convergence study
    plastmix solve --mesh m.json --level N  # single solve on a mesh file
    plastmix eoc --record out/record.json   # print EOC table
"""

import argparse
import json
import os
import sys as _sys

import numpy as np


def _cmd_run(args):
    from .study import StudyConfig, run_study
    cfg = StudyConfig.from_file(args.config)
    if args.outdir:
        cfg.outdir = args.outdir
    record = run_study(cfg)
    print("level        N          e_u          e_p     e_lambda"
          "          eta   seconds")
    for row in record.levels:
        print(f"{row['level']:5d} {row['N']:8d} {row['e_u']:12.4e} "
              f"{row['e_p']:12.4e} {row['e_lambda']:12.4e} "
              f"{row['eta']:12.4e} {row['seconds']:9.2f}")
    for name, e in record.eoc.items():
        print(f"EOC({name}): vs dofs {e['vs_N']:.3f}   vs h {e['vs_h']:.3f}")
    print(f"outputs written to {cfg.outdir}")
    return 0


def _cmd_solve(args):
    from .assembly import assemble, psi_hp
    from .mesh import Mesh, refine
    from .solver import SolverConfig, solve
    from .spaces import DofMap, lambda_feasible, qinner
    from .study import benchmark_s6, manufactured_elastic
    from .vtk import write_vtk

    if args.preset == "BENCHMARK_S6":
        data, _ = benchmark_s6()
    else:
        data, _ = manufactured_elastic()
    mesh = Mesh.load(args.mesh)
    for _ in range(args.level):
        mesh = refine(mesh, range(mesh.n_elements))
    dm = DofMap(mesh)
    sys = assemble(mesh, dm, data)
    cfg = SolverConfig(algorithm=args.algorithm)
    sol = solve(sys, cfg)
    feas, viol, _ = lambda_feasible(sol.lam, dm, data.material.sigma_y)
    comp = abs(psi_hp(sol.p, dm, data.material.sigma_y)
               - qinner(dm, sol.lam, sol.p))
    print(f"elements: {mesh.n_elements}, converged: {sol.converged} "
          f"after {sol.iterations} iterations ({sol.algorithm})")
    print(f"multiplier feasible: {feas} (violation {viol:.3e}); "
          f"complementarity gap {comp:.3e}")
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"fields_L{args.level}.vtk")
    write_vtk(path, mesh, dm, sol)
    print(f"fields written to {path}")
    return 0


def _cmd_eoc(args):
    with open(args.record) as fh:
        rec = json.load(fh)
    levels = rec["levels"]
    names = ["e_u", "e_p", "e_lambda"]
    print("level        N" + "".join(f"{n:>14}" for n in names))
    prev = None
    for row in levels:
        line = f"{row['level']:5d} {row['N']:8d}"
        for n in names:
            line += f" {row[n]:13.4e}"
        if prev is not None:
            eocs = []
            for n in names:
                if row[n] > 0 and prev[n] > 0:
                    e = -(np.log(row[n]) - np.log(prev[n])) / \
                        (np.log(row["N"]) - np.log(prev["N"]))
                    eocs.append(f"{e:5.2f}")
                else:
                    eocs.append("  n/a")
            line += "   eoc: " + " ".join(eocs)
        print(line)
        prev = row
    for name, e in rec.get("eoc", {}).items():
        print(f"EOC({name}) over last levels: vs dofs {e['vs_N']:.3f}   "
              f"vs h {e['vs_h']:.3f}")
    return 0


def main(argv=None):
    # honor the thread cap before heavy numeric work starts
    nthreads = os.environ.get("PLASTMIX_THREADS")
    if nthreads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, nthreads)
        try:
            import numba
            numba.set_num_threads(int(nthreads))
        except (ImportError, ValueError):
            pass

    parser = argparse.ArgumentParser(prog="plastmix")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a convergence study")
    p_run.add_argument("--config", required=True,
                       help="study config (.toml or .json)")
    p_run.add_argument("--outdir", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_solve = sub.add_parser("solve", help="solve on a mesh file")
    p_solve.add_argument("--mesh", required=True, help="mesh JSON file")
    p_solve.add_argument("--level", type=int, default=0,
                         help="uniform refinements before solving")
    p_solve.add_argument("--preset", default="BENCHMARK_S6",
                         choices=["BENCHMARK_S6", "MANUFACTURED_ELASTIC"])
    p_solve.add_argument("--algorithm", default="UZAWA",
                         choices=["UZAWA", "SEMISMOOTH_NEWTON"])
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=_cmd_solve)

    p_eoc = sub.add_parser("eoc", help="print EOC table from a record")
    p_eoc.add_argument("--record", required=True, help="record.json path")
    p_eoc.set_defaults(func=_cmd_eoc)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    _sys.exit(main())
