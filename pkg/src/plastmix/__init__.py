"""plastmix: hp mixed finite elements for one pseudo-time step of
elastoplasticity with linear kinematic hardening."""

import os as _os

# honor PLASTMIX_THREADS as early as possible
_nthreads = _os.environ.get("PLASTMIX_THREADS")
if _nthreads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _nthreads)
    try:
        import numba as _numba
        _numba.set_num_threads(int(_nthreads))
    except (ImportError, ValueError):
        pass

__version__ = "0.1.0"

from .basis import (DevMatrix2, QuadratureRule, ShapeSet, continuous_shape,
                    dev, frob_inner, frobenius, gauss_rule, gauss_shape)
from .mesh import (DIRICHLET, INTERIOR, NEUMANN, ElementMap, Mesh,
                   build_rectangle_mesh, element_map, enrich_degrees, refine,
                   with_degrees)
from .spaces import (DofMap, eval_q, eval_u, gauss_interpolate, grad_q,
                     grad_u, l2_project, lambda_feasible, pairs_to_q,
                     project_onto_lambda, q_pairs, qinner, qnorm)
from .assembly import (MaterialParams, ProblemData, SaddleSystem, assemble,
                       assemble_h1, energy, export_matrix_market, psi_exact,
                       psi_hp)
from .solver import (SolutionTriple, SolverConfig, infsup_constant, solve,
                     solve_oracle, solve_ssn, solve_uzawa,
                     write_convergence_csv)
from .estimator import (H_REFINE, P_ENRICH, EstimatorReport, cutoff_mu_star,
                        decide_hp, estimate, mark_dorfler)
from .study import (ConvergenceRecord, StudyConfig, benchmark_s6,
                    compute_eoc, error_norms, manufactured_elastic,
                    overkill_reference, prolong_q, prolong_u, run_study,
                    total_dofs)
from .vtk import write_vtk
