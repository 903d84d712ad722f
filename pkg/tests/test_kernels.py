"""The numba kernels must agree with their pure-numpy references."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from plastmix import kernels
from plastmix.kernels import (_combine_stiffness_np, _qnorm_sq_np,
                              _radial_project_np, _weighted_frobenius_sum_np)


def _rand(seed, *shape):
    return np.random.default_rng(seed).normal(size=shape)


def test_radial_project_matches_reference():
    coeffs = np.ascontiguousarray(_rand(0, 500, 2) * 10.0)
    a = kernels.radial_project(coeffs, 5.0)
    b = _radial_project_np(coeffs, 5.0)
    assert np.allclose(a, b, atol=1e-14)


def test_radial_project_feasible_and_fixed_inside():
    coeffs = np.ascontiguousarray(_rand(1, 300, 2) * 4.0)
    out = kernels.radial_project(coeffs, 5.0)
    norms = np.sqrt(2.0 * (out[:, 0] ** 2 + out[:, 1] ** 2))
    assert np.all(norms <= 5.0 + 1e-12)
    inside = np.sqrt(2.0 * (coeffs[:, 0] ** 2 + coeffs[:, 1] ** 2)) <= 5.0
    assert np.allclose(out[inside], coeffs[inside])


def test_weighted_frobenius_sum_matches_reference():
    coeffs = np.ascontiguousarray(_rand(2, 200, 2))
    w = np.abs(_rand(3, 200)) + 0.1
    a = kernels.weighted_frobenius_sum(coeffs, w)
    b = _weighted_frobenius_sum_np(coeffs, w)
    assert np.isclose(a, b, rtol=1e-13)
    # direct formula
    want = float(np.sum(w * np.sqrt(2.0) * np.hypot(coeffs[:, 0],
                                                    coeffs[:, 1])))
    assert np.isclose(a, want, rtol=1e-13)


def test_qnorm_sq_matches_reference():
    coeffs = np.ascontiguousarray(_rand(4, 200, 2))
    w = np.abs(_rand(5, 200)) + 0.1
    assert np.isclose(kernels.qnorm_sq(coeffs, w),
                      _qnorm_sq_np(coeffs, w), rtol=1e-13)


def test_combine_stiffness_matches_reference():
    base, ax, ay = _rand(6, 4, 4), _rand(7, 4, 4), _rand(8, 4, 4)
    rx, ry = _rand(9, 10), _rand(10, 10)
    a = kernels.combine_stiffness(rx, ry, base, ax, ay)
    b = _combine_stiffness_np(rx, ry, base, ax, ay)
    assert np.allclose(a, b, atol=1e-14)


pair_arrays = arrays(np.float64, (64, 2),
                     elements=st.floats(-100, 100, allow_nan=False))


@given(pair_arrays, st.floats(0.1, 50.0))
@settings(max_examples=100, deadline=None)
def test_radial_project_idempotent(coeffs, sigma_y):
    coeffs = np.ascontiguousarray(coeffs)
    once = np.ascontiguousarray(kernels.radial_project(coeffs, sigma_y))
    twice = kernels.radial_project(once, sigma_y)
    assert np.allclose(once, twice, atol=1e-12)


@given(pair_arrays, pair_arrays, st.floats(0.1, 50.0))
@settings(max_examples=100, deadline=None)
def test_radial_project_nonexpansive(c1, c2, sigma_y):
    c1 = np.ascontiguousarray(c1)
    c2 = np.ascontiguousarray(c2)
    p1 = kernels.radial_project(c1, sigma_y)
    p2 = kernels.radial_project(c2, sigma_y)
    before = np.linalg.norm(c1 - c2)
    after = np.linalg.norm(p1 - p2)
    assert after <= before + 1e-10 * max(1.0, before)


def test_numpy_fallback_path_matches(tmp_path):
    """Force the pure-numpy kernels in a subprocess and compare a full solve
    against the in-process (numba) result."""
    import json
    import os
    import subprocess
    import sys

    from plastmix.assembly import assemble, energy
    from plastmix.solver import SolverConfig, solve_uzawa
    from plastmix.spaces import DofMap
    from plastmix.study import benchmark_s6

    data, mesh = benchmark_s6(3, 3, 1)
    dm = DofMap(mesh)
    sys_ = assemble(mesh, dm, data)
    sol = solve_uzawa(sys_, SolverConfig(eps_out=1e-10))
    here = energy(sol.u, sol.p, sys_)

    script = tmp_path / "fallback.py"
    script.write_text(
        "import json\n"
        "from plastmix import kernels\n"
        "from plastmix.assembly import assemble, energy\n"
        "from plastmix.solver import SolverConfig, solve_uzawa\n"
        "from plastmix.spaces import DofMap\n"
        "from plastmix.study import benchmark_s6\n"
        "assert not kernels.USE_NUMBA\n"
        "data, mesh = benchmark_s6(3, 3, 1)\n"
        "dm = DofMap(mesh)\n"
        "sys_ = assemble(mesh, dm, data)\n"
        "sol = solve_uzawa(sys_, SolverConfig(eps_out=1e-10))\n"
        "print(json.dumps({'e': energy(sol.u, sol.p, sys_),\n"
        "                  'it': sol.iterations}))\n")
    env = dict(os.environ, PLASTMIX_NO_NUMBA="1")
    out = subprocess.run([sys.executable, str(script)], env=env,
                         capture_output=True, text=True, check=True)
    got = json.loads(out.stdout.strip().splitlines()[-1])
    assert np.isclose(got["e"], here, rtol=1e-12)
