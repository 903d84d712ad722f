"""Shared fixtures: small solved benchmark systems reused across tests."""

import numpy as np
import pytest

from plastmix import (DofMap, SolverConfig, assemble, benchmark_s6,
                      manufactured_elastic, solve_uzawa)


@pytest.fixture(scope="session")
def bench_small():
    """Assembled 5x5 p=1 benchmark system."""
    data, mesh = benchmark_s6()
    dm = DofMap(mesh)
    sys = assemble(mesh, dm, data)
    return data, mesh, dm, sys


@pytest.fixture(scope="session")
def bench_small_sol(bench_small):
    """Converged Uzawa solution of the 5x5 benchmark."""
    data, mesh, dm, sys = bench_small
    sol = solve_uzawa(sys, SolverConfig())
    assert sol.converged
    return sol


@pytest.fixture(scope="session")
def bench_tiny():
    """Assembled 2x2 p=1 benchmark system (oracle-sized)."""
    data, mesh = benchmark_s6(2, 2, 1)
    dm = DofMap(mesh)
    sys = assemble(mesh, dm, data)
    return data, mesh, dm, sys


@pytest.fixture(scope="session")
def elastic_small():
    """Assembled 4x4 p=2 manufactured elastic system."""
    data, mesh = manufactured_elastic(4, 4, 2)
    dm = DofMap(mesh)
    sys = assemble(mesh, dm, data)
    return data, mesh, dm, sys


def rng(seed=0):
    return np.random.default_rng(seed)
