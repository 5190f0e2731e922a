import warnings

import numpy as np
import pytest

from maxwell_afem.adapt import LoopConfig, iterate_levels, run_with_reference
from maxwell_afem.mesh import Mesh
from maxwell_afem.reference import CubeReference

REF_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def single_tet_mesh(vertices=REF_TET):
    return Mesh(vertices, [[0, 1, 2, 3]])


def two_tet_mesh():
    v = np.vstack([REF_TET, [[1.0, 1.0, 1.0]]])
    return Mesh(v, [[0, 1, 2, 3], [4, 1, 2, 3]])


@pytest.fixture(scope="session")
def cube_lattice():
    """Solved Kuhn cube levels n = 2, 4, 8 with the analytic reference."""
    cfg = LoopConfig(domain="cube", n=2, refinement="lattice", max_levels=2, max_dofs=10**6)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        levels = list(iterate_levels(cfg))
    ref = CubeReference().fix(levels[-1].mixed)
    return levels, ref


@pytest.fixture(scope="session")
def fichera_run():
    """12-level Fichera run, theta = 0.5, with the twice-refined reference."""
    cfg = LoopConfig(domain="fichera", n=1, theta=0.5, max_levels=12, max_dofs=10**7,
                     reference="fine")
    return run_with_reference(cfg)


# PASS/FAIL lines from test_acceptance.py, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
