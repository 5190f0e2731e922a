import math

import numpy as np
import pytest

from maxwell_afem import mesh as mm
from maxwell_afem.adapt import dof_coordinates
from maxwell_afem.eigensolve import (EigenConfig, GradientProjector, count_positive_dim,
                                     dense_spectrum, solve_smallest_positive)
from maxwell_afem.exceptions import DimensionError
from maxwell_afem.fem import EdgeSpace, NodalSpace, assemble, discrete_gradient
from maxwell_afem.linalg import factor


def problem(m):
    e, n = EdgeSpace(m), NodalSpace(m)
    A, M = assemble(e)
    return e, n, A, M, discrete_gradient(n, e)


@pytest.fixture(scope="module")
def cube2():
    return problem(mm.generate_cube(2))


def test_projector_properties(cube2):
    e, n, A, M, G = cube2
    proj = GradientProjector(G, M, factor((G.T @ M @ G).tocsc()))
    rng = np.random.default_rng(0)
    assert np.abs(proj(G @ rng.standard_normal(n.n_dofs))).max() < 1e-11
    u = proj(rng.standard_normal(e.n_dofs))
    assert np.abs(G.T @ (M @ u)).max() < 1e-11
    assert np.abs(proj(u) - u).max() < 1e-12


def test_count_positive_dim():
    m1 = mm.generate_cube(1)
    assert count_positive_dim(EdgeSpace(m1), NodalSpace(m1)) == 1
    m2 = mm.generate_cube(2)
    assert count_positive_dim(EdgeSpace(m2), NodalSpace(m2)) == int((~m2.boundary_edge).sum()) - 1


def test_dense_count_equals_dimension(cube2):
    e, n, A, M, G = cube2
    lam = dense_spectrum(A, M)
    scale = lam.max()
    assert np.sum(lam > 1e-8 * scale) == e.n_dofs - n.n_dofs
    assert np.sum(np.abs(lam) <= 1e-8 * scale) == n.n_dofs


@pytest.mark.parametrize("build, k", [
    (lambda: mm.generate_cube(2), 10),
    (lambda: mm.generate_fichera(1), 5),
    (lambda: mm.refine(mm.generate_cube(2), {0, 7, 20}), 8),
])
def test_matches_dense_oracle(build, k):
    e, n, A, M, G = problem(build())
    lam = dense_spectrum(A, M)
    pos = np.sort(lam[lam > 1e-8 * lam.max()])
    pairs = solve_smallest_positive(A, M, G, EigenConfig(k=k))
    got = np.array([p.lam for p in pairs])
    assert np.allclose(got, pos[:k], rtol=1e-8, atol=0)


def test_pair_invariants(cube2):
    e, n, A, M, G = cube2
    cfg = EigenConfig(k=4)
    pairs = solve_smallest_positive(A, M, G, cfg)
    U = np.column_stack([p.u for p in pairs])
    assert np.abs(U.T @ M @ U - np.eye(4)).max() <= 10 * cfg.tol
    for p in pairs:
        assert abs(p.u @ A @ p.u / (p.u @ M @ p.u) - p.lam) <= 10 * cfg.tol
        assert p.residual <= cfg.tol
    assert all(a.lam <= b.lam for a, b in zip(pairs, pairs[1:]))


def test_shift_invariance_and_determinism():
    e, n, A, M, G = problem(mm.generate_cube(4))
    c = dof_coordinates(e)
    a = solve_smallest_positive(A, M, G, EigenConfig(k=3, shift=1.0), coords=c)
    b = solve_smallest_positive(A, M, G, EigenConfig(k=3, shift=9.0), coords=c)
    assert np.allclose([p.lam for p in a], [p.lam for p in b], rtol=0, atol=100 * 1e-9)
    again = solve_smallest_positive(A, M, G, EigenConfig(k=3, shift=1.0), coords=c)
    assert [p.lam for p in a] == [p.lam for p in again]


def test_cube4_first_eigenvalue_band():
    e, n, A, M, G = problem(mm.generate_cube(4))
    lam = solve_smallest_positive(A, M, G, EigenConfig(k=1), coords=dof_coordinates(e))[0].lam
    assert abs(lam - 2 * math.pi ** 2) / (2 * math.pi ** 2) <= 0.10


def test_gradient_start_vector_is_deflated(cube2):
    e, n, A, M, G = cube2
    v0 = G @ np.ones(n.n_dofs)
    pairs = solve_smallest_positive(A, M, G, EigenConfig(k=3), v0=v0)
    assert min(p.lam for p in pairs) > 1.0


def test_too_many_requested():
    e, n, A, M, G = problem(mm.generate_cube(1))
    with pytest.raises(DimensionError):
        solve_smallest_positive(A, M, G, EigenConfig(k=2))
