"""Acceptance criteria, one test per criterion.

Each test prints ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
(also repeated in the terminal summary) and then asserts.
"""
import math
import time
import warnings
from itertools import combinations

import numpy as np
import pytest

from maxwell_afem import mesh as mm
from maxwell_afem.adapt import (LoopConfig, dorfler_mark, iterate_levels, prolong, rate_fit,
                                run_with_reference, solve_level)
from maxwell_afem.eigensolve import EigenConfig, dense_spectrum, solve_smallest_positive
from maxwell_afem.estimator import IndicatorField
from maxwell_afem.fem import EdgeSpace, NodalSpace, assemble, discrete_gradient, field_eval
from maxwell_afem.verify import (check_contraction, check_eigenvalue_identity,
                                 check_indicator_relation, check_superconvergence,
                                 contraction_xi)

from conftest import ACCEPTANCE_LINES, single_tet_mesh, two_tet_mesh

TWO_PI_SQ = 2 * math.pi ** 2
FICHERA_AREA = 24.0


def report(number, passed, message):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {message}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def cube_eigenvalues(n, k=3):
    cfg = LoopConfig(n=n, eig=EigenConfig(k=k))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        t0 = time.perf_counter()
        level = solve_level(mm.generate_cube(n), cfg)
    return np.array([p.lam for p in level.pairs[:k]]), time.perf_counter() - t0


def test_criterion_01_cube_spectrum():
    lam4, _ = cube_eigenvalues(4)
    lam8, seconds = cube_eigenvalues(8)
    err4 = abs(lam4[0] - TWO_PI_SQ) / TWO_PI_SQ
    err8 = abs(lam8[0] - TWO_PI_SQ) / TWO_PI_SQ
    spread4 = (lam4.max() - lam4.min()) / lam4.min()
    spread8 = (lam8.max() - lam8.min()) / lam8.min()
    ok = err4 <= 0.08 and err8 <= 0.025 and spread8 <= 0.02 and seconds <= 120
    report(1, ok, f"rel. error n=4 {err4:.4f} (<= 0.08), n=8 {err8:.4f} (<= 0.025); "
                  f"cluster spread n=8 {spread8:.4f} (<= 0.02), n=4 {spread4:.4f} (info); "
                  f"n=8 solve {seconds:.1f} s")


def test_criterion_02_cube_rate(cube_lattice):
    levels, _ = cube_lattice
    h = np.array([1 / 2, 1 / 4, 1 / 8])
    err = np.array([abs(lv.lam - TWO_PI_SQ) for lv in levels])
    slope = float(np.polyfit(np.log(h), np.log(err), 1)[0])
    report(2, 1.7 <= slope <= 2.3, f"slope of log|lambda_h - 2 pi^2| vs log h = {slope:.3f} "
                                   "(in [1.7, 2.3])")


@pytest.mark.slow
def test_criterion_03_discrete_identity(cube_lattice, fichera_run):
    worst = {}
    for name, levels in (("cube", cube_lattice[0]), ("fichera", fichera_run[1])):
        worst[name] = max(check_eigenvalue_identity(H, h)[2] for H, h in zip(levels, levels[1:]))
    ok = max(worst.values()) <= 1e-6
    report(3, ok, f"max relative discrepancy cube {worst['cube']:.2e}, "
                  f"fichera {worst['fichera']:.2e} (<= 1e-6)")


@pytest.mark.slow
def test_criterion_04_indicator_relation(cube_lattice, fichera_run):
    levels = list(cube_lattice[0]) + list(fichera_run[1])
    worst = max(check_indicator_relation(lv) for lv in levels)
    report(4, worst <= 1e-12, f"max elementwise relative defect {worst:.2e} over "
                              f"{len(levels)} levels (<= 1e-12)")


def small_meshes():
    pool = [single_tet_mesh(), two_tet_mesh(), mm.generate_cube(1)]
    cube1 = mm.generate_cube(1)
    for k in range(6):
        m = mm.refine(cube1, {k})
        if m.n_tets <= 12:
            pool.append(m)
    return pool


def brute_force_minimum(eta, theta):
    n = len(eta)
    masks = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    sums = masks @ eta
    ok = sums >= theta * eta.sum()
    return int(masks[ok].sum(axis=1).min())


def test_criterion_05_dorfler_minimality():
    rng = np.random.default_rng(20240605)
    pool = small_meshes()
    assert max(m.n_tets for m in pool) <= 12
    failures = trials = 0
    for _ in range(100):
        mesh = pool[rng.integers(len(pool))]
        eta = IndicatorField(rng.random(mesh.n_tets) ** 3, "standard")
        for theta in (0.3, 0.5, 0.9):
            trials += 1
            if len(dorfler_mark(eta, theta)) != brute_force_minimum(eta.eta_sq, theta):
                failures += 1
    report(5, failures == 0, f"{trials - failures}/{trials} greedy cardinalities equal the "
                             "brute-force minimum")


@pytest.mark.slow
def test_criterion_06_conformity_and_nesting(fichera_run):
    _, levels, _ = fichera_run
    rng = np.random.default_rng(6)
    conforming = absent = True
    worst = 0.0
    for H, h in zip(levels, levels[1:]):
        conforming &= h.mesh.is_conforming(FICHERA_AREA, rtol=1e-12)
        fine_keys = set(h.mesh.keys())
        coarse_keys = H.mesh.keys()
        absent &= all(coarse_keys[k] not in fine_keys for k in H.marked)
        u = rng.standard_normal(H.space.n_dofs)
        v = prolong(u, H.mesh, h.mesh, H.space, h.space)
        anc = mm.ancestor_map(H.mesh, h.mesh)
        tets = rng.integers(0, h.mesh.n_tets, 20)
        pts = np.einsum("pi,pid->pd", rng.dirichlet(np.ones(4), 20),
                        h.mesh.vertices[h.mesh.tets[tets]])
        diff = field_eval(h.space, v, tets, pts) - field_eval(H.space, u, anc[tets], pts)
        worst = max(worst, float(np.abs(diff).max()))
    ok = conforming and absent and worst <= 1e-12
    report(6, ok, f"{len(levels) - 1} refinements: conforming {conforming}, marked elements "
                  f"removed {absent}, max prolongation mismatch {worst:.1e} (<= 1e-12)")


def test_criterion_07_kernel_count():
    m = mm.generate_cube(2)
    edge, nodal = EdgeSpace(m), NodalSpace(m)
    A, M = assemble(edge)
    lam = dense_spectrum(A, M)
    n_pos = int(np.sum(lam > 1e-8 * lam.max()))
    expected = int((~m.boundary_edge).sum()) - int((~m.boundary_vertex).sum())
    report(7, n_pos == expected, f"dense positive count {n_pos}, interior edges - interior "
                                 f"vertices = {expected}")


@pytest.mark.slow
def test_criterion_08_adaptive_beats_uniform(fichera_run):
    records, _, ref = fichera_run
    lam_ref = ref.lam
    adaptive = rate_fit([r.n_dofs for r in records], [abs(r.lam - lam_ref) for r in records])
    uniform_cfg = LoopConfig(domain="fichera", n=1, theta=1.0, max_levels=50, max_dofs=10_000)
    uni = [(lv.space.n_dofs, abs(lv.lam - lam_ref)) for lv in iterate_levels(uniform_cfg)]
    uniform = rate_fit(*zip(*uni))
    cfg03 = LoopConfig(domain="fichera", n=1, theta=0.3, max_levels=50, max_dofs=5_000)
    small = [(lv.space.n_dofs, abs(lv.lam - lam_ref)) for lv in iterate_levels(cfg03)]
    theta03 = rate_fit(*zip(*small))
    ok = adaptive <= uniform - 0.1
    report(8, ok, f"rate vs ndofs: adaptive theta=0.5 {adaptive:.3f}, uniform {uniform:.3f} "
                  f"(difference {uniform - adaptive:.3f} >= 0.1); theta=0.3 {theta03:.3f} "
                  f"(info); lambda_ref {lam_ref:.10f}")


@pytest.mark.slow
def test_criterion_09_contraction(fichera_run):
    records, _, _ = fichera_run
    maxima = {beta: check_contraction(contraction_xi(records, beta), first=2, last=10)[1]
              for beta in (0.1, 1.0, 10.0)}
    ok = min(maxima.values()) < 1
    text = ", ".join(f"beta={b:g}: {m:.3f}" for b, m in maxima.items())
    report(9, ok, f"max xi^2 ratio over levels 2..10: {text} (some < 1)")


def test_criterion_10_superconvergence(cube_lattice):
    levels, ref = cube_lattice
    rows, decreasing = check_superconvergence(levels, ref)
    text = " > ".join(f"{r[-1]:.4f}" for r in rows)
    report(10, decreasing, f"ratio over n = 2, 4, 8: {text} (strictly decreasing)")


@pytest.mark.filterwarnings("ignore:eigenvalue .* appears multiple")
def test_criterion_11_dense_oracle():
    meshes = {
        "cube n=2": mm.generate_cube(2),
        "cube n=3": mm.generate_cube(3),
        "fichera n=1": mm.generate_fichera(1),
        "fichera bisected": mm.refine_uniform(mm.generate_fichera(1), 2),
        "fichera bisected twice more": mm.refine_uniform(mm.generate_fichera(1), 3),
        "cube n=2 bisected": mm.refine_uniform(mm.generate_cube(2), 2),
        "cube n=2 local": mm.refine(mm.generate_cube(2), {0, 9, 21}),
    }
    worst = 0.0
    sizes = []
    for m in meshes.values():
        edge, nodal = EdgeSpace(m), NodalSpace(m)
        assert edge.n_dofs <= 300
        A, M = assemble(edge)
        G = discrete_gradient(nodal, edge)
        lam = dense_spectrum(A, M)
        pos = np.sort(lam[lam > 1e-8 * lam.max()])
        got = solve_smallest_positive(A, M, G, EigenConfig(k=len(pos)))
        got = np.array([p.lam for p in got])
        worst = max(worst, float(np.max(np.abs(got - pos) / pos)))
        sizes.append(edge.n_dofs)
    report(11, worst <= 1e-8, f"all positive eigenvalues on {len(meshes)} meshes "
                              f"({min(sizes)}-{max(sizes)} dofs): max rel. deviation "
                              f"{worst:.1e} (<= 1e-8)")
