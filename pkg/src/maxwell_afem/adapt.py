"""Solve / estimate / mark / refine loop and its bookkeeping."""
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import mesh as meshmod
from .eigensolve import EigenConfig, check_multiplicity, fix_sign, solve_smallest_positive
from .estimator import indicator_mixed, indicator_standard
from .exceptions import AdaptError, AFEMError, ConfigError, LineageError
from .fem import EdgeSpace, NodalSpace, assemble, discrete_gradient, eval_local
from .mixed import MixedSolution, to_mixed


@dataclass
class AdaptRecord:
    level: int
    n_tets: int
    n_dofs: int
    lam: float
    eta_sq: float
    n_marked: int
    gap: float | None = None
    xi_sq: float | None = None
    seconds: float = 0.0
    # diagnostics filled in when a reference is available
    eta_sq_mixed: float | None = None
    gap_curl: float | None = None
    err_sigma: float | None = None
    err_p: float | None = None
    err_curl: float | None = None


@dataclass
class LoopConfig:
    domain: str = "cube"
    n: int = 2
    theta: float = 0.5
    target_index: int = 1
    max_dofs: int = 50_000
    max_levels: int = 6
    eps: float = 1.0
    mu: float = 1.0
    eig: EigenConfig = field(default_factory=EigenConfig)
    reference: str = "none"
    beta: float = 1.0
    # "adaptive": Doerfler marking + bisection; "lattice": regenerate the
    # domain mesh with twice as many cells per axis (nested Kuhn meshes)
    refinement: str = "adaptive"
    initial_mesh: meshmod.Mesh | None = None

    def __post_init__(self):
        if self.refinement not in ("adaptive", "lattice"):
            raise ConfigError(f"unknown refinement {self.refinement!r}", key="refinement")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta must lie in (0, 1]", key="theta")
        if self.target_index < 1:
            raise ConfigError("target_index must be >= 1", key="target_index")


@dataclass
class Level:
    """Everything computed on one mesh of the sequence."""
    index: int
    mesh: meshmod.Mesh
    space: EdgeSpace
    nodal: NodalSpace
    A: object
    M: object
    G: object
    pairs: list
    target: int
    eps: float = 1.0
    mu: float = 1.0
    eta: object = None
    eta_mixed: object = None
    marked: set = field(default_factory=set)
    seconds: float = 0.0

    @property
    def pair(self):
        return self.pairs[self.target - 1]

    @property
    def lam(self):
        return self.pair.lam

    @property
    def mixed(self) -> MixedSolution:
        return to_mixed(self.space, self.pair, self.mu)


def initial_mesh(cfg, n=None):
    n = cfg.n if n is None else n
    if cfg.initial_mesh is not None and cfg.refinement == "adaptive":
        return cfg.initial_mesh
    if cfg.domain == "cube":
        return meshmod.generate_cube(n)
    if cfg.domain == "fichera":
        return meshmod.generate_fichera(n)
    raise ConfigError(f"unknown domain {cfg.domain!r}", key="domain")


def dof_coordinates(space):
    m = space.mesh
    free = space.dof_of_edge >= 0
    return m.vertices[m.edges[free]].mean(axis=1)


# -- marking -----------------------------------------------------------------

def dorfler_mark(eta, theta):
    """Minimal-cardinality set M with theta * total <= sum_{K in M} eta_K^2.

    Greedy on descending indicators with ties broken by lower element id.
    ``eta`` may be an :class:`IndicatorField` or an array of eta_K^2.
    """
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    e = np.asarray(getattr(eta, "eta_sq", eta), dtype=float)
    if theta == 1:
        return set(np.flatnonzero(e > 0).tolist())
    order = np.lexsort((np.arange(len(e)), -e))
    csum = np.cumsum(e[order])
    total = csum[-1] if len(csum) else 0.0
    if total <= 0:
        return set()
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return set(order[:min(n, len(e))].tolist())


# -- nested transfer ---------------------------------------------------------

def prolong(u_H, mesh_H, mesh_h, space_H, space_h, anc=None):
    """Coefficients on ``space_h`` of the same piecewise field as ``u_H``.

    Each fine dof is the tangential moment of the coarse field along the
    fine edge, evaluated in the coarse ancestor of a fine element holding
    the edge (exact: the tangential component is linear along the edge).
    """
    if mesh_H is mesh_h:
        return np.array(u_H, dtype=float, copy=True)
    if anc is None:
        anc = meshmod.nested_map(mesh_H, mesh_h)
    edges, first = np.unique(mesh_h.tet_edges.ravel(), return_index=True)
    owner = first // 6
    free = space_h.dof_of_edge[edges] >= 0
    edges, owner = edges[free], owner[free]
    a = mesh_h.vertices[mesh_h.edges[edges, 0]]
    b = mesh_h.vertices[mesh_h.edges[edges, 1]]
    K = anc[owner]
    lam = mesh_H.locate(K, 0.5 * (a + b))
    local = space_H.local_coefficients(u_H)[K]
    val = eval_local(mesh_H.grad_lambda[K], local, lam)
    out = np.zeros(space_h.n_dofs)
    out[space_h.dof_of_edge[edges]] = np.einsum("ed,ed->e", val, b - a)
    return out


def transfer_mixed(mixed: MixedSolution, space_h, anc=None):
    """Express a coarse mixed solution on a nested fine space."""
    space_H = mixed.space
    mesh_H, mesh_h = space_H.mesh, space_h.mesh
    if mesh_H is mesh_h:
        return mixed
    if anc is None:
        anc = meshmod.nested_map(mesh_H, mesh_h)
    sigma = prolong(mixed.sigma, mesh_H, mesh_h, space_H, space_h, anc)
    return MixedSolution(mixed.lam, sigma, mixed.p[anc], space_h)


def pair_norms_sq(a: MixedSolution, b: MixedSolution, M, sign=1.0):
    """(||sigma_a - s sigma_b||^2, ||p_a - s p_b||^2) on a common space."""
    if a.space.mesh is not b.space.mesh:
        raise LineageError("mixed solutions live on different meshes")
    ds = a.sigma - sign * b.sigma
    dp = a.p - sign * b.p
    vol = a.space.mesh.volumes
    return float(ds @ (M @ ds)), float(np.sum(vol * np.einsum("td,td->t", dp, dp)))


def gap(ref: MixedSolution, ell: MixedSolution, A, M, mu=1.0):
    """Sign-minimised distances between one-dimensional eigenspaces.

    Both solutions must live on the same (fine) space.  Returns
    ``(delta_curl, delta_mixed)``: the H(curl) distance of the u-fields and
    the (sigma, p) L2-pair distance.
    """
    best_curl, best_mixed = math.inf, math.inf
    for s in (1.0, -1.0):
        ds, dp = pair_norms_sq(ref, ell, M, s)
        best_mixed = min(best_mixed, math.sqrt(max(ds + dp, 0.0)))
        du = ref.sigma / ref.omega - s * ell.sigma / ell.omega
        best_curl = min(best_curl, math.sqrt(max(du @ (A @ du) + du @ (M @ du), 0.0)))
    return best_curl, best_mixed


# -- the loop ----------------------------------------------------------------

def solve_level(mesh, cfg: LoopConfig, prev: Level | None = None, index=0):
    t0 = time.perf_counter()
    space = EdgeSpace(mesh)
    nodal = NodalSpace(mesh)
    A, M = assemble(space, cfg.eps, cfg.mu)
    G = discrete_gradient(nodal, space)
    k = max(cfg.eig.k, cfg.target_index + 1)
    k = min(k, space.n_dofs - nodal.n_dofs)
    if k < cfg.target_index:
        raise AFEMError(f"mesh supports only {k} positive eigenvalues")
    eig = replace(cfg.eig, k=k)
    v0 = ref = None
    if prev is not None:
        ref = prolong(prev.pair.u, prev.mesh, mesh, prev.space, space)
        v0 = ref
        if eig.shift is None:
            eig = replace(eig, shift=0.5 * prev.pairs[0].lam)
    pairs = solve_smallest_positive(A, M, G, eig, coords=dof_coordinates(space), v0=v0)
    if ref is not None:
        t = cfg.target_index - 1
        pairs[t].u = fix_sign(pairs[t].u, M, ref)
    check_multiplicity(pairs, cfg.target_index)
    level = Level(index, mesh, space, nodal, A, M, G, pairs, cfg.target_index, cfg.eps, cfg.mu)
    level.eta = indicator_standard(mesh, space, level.pair, cfg.eps, cfg.mu)
    level.eta_mixed = indicator_mixed(mesh, space, level.pair, cfg.eps, cfg.mu)
    level.seconds = time.perf_counter() - t0
    return level


def iterate_levels(cfg: LoopConfig, mesh=None):
    """Yield one :class:`Level` per adaptive step (marking filled in)."""
    mesh = initial_mesh(cfg) if mesh is None else mesh
    prev = None
    for ell in range(cfg.max_levels + 1):
        level = solve_level(mesh, cfg, prev, ell)
        last = ell == cfg.max_levels or level.space.n_dofs >= cfg.max_dofs
        if not last:
            t0 = time.perf_counter()
            if cfg.refinement == "lattice":
                # each lattice level has about 8x the dofs: stop before overshooting
                nxt = initial_mesh(cfg, cfg.n * 2 ** (ell + 1))
                if int((~nxt.boundary_edge).sum()) > cfg.max_dofs:
                    last = True
                else:
                    level.marked = set(range(mesh.n_tets))
                    mesh = nxt
            else:
                level.marked = dorfler_mark(level.eta, cfg.theta)
                mesh = meshmod.refine(mesh, level.marked)
            level.seconds += time.perf_counter() - t0
        yield level
        if last:
            return
        prev = level


def make_record(level: Level, errors=None, beta=1.0):
    rec = AdaptRecord(level.index, level.mesh.n_tets, level.space.n_dofs, level.lam,
                      level.eta.total, len(level.marked), seconds=level.seconds,
                      eta_sq_mixed=level.eta_mixed.total)
    if errors is not None:
        rec.err_sigma = errors["sigma"]
        rec.err_p = errors["p"]
        rec.err_curl = errors["curl"]
        rec.gap = errors["gap_mixed"]
        rec.gap_curl = errors["gap_curl"]
        rec.xi_sq = level.eta_mixed.total + beta * (errors["sigma"] ** 2 + errors["p"] ** 2)
    return rec


def run_with_reference(cfg: LoopConfig):
    """Run the loop and build the configured reference.

    Returns ``(records, levels, reference)``; ``reference`` is None when
    ``cfg.reference == "none"``.
    """
    from .reference import make_reference

    levels, records = [], []
    try:
        for level in iterate_levels(cfg):
            levels.append(level)
            records.append(make_record(level))
    except AFEMError as exc:
        raise AdaptError(f"adaptive loop aborted: {exc}", records) from exc
    ref = None
    if cfg.reference != "none":
        ref = make_reference(cfg, levels)
        records = [make_record(lv, ref.errors(lv), cfg.beta) for lv in levels]
    return records, levels, ref


def run_adaptive(cfg: LoopConfig, keep_levels=False):
    """Run the loop; returns records (and the levels if ``keep_levels``).

    With ``cfg.reference`` set to ``"analytic"`` (unit cube) or ``"fine"``
    (final mesh refined twice), gap and xi^2 columns are filled in.
    """
    records, levels, _ = run_with_reference(cfg)
    if keep_levels:
        return records, levels
    return records


def rate_fit(x, y):
    """Least-squares slope of log y against log x over the trailing points.

    Uses the last ``max(3, ceil(n / 2))`` points with positive ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (y > 0) & (x > 0)
    x, y = x[ok], y[ok]
    if len(x) < 3:
        raise ValueError("rate unavailable: fewer than 3 usable points")
    m = max(3, math.ceil(len(x) / 2))
    lx, ly = np.log(x[-m:]), np.log(y[-m:])
    return float(np.polyfit(lx, ly, 1)[0])
