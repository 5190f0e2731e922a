"""Smallest positive eigenpairs of ``A u = lambda M u`` on the edge space.

The curl-curl matrix has the huge kernel ``range(G)`` (discrete gradients).
We run a thick-restart Lanczos iteration on the shift-inverted operator

    T = P (A - sigma M)^{-1} M,

where ``P`` is the M-orthogonal projector onto the complement of
``range(G)``.  ``range(G)`` is an invariant subspace of the unprojected
operator, so ``P`` commutes with it and ``T`` is M-self-adjoint with the
gradient modes sent to zero.
"""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sl

from .exceptions import ConvergenceError, DimensionError, TopologyError
from .linalg import factor


@dataclass
class EigenPair:
    lam: float
    u: np.ndarray
    residual: float = 0.0


@dataclass
class EigenConfig:
    k: int = 1
    tol: float = 1e-9
    shift: float | None = None
    max_lanczos: int | None = None
    seed: int = 0
    max_restarts: int = 300

    def subspace_size(self):
        if self.max_lanczos is not None:
            return self.max_lanczos
        return max(3 * self.k + 20, 60)


class GradientProjector:
    """u -> u - G (G^T M G)^{-1} G^T M u."""

    def __init__(self, G, M, fac=None):
        self.G = G
        self.M = M
        self.empty = G.shape[1] == 0
        if not self.empty:
            self.fac = fac if fac is not None else factor((G.T @ M @ G).tocsc())

    def __call__(self, u):
        if self.empty:
            return np.array(u, dtype=float, copy=True)
        return project_out_gradients(u, self.G, self.M, self.fac)


def project_out_gradients(u, G, M, fac_GtMG):
    u = np.asarray(u, dtype=float)
    if G.shape[1] == 0:
        return u.copy()
    return u - G @ fac_GtMG.solve(G.T @ (M @ u))


def count_positive_dim(edge, nodal):
    """N(h) = dim S_h - dim grad(N_h) on a simply connected domain."""
    n = edge.n_dofs - nodal.n_dofs
    if n < 0:
        raise TopologyError(
            f"negative N(h) = {n}: domain not simply connected or bad boundary flags")
    return n


def dense_spectrum(A, M):
    """All generalized eigenvalues by dense decomposition (oracle for small meshes)."""
    return sl.eigh(A.toarray(), M.toarray(), eigvals_only=True)


def fix_sign(u, M=None, reference=None):
    """Flip ``u`` so that (u, reference)_M > 0, or its first significant entry is positive."""
    if reference is not None:
        s = u @ (M @ reference)
        return -u if s < 0 else u
    big = np.abs(u) > 1e-8 * np.abs(u).max()
    first = np.argmax(big)
    return -u if u[first] < 0 else u


def _mnorm(M, x):
    return float(np.sqrt(max(x @ (M @ x), 0.0)))


def solve_smallest_positive(A, M, G, cfg=None, coords=None, v0=None):
    """Return ``cfg.k`` eigenpairs with the smallest positive eigenvalues.

    ``coords`` (dof coordinates) enable the nested-dissection ordering of
    the shifted factorization.  ``v0`` optionally warm-starts the iteration.
    Eigenvectors are M-normalised and sign-fixed by :func:`fix_sign`.
    """
    cfg = cfg or EigenConfig()
    n = A.shape[0]
    n_pos = n - G.shape[1]
    k = cfg.k
    if k > n_pos:
        raise DimensionError(f"requested {k} eigenpairs but N(h) = {n_pos}")
    sigma = 1.0 if cfg.shift is None else float(cfg.shift)
    if sigma <= 0:
        raise ValueError("shift must be positive")

    shifted = factor((A - sigma * M).tocsr(), coords=coords)
    mass = factor(M.tocsr(), coords=coords)
    proj = GradientProjector(G, M)

    def T(x):
        return proj(shifted.solve(M @ x))

    def residual_norm(x, lam):
        r = A @ x - lam * (M @ x)
        return float(np.sqrt(abs(r @ mass.solve(r))))

    m = min(cfg.subspace_size(), n_pos)
    keep = min(m - 1, k + max((m - k) // 2, 1)) if m > 1 else 1
    rng = np.random.default_rng(cfg.seed)
    breakdowns = 0

    def start_vector(first):
        x = proj(v0) if (first and v0 is not None) else None
        # a start vector inside the gradient range carries no information
        if x is None or _mnorm(M, x) <= 1e-12 * max(_mnorm(M, v0), 1e-300):
            x = proj(rng.standard_normal(n))
        return x / _mnorm(M, x)

    V = np.empty((n, m + 1))
    W = np.empty((n, m))
    H = np.zeros((m, m))
    V[:, 0] = start_vector(True)
    nw = 0
    restarts = 0
    while True:
        lucky = False
        while nw < m:
            j = nw
            w = T(V[:, j])
            W[:, j] = w
            Mw = M @ w
            h = V[:, :j + 1].T @ Mw
            H[:j + 1, j] = h
            H[j, :j + 1] = h
            f = w - V[:, :j + 1] @ h
            for _ in range(2):
                f -= V[:, :j + 1] @ (V[:, :j + 1].T @ (M @ f))
            f = proj(f)
            beta = _mnorm(M, f)
            nw += 1
            if beta <= 1e-12 * max(_mnorm(M, w), 1e-300):
                # invariant subspace found (e.g. one vector of a multiple
                # eigenvalue): continue with a fresh orthogonal direction;
                # H holds full inner products, so no coupling term is lost
                if nw == m:
                    break
                f = proj(rng.standard_normal(n))
                fresh = _mnorm(M, f)
                for _ in range(2):
                    f -= V[:, :nw] @ (V[:, :nw].T @ (M @ f))
                f = proj(f)
                beta = _mnorm(M, f)
                if not beta > 1e-10 * fresh:
                    lucky = True
                    break
            V[:, j + 1] = f / beta

        theta, Y = np.linalg.eigh(H[:nw, :nw])
        order = np.argsort(theta)[::-1]
        theta, Y = theta[order], Y[:, order]
        nk = min(k, nw)
        X = V[:, :nw] @ Y[:, :nk]
        pairs = []
        ok = nk == k and np.all(theta[:nk] > 0)
        if ok:
            for i in range(k):
                x = X[:, i] / _mnorm(M, X[:, i])
                lam = float(x @ (A @ x))
                res = residual_norm(x, lam)
                pairs.append(EigenPair(lam, x, res))
                ok = ok and res <= cfg.tol
        if ok:
            break

        restarts += 1
        if lucky:
            breakdowns += 1
            if breakdowns > 3:
                raise ConvergenceError("Lanczos breakdown persisted after 3 restarts")
            nw = 0
            V[:, 0] = start_vector(False)
            continue
        if restarts > cfg.max_restarts:
            res = max((p.residual for p in pairs), default=np.inf)
            raise ConvergenceError("Lanczos did not converge", residual=res)
        p = keep
        Vk = V[:, :nw] @ Y[:, :p]
        Wk = W[:, :nw] @ Y[:, :p]
        vnext = V[:, nw].copy()
        V[:, :p] = Vk
        V[:, p] = vnext
        W[:, :p] = Wk
        H[:] = 0.0
        H[:p, :p] = np.diag(theta[:p])
        c = V[:, p] @ (M @ Wk)
        H[p, :p] = c
        H[:p, p] = c
        nw = p

    U = np.column_stack([p.u for p in pairs])
    # M-orthonormalise the block (Ritz vectors are already nearly so)
    C = np.linalg.cholesky(U.T @ (M @ U))
    U = np.linalg.solve(C, U.T).T
    out = []
    for i in range(k):
        u = fix_sign(U[:, i])
        lam = float(u @ (A @ u))
        out.append(EigenPair(lam, u, residual_norm(u, lam)))
    out.sort(key=lambda p: p.lam)
    return out


def check_multiplicity(pairs, j, rtol=1e-6):
    """Warn when the target eigenvalue ``j`` (1-based) looks multiple."""
    lam = [p.lam for p in pairs]
    close = []
    if j < len(lam) and lam[j] - lam[j - 1] < rtol * lam[j - 1]:
        close.append(j + 1)
    if j >= 2 and lam[j - 1] - lam[j - 2] < rtol * lam[j - 1]:
        close.append(j - 1)
    if close:
        warnings.warn(f"eigenvalue {j} appears multiple (close to index {close}); "
                      "continuing with a single eigenpair", RuntimeWarning, stacklevel=2)
        return True
    return False
