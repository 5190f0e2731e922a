"""Lowest-order Nedelec (first kind) edge elements.

Local basis on a tetrahedron with local edge ``(i, j)``, ``i < j``::

    phi_ij = lambda_i grad(lambda_j) - lambda_j grad(lambda_i)
    curl phi_ij = 2 grad(lambda_i) x grad(lambda_j)

The global degree of freedom of an edge ``(a, b)``, ``a < b`` in global
vertex numbering, is the tangential moment along the direction a -> b.
Edges on the boundary carry no dof (u x n = 0).
"""
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import GeometryError
from .mesh import LOCAL_EDGES, Mesh
from .quadrature import segment_gauss

_I = LOCAL_EDGES[:, 0]
_J = LOCAL_EDGES[:, 1]


def _coefficient(value, n_tets):
    """Broadcast a scalar or per-element coefficient to shape (nt,)."""
    c = np.broadcast_to(np.asarray(value, dtype=float), (n_tets,))
    if np.any(c <= 0):
        raise ValueError("material coefficients must be positive")
    return c


def basis_curls(grads):
    """Curls of the six local basis functions, shape (..., 6, 3)."""
    return 2.0 * np.cross(grads[..., _I, :], grads[..., _J, :])


def element_matrices(grads, volumes, eps=1.0, mu=1.0):
    """Local curl-curl and mass matrices for many tetrahedra at once.

    ``grads`` has shape (nt, 4, 3). Returns two (nt, 6, 6) arrays.  Both
    integrals are exact: the curls are constant and the mass integrand is a
    quadratic polynomial integrated with ``int lambda_a lambda_b = V (1 +
    delta_ab) / 20``.
    """
    nt = len(volumes)
    eps = _coefficient(eps, nt)
    mu = _coefficient(mu, nt)
    c = basis_curls(grads)
    K = np.einsum("tid,tjd->tij", c, c) * (volumes / mu)[:, None, None]

    G = np.einsum("tad,tbd->tab", grads, grads)
    E = (np.eye(4) + 1.0) / 20.0
    i, j = _I[:, None], _J[:, None]
    k, l = _I[None, :], _J[None, :]
    M = (G[:, j, l] * E[i, k] - G[:, j, k] * E[i, l]
         - G[:, i, l] * E[j, k] + G[:, i, k] * E[j, l])
    M = 0.5 * (M + np.transpose(M, (0, 2, 1)))
    M *= (volumes * eps)[:, None, None]
    return K, M


def local_matrices(coords, eps=1.0, mu=1.0):
    """(K_loc, M_loc) for a single tetrahedron given its 4x3 vertex array."""
    coords = np.asarray(coords, dtype=float)
    J = coords[1:] - coords[:1]
    vol = np.linalg.det(J) / 6.0
    if abs(vol) <= 1e-14 * np.abs(J).max() ** 3:
        raise GeometryError("degenerate tetrahedron")
    g = np.empty((4, 3))
    g[1:] = np.linalg.inv(J).T
    g[0] = -g[1:].sum(axis=0)
    K, M = element_matrices(g[None], np.array([abs(vol)]), eps, mu)
    return K[0], M[0]


class EdgeSpace:
    """Edge dofs on the interior edges of a mesh.

    With ``essential=False`` boundary edges are kept as dofs too, which is
    only useful for representing fields that do not satisfy u x n = 0.
    """

    def __init__(self, mesh: Mesh, essential=True):
        self.mesh = mesh
        self.essential = essential
        interior = ~mesh.boundary_edge if essential else np.ones(len(mesh.edges), dtype=bool)
        self.dof_of_edge = np.full(len(mesh.edges), -1, dtype=np.int64)
        self.dof_of_edge[interior] = np.arange(interior.sum())
        self.n_dofs = int(interior.sum())
        t = mesh.tets
        self.signs = np.where(t[:, _I] < t[:, _J], 1.0, -1.0)
        self.tet_dofs = self.dof_of_edge[mesh.tet_edges]

    def local_coefficients(self, u):
        """Signed local coefficients (nt, 6); boundary edges contribute zero."""
        u = np.asarray(u, dtype=float)
        full = np.concatenate([u, [0.0]])
        return full[self.tet_dofs] * self.signs

    def from_local(self, local):
        """Inverse of :meth:`local_coefficients` for a tangentially continuous field."""
        u = np.zeros(self.n_dofs)
        d = self.tet_dofs.ravel()
        keep = d >= 0
        u[d[keep]] = (local * self.signs).ravel()[keep]
        return u

    @cached_property
    def unit_element_matrices(self):
        """(K, M) element matrices with eps = mu = 1."""
        return element_matrices(self.mesh.grad_lambda, self.mesh.volumes)


class NodalSpace:
    """Continuous P1 functions vanishing on the boundary (unless ``essential=False``)."""

    def __init__(self, mesh: Mesh, essential=True):
        self.mesh = mesh
        interior = ~mesh.boundary_vertex if essential else np.ones(mesh.n_vertices, dtype=bool)
        self.dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.dof_of_vertex[interior] = np.arange(interior.sum())
        self.n_dofs = int(interior.sum())


def _scatter(space, local):
    nt = len(local)
    d = space.tet_dofs
    s = space.signs
    rows = np.broadcast_to(d[:, :, None], (nt, 6, 6)).ravel()
    cols = np.broadcast_to(d[:, None, :], (nt, 6, 6)).ravel()
    vals = (local * s[:, :, None] * s[:, None, :]).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = space.n_dofs
    return sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()


def assemble(space: EdgeSpace, eps=1.0, mu=1.0):
    """Global curl-curl matrix A and mass matrix M on the free edge dofs."""
    mesh = space.mesh
    K, M = element_matrices(mesh.grad_lambda, mesh.volumes, eps, mu)
    return _scatter(space, K), _scatter(space, M)


def discrete_gradient(nodal: NodalSpace, edge: EdgeSpace):
    """Signed edge-vertex incidence G with edge-interpolant(grad psi) = G psi."""
    if nodal.mesh is not edge.mesh:
        raise ValueError("spaces live on different meshes")
    mesh = edge.mesh
    rows, cols, vals = [], [], []
    dof = edge.dof_of_edge
    for col, sign in ((0, -1.0), (1, 1.0)):
        v = nodal.dof_of_vertex[mesh.edges[:, col]]
        keep = (dof >= 0) & (v >= 0)
        rows.append(dof[keep])
        cols.append(v[keep])
        vals.append(np.full(keep.sum(), sign))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(edge.n_dofs, nodal.n_dofs))


def curl_eval(space: EdgeSpace, u, tets=None):
    """Constant curl of the field on each element, shape (nt, 3)."""
    c = space.local_coefficients(u)
    curls = basis_curls(space.mesh.grad_lambda)
    if tets is not None:
        return np.einsum("ti,tid->td", c[tets], curls[tets])
    return np.einsum("ti,tid->td", c, curls)


def eval_local(grads, coeffs, bary):
    """Field value from local coefficients at barycentric points.

    grads (m, 4, 3), coeffs (m, 6), bary (m, 4) -> (m, 3)
    """
    phi = (bary[:, _I, None] * grads[:, _J] - bary[:, _J, None] * grads[:, _I])
    return np.einsum("mi,mid->md", coeffs, phi)


def field_eval(space: EdgeSpace, u, tets, points, tol=1e-10):
    """Evaluate the discrete field at ``points[i]`` inside element ``tets[i]``."""
    tets = np.atleast_1d(np.asarray(tets))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    lam = mesh.locate(tets, points)
    if np.any(lam < -tol):
        raise GeometryError("evaluation point outside its element")
    c = space.local_coefficients(u)[tets]
    return eval_local(mesh.grad_lambda[tets], c, lam)


def edge_moments(mesh: Mesh, field, n_points=5):
    """Tangential moments int_e f . t ds over *all* edges (direction low -> high)."""
    t, w = segment_gauss(n_points)
    a = mesh.vertices[mesh.edges[:, 0]]
    d = mesh.vertices[mesh.edges[:, 1]] - a
    out = np.zeros(len(mesh.edges))
    for ti, wi in zip(t, w):
        out += wi * np.einsum("ed,ed->e", field(a + ti * d), d)
    return out


def interpolate(space: EdgeSpace, field, n_points=5):
    """Edge-moment interpolant of a callable ``field((m, 3)) -> (m, 3)``."""
    m = edge_moments(space.mesh, field, n_points)
    return m[space.dof_of_edge >= 0]
