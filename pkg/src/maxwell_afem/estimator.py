"""Residual error indicators for the edge-element eigenproblem.

For lowest-order elements with elementwise constant eps and mu the
element residuals ``curl(mu^{-1} curl u_h)`` and ``div(eps u_h)`` vanish
identically, so the volume part reduces to ``h_K^2 ||eps u_h||_K^2`` and
the rest of the indicator lives on interior faces.

The standard indicator scales the tangential curl jump by ``1/omega_h^2``,
the same factor as the volume residual ``eps u_h - curl(mu^{-1} curl
u_h) / omega_h^2``.  This keeps all terms dimensionally consistent and
makes ``eta_s^2 = eta_m^2 / lambda_h`` hold element by element.
"""
from dataclasses import dataclass

import numpy as np

from .fem import eval_local, curl_eval
from .mixed import MixedSolution, to_mixed
from .quadrature import tri_midpoints


@dataclass
class IndicatorField:
    eta_sq: np.ndarray
    kind: str  # "standard" or "mixed"
    volume_sq: np.ndarray = None
    face_sq: np.ndarray = None

    @property
    def total(self):
        return float(np.sum(self.eta_sq))

    def subset(self, ids):
        return float(np.sum(self.eta_sq[list(ids)]))


def _per_element(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,))


def interior_faces(mesh):
    return np.flatnonzero(~mesh.boundary_face)


def _jump_sq(mesh, space, q, coeffs, weight):
    """Squared L2 jumps over interior faces.

    q : (nt, 3) elementwise constant field -> ||[[q x n]]||_F^2
    coeffs : edge coefficients of a Nedelec field v, weight : (nt,)
        -> ||[[weight v . n]]||_F^2 (3-point rule, exact for the quadratic integrand)
    """
    faces = interior_faces(mesh)
    normals, areas = mesh.face_normals
    n = normals[faces]
    a = areas[faces]
    kp, km = mesh.face_tets[faces, 0], mesh.face_tets[faces, 1]

    tq = np.cross(q[kp] - q[km], n)
    tang = a * np.einsum("fd,fd->f", tq, tq)

    bary, w = tri_midpoints()
    fx = mesh.vertices[mesh.faces[faces]]            # (nf, 3, 3)
    pts = np.einsum("qi,fid->fqd", bary, fx)         # (nf, nq, 3)
    local = space.local_coefficients(coeffs)
    jumps = np.zeros((len(faces), len(w)))
    for side, k in ((1.0, kp), (-1.0, km)):
        for iq in range(len(w)):
            lam = mesh.locate(k, pts[:, iq])
            v = eval_local(mesh.grad_lambda[k], local[k], lam)
            jumps[:, iq] += side * weight[k] * np.einsum("fd,fd->f", v, n)
    norm = a * (jumps ** 2 @ w)
    return faces, tang, norm


def _distribute(mesh, faces, face_values):
    out = np.zeros(mesh.n_tets)
    half = 0.5 * face_values
    np.add.at(out, mesh.face_tets[faces, 0], half)
    np.add.at(out, mesh.face_tets[faces, 1], half)
    return out


def _volume_l2_sq(space, coeffs, weight):
    """||weight v||_K^2 for each element, exact via the unit mass matrices."""
    _, M = space.unit_element_matrices
    c = space.local_coefficients(coeffs)
    return weight ** 2 * np.einsum("ti,tij,tj->t", c, M, c)


def face_jumps(mesh, space, pair, eps=1.0, mu=1.0):
    """Per interior face: (||[[mu^{-1} curl u_h / omega_h x n]]||_F, ||[[eps u_h . n]]||_F).

    Returns ``(faces, tangential, normal)`` with L2 norms (not squared).
    """
    nt = mesh.n_tets
    eps = _per_element(eps, nt)
    mu = _per_element(mu, nt)
    omega = np.sqrt(pair.lam)
    q = curl_eval(space, pair.u) / mu[:, None] / omega
    faces, t, nrm = _jump_sq(mesh, space, q, pair.u, eps)
    return faces, np.sqrt(t), np.sqrt(nrm)


def indicator_standard(mesh, space, pair, eps=1.0, mu=1.0):
    lam = float(pair.lam)
    if lam <= 0:
        raise ValueError("indicator needs a positive eigenvalue")
    nt = mesh.n_tets
    eps = _per_element(eps, nt)
    mu = _per_element(mu, nt)
    hK = mesh.diameters
    # curl(mu^-1 curl u_h) and div(eps u_h) vanish on each element
    curlcurl_sq = np.zeros(nt)
    div_sq = np.zeros(nt)
    volume = hK ** 2 * (_volume_l2_sq(space, pair.u, eps) + curlcurl_sq) + hK ** 2 * div_sq

    q = curl_eval(space, pair.u) / mu[:, None] / lam
    faces, t, nrm = _jump_sq(mesh, space, q, pair.u, eps)
    face = _distribute(mesh, faces, mesh.face_diameters[faces] * (t + nrm))
    return IndicatorField(volume + face, "standard", volume, face)


def indicator_mixed(mesh, space, pair, eps=1.0, mu=1.0):
    """Mixed indicator from (sigma_h, p_h); ``pair`` may be an EigenPair or MixedSolution."""
    if pair.lam <= 0:
        raise ValueError("indicator needs a positive eigenvalue")
    nt = mesh.n_tets
    eps = _per_element(eps, nt)
    mu = _per_element(mu, nt)
    mixed = pair if isinstance(pair, MixedSolution) else to_mixed(space, pair, mu)
    hK = mesh.diameters
    # eps sigma_h + curl(mu^{-1/2} p_h): the curl of an elementwise constant is zero
    volume = hK ** 2 * _volume_l2_sq(space, mixed.sigma, eps)

    q = mixed.p / np.sqrt(mu)[:, None]
    faces, t, nrm = _jump_sq(mesh, space, q, mixed.sigma, eps)
    face = _distribute(mesh, faces, mesh.face_diameters[faces] * (t + nrm))
    return IndicatorField(volume + face, "mixed", volume, face)
