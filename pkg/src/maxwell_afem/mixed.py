"""Mixed-form quantities (sigma_h, p_h) derived from an edge eigenpair."""
from dataclasses import dataclass

import numpy as np

from .fem import EdgeSpace, curl_eval


@dataclass
class MixedSolution:
    """``sigma = omega u`` (edge coefficients) and ``p = -mu^{-1/2} curl u / omega``.

    ``p`` is constant per element, stored as an (nt, 3) array.
    """
    lam: float
    sigma: np.ndarray
    p: np.ndarray
    space: EdgeSpace

    @property
    def omega(self):
        return float(np.sqrt(self.lam))

    def p_norm(self):
        vol = self.space.mesh.volumes
        return float(np.sqrt(np.sum(vol * np.einsum("td,td->t", self.p, self.p))))

    def curl_identity_defect(self, mu=1.0):
        """max |mu^{-1/2} curl sigma + lam p| relative to max |lam p|."""
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (len(self.p),))
        lhs = curl_eval(self.space, self.sigma) / np.sqrt(mu)[:, None]
        rhs = -self.lam * self.p
        return float(np.abs(lhs - rhs).max() / np.abs(rhs).max())


def to_mixed(space, pair, mu=1.0):
    lam = float(pair.lam)
    if lam <= 0:
        raise ValueError("to_mixed needs a positive eigenvalue")
    omega = np.sqrt(lam)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (space.mesh.n_tets,))
    p = -curl_eval(space, pair.u) / (np.sqrt(mu)[:, None] * omega)
    return MixedSolution(lam, omega * np.asarray(pair.u, dtype=float), p, space)
