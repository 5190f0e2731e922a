"""Quadrature rules on tetrahedra, triangles and segments.

All tetrahedral/triangular rules return ``(bary, weights)`` with barycentric
points and weights normalised to sum to one, so an integral over a simplex
is ``volume * sum(weights * f(points))``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def tet_degree2():
    """4-point rule, exact for polynomials of degree 2."""
    a = 0.5854101966249685
    b = 0.1381966011250105
    bary = np.full((4, 4), b)
    np.fill_diagonal(bary, a)
    return bary, np.full(4, 0.25)


def tet_keast4():
    """Keast 11-point rule, exact for degree 4 (one negative weight)."""
    pts = [np.full(4, 0.25)]
    wts = [-0.0789333333333333]
    a, b = 0.785714285714286, 0.0714285714285714
    for i in range(4):
        p = np.full(4, b)
        p[i] = a
        pts.append(p)
        wts.append(0.0457333333333333)
    c, d = 0.399403576166799, 0.100596423833201
    for i in range(4):
        for j in range(i + 1, 4):
            p = np.full(4, d)
            p[[i, j]] = c
            pts.append(p)
            wts.append(0.149333333333333)
    bary = np.array(pts)
    bary /= bary.sum(axis=1, keepdims=True)
    return bary, np.array(wts)


@lru_cache(maxsize=None)
def _tet_conical(n):
    tu, wu = roots_jacobi(n, 2.0, 0.0)
    tv, wv = roots_jacobi(n, 1.0, 0.0)
    tw, ww = roots_jacobi(n, 0.0, 0.0)
    u, v, w = (tu + 1) / 2, (tv + 1) / 2, (tw + 1) / 2
    wu, wv, ww = wu / 8, wv / 4, ww / 2
    U, V, W = np.meshgrid(u, v, w, indexing="ij")
    x = U
    y = (1 - U) * V
    z = (1 - U) * (1 - V) * W
    wt = (wu[:, None, None] * wv[None, :, None] * ww[None, None, :]).ravel()
    bary = np.column_stack([1 - x.ravel() - y.ravel() - z.ravel(),
                            x.ravel(), y.ravel(), z.ravel()])
    return bary, wt * 6.0


def tet_gauss(degree):
    """Collapsed Gauss-Jacobi product rule exact to the given degree."""
    n = max(1, (degree + 2) // 2)
    bary, w = _tet_conical(n)
    return bary.copy(), w.copy()


def tri_midpoints():
    """Edge-midpoint rule on a triangle, exact for degree 2."""
    bary = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    return bary, np.full(3, 1.0 / 3.0)


def segment_gauss(n):
    """Gauss-Legendre on [0, 1]; returns (t, weights summing to 1)."""
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1) / 2, w / 2
