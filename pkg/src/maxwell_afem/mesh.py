"""Tetrahedral meshes with tagged bisection refinement.

Tetrahedra are stored in bisection-canonical vertex order together with a
tag ``k`` in {1, 2, 3}; the refinement edge of ``(x0, x1, x2, x3; k)`` is
``x0 -- xk``.  Bisection follows Maubach's rule, which for the Kuhn
triangulations produced by :func:`generate_cube` and
:func:`generate_fichera` (all tets tagged 3) terminates and stays
conforming under the recursive closure in :func:`refine`.

Each tetrahedron also carries a lineage key ``(root, addr)``: ``root`` is
the index of its ancestor in the initial mesh and ``addr`` is a heap-style
bisection address (1 for a root, ``2a`` / ``2a + 1`` for the children of
``a``).  This is what makes nested-mesh queries exact.
"""
import hashlib
import itertools
from functools import cached_property

import numpy as np

from .exceptions import GeometryError, LineageError, RefinementError, TopologyError

LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])
# face i is opposite local vertex i
LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])

MAX_CLOSURE_DEPTH = 64


def _lineage_token(vertices, tets):
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(vertices, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(tets, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


class Mesh:
    """Immutable conforming tetrahedral mesh.

    Parameters
    ----------
    vertices : (nv, 3) array
    tets : (nt, 4) int array, bisection-canonical order
    tags : (nt,) int array with values in {1, 2, 3}
    gen, root, addr, parent : lineage arrays, see module docstring.
        ``parent[i]`` is the index in the mesh this one was refined from.
    level : refinement level
    lineage : token identifying the initial mesh
    """

    def __init__(self, vertices, tets, tags=None, gen=None, root=None,
                 addr=None, parent=None, level=0, lineage=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.tets = np.ascontiguousarray(tets, dtype=np.int64)
        nt = len(self.tets)
        if nt == 0:
            raise TopologyError("empty tetrahedron list")
        if self.tets.min() < 0 or self.tets.max() >= len(self.vertices):
            raise TopologyError("vertex index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise GeometryError("non-finite vertex coordinates")
        self.tags = (np.full(nt, 3, dtype=np.int8) if tags is None
                     else np.asarray(tags, dtype=np.int8))
        self.gen = np.zeros(nt, dtype=np.int64) if gen is None else np.asarray(gen, dtype=np.int64)
        self.root = np.arange(nt, dtype=np.int64) if root is None else np.asarray(root, dtype=np.int64)
        if addr is None:
            addr = [1] * nt
        self.addr = list(addr)
        self.parent = (np.full(nt, -1, dtype=np.int64) if parent is None
                       else np.asarray(parent, dtype=np.int64))
        self.level = level
        self.lineage = lineage or _lineage_token(self.vertices, self.tets)
        self._build()
        for a in (self.vertices, self.tets, self.tags, self.gen, self.root, self.parent):
            a.flags.writeable = False

    def _build(self):
        t = self.tets
        nt = len(t)
        if np.any(np.sort(t, axis=1)[:, 1:] == np.sort(t, axis=1)[:, :-1]):
            raise GeometryError("tetrahedron with repeated vertices")
        vol = self.signed_volumes
        scale = self.diameters ** 3
        if np.any(np.abs(vol) <= 1e-12 * scale):
            bad = int(np.argmin(np.abs(vol) / scale))
            raise GeometryError(f"degenerate tetrahedron {bad} (zero volume)")

        e = np.sort(t[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
        self.edges, inv = np.unique(e, axis=0, return_inverse=True)
        self.tet_edges = inv.reshape(nt, 6)

        f = np.sort(t[:, LOCAL_FACES], axis=2).reshape(-1, 3)
        self.faces, inv = np.unique(f, axis=0, return_inverse=True)
        self.tet_faces = inv.reshape(nt, 4)
        counts = np.bincount(self.tet_faces.ravel(), minlength=len(self.faces))
        if counts.max() > 2:
            raise TopologyError("non-conforming mesh: face shared by more than two tetrahedra")
        order = np.argsort(self.tet_faces.ravel(), kind="stable")
        owners = order // 4
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        ft = np.full((len(self.faces), 2), -1, dtype=np.int64)
        ft[:, 0] = owners[starts]
        two = counts == 2
        ft[two, 1] = owners[starts[two] + 1]
        self.face_tets = ft

        self.boundary_face = counts == 1
        bf = self.faces[self.boundary_face]
        self.boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertex[bf.ravel()] = True
        bedges = np.sort(bf[:, [[0, 1], [1, 2], [0, 2]]], axis=2).reshape(-1, 2)
        key = self.edges[:, 0] * len(self.vertices) + self.edges[:, 1]
        bkey = bedges[:, 0] * len(self.vertices) + bedges[:, 1]
        self.boundary_edge = np.isin(key, bkey)

    # -- sizes -----------------------------------------------------------
    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def n_vertices(self):
        return len(self.vertices)

    # -- geometry --------------------------------------------------------
    @cached_property
    def _jacobians(self):
        x = self.vertices[self.tets]
        return x[:, 1:] - x[:, :1]

    @cached_property
    def signed_volumes(self):
        return np.linalg.det(self._jacobians) / 6.0

    @cached_property
    def volumes(self):
        return np.abs(self.signed_volumes)

    @cached_property
    def grad_lambda(self):
        """Gradients of the barycentric coordinates, shape (nt, 4, 3)."""
        g = np.empty((self.n_tets, 4, 3))
        g[:, 1:] = np.transpose(np.linalg.inv(self._jacobians), (0, 2, 1))
        g[:, 0] = -g[:, 1:].sum(axis=1)
        return g

    @cached_property
    def diameters(self):
        """h_K: longest edge length of each tetrahedron."""
        x = self.vertices[self.tets]
        d = x[:, LOCAL_EDGES[:, 1]] - x[:, LOCAL_EDGES[:, 0]]
        return np.linalg.norm(d, axis=2).max(axis=1)

    @cached_property
    def face_diameters(self):
        """h_F: longest edge length of each face."""
        x = self.vertices[self.faces]
        d = x[:, [1, 2, 2]] - x[:, [0, 1, 0]]
        return np.linalg.norm(d, axis=2).max(axis=1)

    @cached_property
    def face_normals(self):
        """Unit normals (arbitrary but fixed orientation) and face areas."""
        x = self.vertices[self.faces]
        c = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        area = 0.5 * np.linalg.norm(c, axis=1)
        return c / (2 * area[:, None]), area

    @cached_property
    def barycenters(self):
        return self.vertices[self.tets].mean(axis=1)

    def boundary_area(self):
        return float(self.face_normals[1][self.boundary_face].sum())

    def quality(self):
        """Shape measure 3 * inradius / circumradius (1 for a regular tet)."""
        x = self.vertices[self.tets]
        v = self.volumes
        fx = x[:, LOCAL_FACES]
        areas = 0.5 * np.linalg.norm(
            np.cross(fx[:, :, 1] - fx[:, :, 0], fx[:, :, 2] - fx[:, :, 0]), axis=2)
        r_in = 3 * v / areas.sum(axis=1)
        # circumcenter c solves 2 (x_i - x_0) . c = |x_i|^2 - |x_0|^2
        J = self._jacobians
        rhs = 0.5 * (np.einsum("tij,tij->ti", x[:, 1:], x[:, 1:])
                     - np.einsum("tj,tj->t", x[:, 0], x[:, 0])[:, None])
        c = np.linalg.solve(J, rhs[..., None])[..., 0]
        r_out = np.linalg.norm(c - x[:, 0], axis=1)
        return 3 * r_in / r_out

    def locate(self, tet_ids, points):
        """Barycentric coordinates of ``points`` within ``tet_ids``."""
        tet_ids = np.asarray(tet_ids)
        g = self.grad_lambda[tet_ids]
        x0 = self.vertices[self.tets[tet_ids, 0]]
        lam = np.einsum("tij,tj->ti", g, points - x0)
        lam[:, 0] += 1.0
        return lam

    def refinement_edges(self):
        """Global vertex pairs (sorted) of each tet's refinement edge."""
        k = self.tags.astype(np.int64)
        a = self.tets[:, 0]
        b = self.tets[np.arange(self.n_tets), k]
        return np.sort(np.column_stack([a, b]), axis=1)

    def is_conforming(self, boundary_area=None, rtol=1e-12):
        """Face-incidence check plus an optional boundary-area check.

        A hanging node produces spurious single-owner faces in the
        interior, which shows up as extra boundary area.
        """
        counts = np.bincount(self.tet_faces.ravel(), minlength=len(self.faces))
        if counts.max() > 2:
            return False
        if boundary_area is not None:
            return abs(self.boundary_area() - boundary_area) <= rtol * boundary_area
        return True

    def keys(self):
        return list(zip(self.root.tolist(), self.addr))

    def __repr__(self):
        return f"Mesh(level={self.level}, n_tets={self.n_tets}, n_vertices={self.n_vertices})"


def build_topology(tets, vertices, tags=None):
    """Build a :class:`Mesh` from raw arrays (all tets become lineage roots)."""
    return Mesh(vertices, tets, tags=tags)


# -- bisection ---------------------------------------------------------------

class _Work:
    """Mutable refinement state; :func:`refine` freezes it into a new Mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.coords = [tuple(p) for p in mesh.vertices.tolist()]
        self.verts = [tuple(t) for t in mesh.tets.tolist()]
        self.tag = mesh.tags.tolist()
        self.gen = mesh.gen.tolist()
        self.root = mesh.root.tolist()
        self.addr = list(mesh.addr)
        self.origin = list(range(mesh.n_tets))
        self.alive = [True] * mesh.n_tets
        self.edge_map = {}
        for i, v in enumerate(self.verts):
            self._attach(i, v)

    def _edge_keys(self, v):
        for a, b in LOCAL_EDGES:
            x, y = v[a], v[b]
            yield (x, y) if x < y else (y, x)

    def _attach(self, i, v):
        em = self.edge_map
        for key in self._edge_keys(v):
            s = em.get(key)
            if s is None:
                em[key] = {i}
            else:
                s.add(i)

    def _detach(self, i, v):
        em = self.edge_map
        for key in self._edge_keys(v):
            s = em[key]
            s.discard(i)
            if not s:
                del em[key]

    def ref_edge(self, i):
        v = self.verts[i]
        a, b = v[0], v[self.tag[i]]
        return (a, b) if a < b else (b, a)

    def midpoint(self, edge):
        p, q = self.coords[edge[0]], self.coords[edge[1]]
        self.coords.append(tuple((pi + qi) / 2 for pi, qi in zip(p, q)))
        return len(self.coords) - 1

    def bisect(self, i, z):
        v = self.verts[i]
        k = self.tag[i]
        if k == 3:
            c1, c2 = (v[0], v[1], v[2], z), (v[1], v[2], v[3], z)
        elif k == 2:
            c1, c2 = (v[0], v[1], z, v[3]), (v[1], v[2], z, v[3])
        else:
            c1, c2 = (v[0], z, v[2], v[3]), (v[1], z, v[2], v[3])
        ktag = k - 1 if k > 1 else 3
        self._detach(i, v)
        self.alive[i] = False
        for bit, c in enumerate((c1, c2)):
            j = len(self.verts)
            self.verts.append(c)
            self.tag.append(ktag)
            self.gen.append(self.gen[i] + 1)
            self.root.append(self.root[i])
            self.addr.append(2 * self.addr[i] + bit)
            self.origin.append(self.origin[i])
            self.alive.append(True)
            self._attach(j, c)

    def refine_tet(self, i, depth=0):
        if depth > MAX_CLOSURE_DEPTH:
            raise RefinementError(
                f"closure recursion exceeded depth {MAX_CLOSURE_DEPTH}; "
                "initial tagging is probably not compatible")
        e = self.ref_edge(i)
        while True:
            patch = sorted(self.edge_map[e])
            bad = next((s for s in patch if self.ref_edge(s) != e), None)
            if bad is None:
                break
            self.refine_tet(bad, depth + 1)
        z = self.midpoint(e)
        for s in patch:
            self.bisect(s, z)

    def freeze(self):
        live = [i for i, a in enumerate(self.alive) if a]
        m = self.mesh
        return Mesh(
            np.array(self.coords),
            np.array([self.verts[i] for i in live]),
            tags=[self.tag[i] for i in live],
            gen=[self.gen[i] for i in live],
            root=[self.root[i] for i in live],
            addr=[self.addr[i] for i in live],
            parent=[self.origin[i] for i in live],
            level=m.level + 1,
            lineage=m.lineage,
        )


def bisect(mesh, tet_id):
    """Bisect a single tetrahedron without closure (may leave a hanging node)."""
    if not 0 <= tet_id < mesh.n_tets:
        raise IndexError(f"tet id {tet_id} out of range")
    w = _Work(mesh)
    w.bisect(tet_id, w.midpoint(w.ref_edge(tet_id)))
    return w.freeze()


def refine(mesh, marked):
    """Smallest conforming bisection refinement in which no marked tet survives."""
    marked = sorted(set(int(i) for i in marked))
    if not marked:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_tets:
        raise IndexError("marked tet id out of range")
    w = _Work(mesh)
    for i in marked:
        if w.alive[i]:
            w.refine_tet(i)
    return w.freeze()


def refine_uniform(mesh, times=1):
    for _ in range(times):
        mesh = refine(mesh, range(mesh.n_tets))
    return mesh


# -- lineage -----------------------------------------------------------------

def ancestor_map(coarse, fine):
    """Index of the coarse ancestor of every fine tetrahedron."""
    if coarse.lineage != fine.lineage:
        raise LineageError("meshes do not share an initial mesh")
    index = {k: i for i, k in enumerate(coarse.keys())}
    out = np.empty(fine.n_tets, dtype=np.int64)
    for j, (r, a) in enumerate(fine.keys()):
        while a:
            i = index.get((r, a))
            if i is not None:
                out[j] = i
                break
            a >>= 1
        else:
            raise LineageError(f"fine tet {j} has no ancestor in the coarse mesh")
    return out


def containment_map(coarse, fine, tol=1e-12, candidates=24):
    """Coarse element containing each fine element, found geometrically.

    Works for nested meshes without shared bisection history (e.g. Kuhn
    meshes with n and 2n cells per axis).  Raises :class:`LineageError`
    if some fine element lies in no single coarse element.
    """
    from scipy.spatial import cKDTree

    k = min(candidates, coarse.n_tets)
    _, cand = cKDTree(coarse.barycenters).query(fine.barycenters, k=k)
    cand = cand.reshape(fine.n_tets, k)
    out = np.full(fine.n_tets, -1, dtype=np.int64)
    corners = fine.vertices[fine.tets]                       # (nf, 4, 3)
    todo = np.arange(fine.n_tets)
    for c in range(k):
        if len(todo) == 0:
            break
        ids = np.repeat(cand[todo, c], 4)
        lam = coarse.locate(ids, corners[todo].reshape(-1, 3)).reshape(len(todo), 16)
        inside = lam.min(axis=1) >= -tol
        out[todo[inside]] = cand[todo[inside], c]
        todo = todo[~inside]
    if len(todo):
        raise LineageError(f"{len(todo)} fine tets are not contained in a coarse tet")
    return out


def nested_map(coarse, fine):
    """Ancestor map from bisection lineage, or from geometry for unrelated lineages."""
    if coarse.lineage == fine.lineage:
        return ancestor_map(coarse, fine)
    return containment_map(coarse, fine)


def ancestors_not_in(mesh_H, mesh_h):
    """Coarse tets absent from the fine mesh, i.e. the ones that were refined."""
    anc = ancestor_map(mesh_H, mesh_h)
    fine_keys = set(mesh_h.keys())
    refined = {int(i) for i, k in enumerate(mesh_H.keys()) if k not in fine_keys}
    # every refined coarse tet must be covered by its descendants
    if not refined <= set(anc.tolist()):
        raise LineageError("coarse tet neither kept nor refined")
    return refined


# -- generators --------------------------------------------------------------

def _kuhn_tets(index, cells):
    """Six Kuhn tetrahedra per cell; ``index(i, j, k)`` maps lattice points."""
    tets = []
    for i, j, k in cells:
        c = np.array([i, j, k])
        for perm in itertools.permutations(range(3)):
            p = c.copy()
            path = [index(*p)]
            for axis in perm:
                p[axis] += 1
                path.append(index(*p))
            tets.append(path)
    return np.array(tets, dtype=np.int64)


def _lattice_mesh(n_axis, lo, h, cells):
    m = n_axis + 1

    def index(i, j, k):
        return (i * m + j) * m + k

    tets = _kuhn_tets(index, cells)
    g = lo + h * np.arange(m)
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    used, inv = np.unique(tets, return_inverse=True)
    return Mesh(pts[used], inv.reshape(tets.shape))


def generate_cube(n, lo=0.0, hi=1.0):
    """Kuhn tetrahedralisation of the cube [lo, hi]^3 with n cells per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cells = itertools.product(range(n), repeat=3)
    return _lattice_mesh(n, lo, (hi - lo) / n, cells)


def generate_fichera(n):
    """Fichera corner (-1, 1)^3 minus [0, 1)^3, n cells per unit length."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cells = [c for c in itertools.product(range(2 * n), repeat=3)
             if not all(ci >= n for ci in c)]
    return _lattice_mesh(2 * n, -1.0, 1.0 / n, cells)
