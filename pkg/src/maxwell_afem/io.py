"""Config files, mesh files, CSV records and legacy VTK output.

Config files are flat ``key = value`` lines; ``#`` starts a comment.
Keys (all optional)::

    domain        cube | fichera | path to a mesh file     (cube)
    n             initial cells per axis, >= 1             (2)
    theta         bulk parameter in (0, 1]                 (0.5)
    target_index  eigenvalue index j >= 1                  (1)
    eps, mu       positive scalar coefficients             (1, 1)
    eig_tol       eigensolver residual tolerance           (1e-9)
    eig_shift     positive shift or "auto"                 (auto)
    max_dofs      stop once a level reaches this size      (50000)
    max_levels    number of refinements                    (6)
    beta          weight in the contraction quantity       (1)
    reference     none | analytic | fine                   (none)
    refinement    adaptive | lattice                       (adaptive)
    out_dir       output directory                         (out)
    seed          eigensolver start-vector seed            (0)
    selftest      off | fail                               (off)
"""
import csv
import math
import os
from dataclasses import dataclass, fields

import numpy as np

from .exceptions import ConfigError
from .mesh import Mesh


@dataclass
class RunConfig:
    domain: str = "cube"
    n: int = 2
    theta: float = 0.5
    target_index: int = 1
    eps: float = 1.0
    mu: float = 1.0
    eig_tol: float = 1e-9
    eig_shift: float | None = None
    max_dofs: int = 50_000
    max_levels: int = 6
    beta: float = 1.0
    reference: str = "none"
    refinement: str = "adaptive"
    out_dir: str = "out"
    seed: int = 0
    selftest: str = "off"

    def validate(self):
        if not 0 < self.theta <= 1:
            raise ConfigError(f"theta = {self.theta} outside (0, 1]", key="theta")
        for key in ("n", "target_index", "max_dofs"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1", key=key)
        if self.max_levels < 0:
            raise ConfigError("max_levels must be >= 0", key="max_levels")
        for key in ("eps", "mu", "eig_tol", "beta"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key=key)
        if self.eig_shift is not None and not self.eig_shift > 0:
            raise ConfigError("eig_shift must be positive", key="eig_shift")
        if self.reference not in ("none", "analytic", "fine"):
            raise ConfigError(f"unknown reference {self.reference!r}", key="reference")
        if self.refinement not in ("adaptive", "lattice"):
            raise ConfigError(f"unknown refinement {self.refinement!r}", key="refinement")
        if self.selftest not in ("off", "fail"):
            raise ConfigError(f"unknown selftest {self.selftest!r}", key="selftest")
        if self.domain not in ("cube", "fichera") and not os.path.isfile(self.domain):
            raise ConfigError(f"domain {self.domain!r} is neither a generator nor a file",
                              key="domain")
        return self

    def to_loop_config(self):
        from .adapt import LoopConfig
        from .eigensolve import EigenConfig

        eig = EigenConfig(tol=self.eig_tol, shift=self.eig_shift, seed=self.seed)
        initial = None
        domain = self.domain
        if domain not in ("cube", "fichera"):
            initial = read_mesh(domain)
            domain = "file"
        return LoopConfig(domain=domain, n=self.n, theta=self.theta,
                          target_index=self.target_index, max_dofs=self.max_dofs,
                          max_levels=self.max_levels, eps=self.eps, mu=self.mu, eig=eig,
                          reference=self.reference, beta=self.beta,
                          refinement=self.refinement, initial_mesh=initial)


_INT_KEYS = {"n", "target_index", "max_dofs", "max_levels", "seed"}
_FLOAT_KEYS = {"theta", "eps", "mu", "eig_tol", "beta"}


def parse_value(key, text, line=None):
    """Convert the string form of one config value."""
    where = f"line {line}: " if line is not None else ""
    names = {f.name for f in fields(RunConfig)}
    if key not in names:
        raise ConfigError(f"{where}unknown key {key!r}", key=key, line=line)
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
        if key == "eig_shift":
            return None if text in ("auto", "none", "") else float(text)
    except ValueError:
        raise ConfigError(f"{where}bad value {text!r} for {key}", key=key,
                          line=line) from None
    return text


def parse_config(text):
    cfg = RunConfig()
    seen = set()
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected 'key = value'", line=i)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {i}: duplicate key {key!r}", key=key, line=i)
        seen.add(key)
        setattr(cfg, key, parse_value(key, value, i))
    return cfg.validate()


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg: RunConfig):
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if v is None:
            v = "auto"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def write_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(format_config(cfg))


# -- meshes --------------------------------------------------------------------

def write_mesh(mesh: Mesh, path):
    """``ntet nvert`` header, vertex coordinates, then ``v0 v1 v2 v3 tag`` rows."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_tets} {mesh.n_vertices}\n")
        for x in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
        for t, k in zip(mesh.tets, mesh.tags):
            fh.write(f"{t[0]} {t[1]} {t[2]} {t[3]} {k}\n")


def read_mesh(path):
    with open(path) as fh:
        rows = [ln.split("#", 1)[0].split() for ln in fh]
    rows = [r for r in rows if r]
    try:
        nt, nv = (int(x) for x in rows[0])
        verts = np.array([[float(x) for x in r] for r in rows[1:1 + nv]])
        body = np.array([[int(x) for x in r] for r in rows[1 + nv:1 + nv + nt]], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed mesh file {path}: {exc}") from None
    if verts.shape != (nv, 3) or body.shape != (nt, 5):
        raise ConfigError(f"malformed mesh file {path}: wrong row counts or widths")
    return Mesh(verts, body[:, :4], tags=body[:, 4])


# -- records -------------------------------------------------------------------

CSV_HEADER = ["level", "ntets", "ndofs", "lambda", "eta_sq", "marked", "gap", "xi_sq", "seconds"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([_fmt(r.level), _fmt(r.n_tets), _fmt(r.n_dofs), _fmt(r.lam),
                        _fmt(r.eta_sq), _fmt(r.n_marked), _fmt(r.gap), _fmt(r.xi_sq),
                        _fmt(r.seconds)])


def read_csv(path):
    """Rows as dicts of ints / floats (None for empty optional columns)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                elif k in ("level", "ntets", "ndofs", "marked"):
                    rec[k] = int(v)
                else:
                    rec[k] = float(v)
            out.append(rec)
    return out


# -- VTK -----------------------------------------------------------------------

def level_fields(level):
    """Cell data for a solved level: eta_sq, |curl u_h| and u_h at barycenters."""
    from .fem import curl_eval, eval_local

    mesh, space, u = level.mesh, level.space, level.pair.u
    curl = np.linalg.norm(curl_eval(space, u), axis=1)
    bary = np.full((mesh.n_tets, 4), 0.25)
    ub = eval_local(mesh.grad_lambda, space.local_coefficients(u), bary)
    return {"eta_sq": level.eta.eta_sq, "curl_norm": curl}, {"u": ub}


def write_vtk(path, mesh: Mesh, scalars=None, vectors=None, title="maxwell_afem"):
    """Legacy ASCII unstructured grid with per-cell scalar and vector data."""
    scalars = scalars or {}
    vectors = vectors or {}
    for name, v in scalars.items():
        if np.shape(v) != (mesh.n_tets,):
            raise ValueError(f"cell scalar {name!r} has shape {np.shape(v)}, "
                             f"expected ({mesh.n_tets},)")
    for name, v in vectors.items():
        if np.shape(v) != (mesh.n_tets, 3):
            raise ValueError(f"cell vector {name!r} has shape {np.shape(v)}, "
                             f"expected ({mesh.n_tets}, 3)")
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x in mesh.vertices:
            fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for t in mesh.tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        fh.write("10\n" * mesh.n_tets)
        if scalars or vectors:
            fh.write(f"CELL_DATA {mesh.n_tets}\n")
        for name, v in scalars.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("".join(f"{float(x):.17g}\n" for x in v))
        for name, v in vectors.items():
            fh.write(f"VECTORS {name} double\n")
            fh.write("".join(f"{a:.17g} {b:.17g} {c:.17g}\n" for a, b, c in v))


def read_vtk(path):
    """Minimal reader for files from :func:`write_vtk`.

    Returns ``(points, cells, cell_types, cell_data)`` where ``cell_data``
    maps array names to numpy arrays.
    """
    with open(path) as fh:
        tok = fh.read().split("\n")
    i = 4
    points = cells = types = None
    data = {}
    while i < len(tok):
        parts = tok[i].split()
        i += 1
        if not parts:
            continue
        head = parts[0]
        if head == "POINTS":
            n = int(parts[1])
            points = np.array([[float(x) for x in tok[i + j].split()] for j in range(n)])
            i += n
        elif head == "CELLS":
            n = int(parts[1])
            cells = np.array([[int(x) for x in tok[i + j].split()[1:]] for j in range(n)])
            i += n
        elif head == "CELL_TYPES":
            n = int(parts[1])
            types = np.array([int(tok[i + j]) for j in range(n)])
            i += n
        elif head == "SCALARS":
            n = len(cells)
            data[parts[1]] = np.array([float(tok[i + 1 + j]) for j in range(n)])
            i += 1 + n
        elif head == "VECTORS":
            n = len(cells)
            data[parts[1]] = np.array([[float(x) for x in tok[i + j].split()] for j in range(n)])
            i += n
    return points, cells, types, data


def check_finite(values, name):
    if not all(math.isfinite(v) for v in np.ravel(values)):
        raise ValueError(f"{name} contains non-finite values")
