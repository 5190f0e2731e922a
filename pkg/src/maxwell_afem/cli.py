"""Command-line interface: ``maxwell-afem {solve,adapt,verify,mesh}``.

Values come from the defaults, then the ``--config`` file, then explicit
flags (flags win).  Exit status: 0 success, 1 a check failed, 2 error.
"""
import argparse
import os
import sys
import warnings
from dataclasses import fields, replace

import numpy as np

from . import io as afem_io
from .exceptions import AFEMError

THREADS_ENV = "MAXWELL_AFEM_THREADS"

_FLAG_HELP = {
    "domain": "cube, fichera or a mesh file path",
    "n": "initial cells per axis",
    "theta": "Doerfler bulk parameter in (0, 1]",
    "target_index": "index j of the target eigenvalue",
    "eps": "permittivity (scalar)",
    "mu": "permeability (scalar)",
    "eig_tol": "eigensolver residual tolerance",
    "eig_shift": "shift-invert shift (positive number or 'auto')",
    "max_dofs": "stop once a level reaches this many dofs",
    "max_levels": "maximum number of refinements",
    "beta": "weight of the error term in the contraction quantity",
    "reference": "none, analytic (unit cube) or fine (final mesh refined twice)",
    "refinement": "adaptive (mark + bisect) or lattice (regenerate with 2n cells)",
    "out_dir": "output directory",
    "seed": "eigensolver start-vector seed",
    "selftest": "off or fail (verify: inject a failing check)",
}


def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file; explicit flags override it")
    p.add_argument("--threads", type=int,
                   help=f"cap BLAS/LAPACK threads (env {THREADS_ENV} is the fallback)")
    for f in fields(afem_io.RunConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, help=_FLAG_HELP[f.name])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maxwell-afem",
        description="Adaptive edge-element solver for the Maxwell cavity eigenproblem. "
                    "Precedence: built-in defaults < --config file < command-line flags.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve on one mesh and report the spectrum")
    _add_config_flags(p)
    p.add_argument("--k", type=int, default=6, help="number of eigenvalues to report")
    p.add_argument("--no-vtk", action="store_true", help="skip the VTK file")

    p = sub.add_parser("adapt", help="run the adaptive loop")
    _add_config_flags(p)
    p.add_argument("--no-vtk", action="store_true", help="skip per-level VTK files")

    p = sub.add_parser("verify", help="run the theory checks and print PASS/FAIL lines")
    _add_config_flags(p)

    p = sub.add_parser("mesh", help="generate, refine and inspect meshes")
    p.add_argument("--domain", default="cube", help="cube, fichera or a mesh file path")
    p.add_argument("--n", type=int, default=1, help="cells per axis")
    p.add_argument("--refine", type=int, default=0, help="uniform bisection rounds")
    p.add_argument("--out", help="mesh file to write")
    p.add_argument("--vtk", help="also write a VTK file")
    return parser


def resolve_config(args):
    cfg = afem_io.read_config(args.config) if args.config else afem_io.RunConfig()
    for f in fields(afem_io.RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, afem_io.parse_value(f.name, v))
    return cfg.validate()


def _limit_threads(args):
    n = getattr(args, "threads", None)
    if n is None and os.environ.get(THREADS_ENV):
        n = int(os.environ[THREADS_ENV])
    if n is None:
        return None
    if n < 1:
        raise AFEMError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def cmd_solve(args, cfg):
    from .adapt import initial_mesh, solve_level

    loop = cfg.to_loop_config()
    loop = replace(loop, eig=replace(loop.eig, k=args.k))
    level = solve_level(initial_mesh(loop), loop)
    print(f"mesh: {level.mesh.n_tets} tets, {level.space.n_dofs} dofs")
    if len(level.pairs) < args.k:
        print(f"only {len(level.pairs)} positive eigenvalues exist on this mesh")
    for i, pair in enumerate(level.pairs, start=1):
        print(f"lambda_{i} = {pair.lam:.12g}  (residual {pair.residual:.2e})")
    if not args.no_vtk:
        os.makedirs(cfg.out_dir, exist_ok=True)
        sc, vec = afem_io.level_fields(level)
        afem_io.write_vtk(os.path.join(cfg.out_dir, "solve.vtk"), level.mesh, sc, vec)
    return 0


def cmd_adapt(args, cfg):
    from .adapt import iterate_levels, make_record, rate_fit
    from .reference import make_reference

    loop = cfg.to_loop_config()
    os.makedirs(cfg.out_dir, exist_ok=True)
    levels, records = [], []
    for level in iterate_levels(loop):
        levels.append(level)
        rec = make_record(level)
        records.append(rec)
        print(f"level {rec.level:2d}: {rec.n_tets:7d} tets {rec.n_dofs:7d} dofs "
              f"lambda {rec.lam:.10g} eta^2 {rec.eta_sq:.4e} marked {rec.n_marked}")
        if not args.no_vtk:
            sc, vec = afem_io.level_fields(level)
            afem_io.write_vtk(os.path.join(cfg.out_dir, f"level_{rec.level:03d}.vtk"),
                              level.mesh, sc, vec)
    ref = None
    if loop.reference != "none":
        ref = make_reference(loop, levels)
        records = [make_record(lv, ref.errors(lv), loop.beta) for lv in levels]
    afem_io.write_csv(records, os.path.join(cfg.out_dir, "adapt.csv"))
    dofs = [r.n_dofs for r in records]
    try:
        print(f"rate eta^2 vs ndofs: {rate_fit(dofs, [r.eta_sq for r in records]):.3f}")
        if ref is not None:
            err = [abs(ref.lam - r.lam) for r in records]
            print(f"rate |lambda - lambda_ref| vs ndofs: {rate_fit(dofs, err):.3f}")
    except ValueError as exc:
        print(f"rate unavailable: {exc}")
    return 0


def cmd_verify(args, cfg):
    from .verify import run_theory_checks

    if cfg.reference == "none":
        cfg.reference = "analytic" if cfg.domain == "cube" else "fine"
    report, records, _ = run_theory_checks(cfg.to_loop_config())
    if cfg.selftest == "fail":
        report.add("selftest", "forced", 1.0, 0.0, 1.0, False, "selftest = fail")
    os.makedirs(cfg.out_dir, exist_ok=True)
    report.to_csv(os.path.join(cfg.out_dir, "theory.csv"))
    afem_io.write_csv(records, os.path.join(cfg.out_dir, "adapt.csv"))
    text = report.summary()
    with open(os.path.join(cfg.out_dir, "theory.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0 if report.passed else 1


def cmd_mesh(args):
    from . import mesh as meshmod

    if args.domain == "cube":
        m = meshmod.generate_cube(args.n)
    elif args.domain == "fichera":
        m = meshmod.generate_fichera(args.n)
    else:
        m = afem_io.read_mesh(args.domain)
    m = meshmod.refine_uniform(m, args.refine)
    print(f"{m.n_tets} tets, {m.n_vertices} vertices, {len(m.edges)} edges, "
          f"{len(m.faces)} faces, {int(m.boundary_face.sum())} boundary faces")
    print(f"min quality {m.quality().min():.4f}, conforming {m.is_conforming()}")
    if args.out:
        afem_io.write_mesh(m, args.out)
    if args.vtk:
        afem_io.write_vtk(args.vtk, m)
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            limiter = _limit_threads(args)
            try:
                if args.command == "mesh":
                    return cmd_mesh(args)
                cfg = resolve_config(args)
                np.random.seed(cfg.seed)
                return {"solve": cmd_solve, "adapt": cmd_adapt,
                        "verify": cmd_verify}[args.command](args, cfg)
            finally:
                if limiter is not None:
                    limiter.unregister()
    except (AFEMError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
