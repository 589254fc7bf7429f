"""Command-line front end: mesh generation, energies, gradient checks, solves and sweeps.

Exit codes: 0 success, 2 infeasible termination, 3 input error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import generators as gen
from . import loop, pl, ss
from .io import MeshFormatError, read_mesh, write_mesh
from .mesh import MeshError, TriMesh, invert_sphere, require_valid

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3, 4

PL_ENERGIES = ("A", "V", "M_Cotan", "M_Steiner", "W_Centroid", "W_Voronoi", "W_EffArea",
               "W_NormalCur", "W_Bobenko", "Dirichlet")
SS_ENERGIES = ("SS_A", "SS_V", "SS_M", "SS_W")


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# --- helpers ---------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(path, args) -> TriMesh:
    mesh = read_mesh(path)
    if getattr(args, "invert", None):
        c = args.invert
        if len(c) != 4:
            raise InputError("--invert takes cx,cy,cz,radius")
        mesh = invert_sphere(mesh, c[:3], c[3])
    for _ in range(getattr(args, "loop_subdivide", 0) or 0):
        mesh = loop.loop_subdivide(mesh)
    return mesh


def _structure(args, mesh: TriMesh):
    if getattr(args, "omega", None) is None:
        return pl.Equilateral()
    om = args.omega
    if len(om) != 2:
        raise InputError("--omega takes re,im")
    grid = args.grid
    if grid is None or len(grid) != 2:
        raise InputError("--omega needs --grid m,n (the torus grid size)")
    return pl.TorusLattice(complex(om[0], om[1]), int(grid[0]), int(grid[1]))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def _finite(x):
    """JSON has no inf/nan; encode them as strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _dump(doc, path=None):
    text = json.dumps(_finite(doc), indent=2, default=_json_default, sort_keys=False) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


# --- mesh gen --------------------------------------------------------------

def cmd_mesh_gen(args) -> int:
    kind = args.kind
    if kind == "sph-torus":
        mesh = gen.spherical_torus(args.m, args.n, args.eps)
    elif kind == "plan-torus":
        if len(args.r) != args.m:
            raise InputError(f"--r needs m = {args.m} radii, got {len(args.r)}")
        mesh = gen.planar_torus(args.m, args.n, args.r)
    elif kind == "rev-torus":
        mesh = gen.revolution_torus(args.m, args.n, args.R, args.r)
    else:
        mesh = gen.sphere_mesh(args.solid, args.levels, args.project, args.flatten)
    if args.perturb:
        mesh = gen.perturb(mesh, args.perturb, args.seed)
    write_mesh(mesh, args.output)
    print(json.dumps({"output": str(args.output), "vertices": mesh.n_vertices, "faces": mesh.n_faces,
                      "genus": mesh.genus}))
    return EXIT_OK


# --- energy ----------------------------------------------------------------

def _pl_energy(mesh: TriMesh, name: str, structure) -> float:
    if name == "A":
        return pl.area(mesh)
    if name == "V":
        return pl.volume(mesh)
    if name.startswith("M_"):
        return pl.m_value(mesh, name[2:].lower())
    if name.startswith("W_"):
        return pl.w_value(mesh, name[2:].lower())
    if name == "Dirichlet":
        return pl.dirichlet_energy(mesh, structure, gradient=False)[0]
    raise InputError(f"unknown energy {name!r}")


def _select(args) -> list[str]:
    names = []
    if args.which:
        names = [w.strip() for w in args.which.split(",") if w.strip()]
    if args.w_bobenko:
        names.append("W_Bobenko")
    if args.ss:
        names += list(SS_ENERGIES)
    if not names:
        names = list(PL_ENERGIES)
    known = set(PL_ENERGIES) | set(SS_ENERGIES)
    bad = [n for n in names if n not in known]
    if bad:
        raise InputError(f"unknown energies {bad}; choose from {sorted(known)}")
    return list(dict.fromkeys(names))


def cmd_energy(args) -> int:
    mesh = _load(args.mesh, args)
    require_valid(mesh)
    names = _select(args)
    structure = _structure(args, mesh)
    out = {}
    for name in names:
        if name in PL_ENERGIES:
            out[name] = _pl_energy(mesh, name, structure)
    if any(n in SS_ENERGIES for n in names):
        tables = ss.tables_for(mesh, args.quad_n, args.quad_depth)
        vals = ss.ss_energy(mesh, tables, gradient=False).values
        for k, v in vals.items():
            if "SS_" + k in names:
                out["SS_" + k] = v
    A, V = pl.area(mesh), pl.volume(mesh)
    v0, m0 = (None, None)
    if A > 0:
        from .optimize import reduced_quantities

        v0, m0 = reduced_quantities(A, V, pl.m_cotan(mesh))
    doc = {"schema": SCHEMA_VERSION, "version": __version__, "input": {str(args.mesh): _sha256(args.mesh)},
           "vertices": mesh.n_vertices, "faces": mesh.n_faces, "genus": mesh.genus,
           "energies": out, "reduced": {"v0": v0, "m0": m0}}
    _dump(doc, args.output)
    return EXIT_OK


# --- gradcheck -------------------------------------------------------------

def _functional(name: str, structure, tables):
    """(value, gradient) callables of a mesh for one named functional."""
    if name == "A":
        return pl.area, pl.grad_area
    if name == "V":
        return pl.volume, pl.grad_volume
    if name == "Dirichlet":
        return (lambda m: pl.dirichlet_energy(m, structure, False)[0],
                lambda m: pl.dirichlet_energy(m, structure, True)[1])
    if name.startswith("W_"):
        v = pl.WVariant(name[2:].lower())
        return (lambda m: pl.w_value(m, v)), (lambda m: pl.w_pl(m, v, gradient=True)[1])
    if name.startswith("M_"):
        v = pl.MVariant(name[2:].lower())
        return (lambda m: pl.m_value(m, v)), (lambda m: pl.m_pl(m, v, gradient=True)[1])
    if name.startswith("SS_"):
        k = name[3:]
        return (lambda m: ss.ss_energy(m, tables, (k,), gradient=False).values[k],
                lambda m: ss.ss_energy(m, tables, (k,)).gradients[k])
    raise InputError(f"unknown functional {name!r}")


def gradcheck(mesh: TriMesh, name: str, samples: int = 10, h: float = 1e-6, seed: int = 0,
              structure=pl.Equilateral(), tables=None) -> dict:
    """Central differences at randomly chosen vertices; relative to the largest analytic entry."""
    if name.startswith("SS_") and tables is None:
        tables = ss.tables_for(mesh)
    f, grad = _functional(name, structure, tables)
    g = np.asarray(grad(mesh))
    rng = np.random.default_rng(seed)
    verts = rng.choice(mesh.n_vertices, size=min(samples, mesh.n_vertices), replace=False)
    step = h * mesh.bbox_diagonal()
    x = mesh.vertices
    worst = 0.0
    for v in verts:
        for d in range(3):
            xp, xm = x.copy(), x.copy()
            xp[v, d] += step
            xm[v, d] -= step
            fd = (f(mesh.with_vertices(xp)) - f(mesh.with_vertices(xm))) / (2 * step)
            worst = max(worst, abs(fd - g[v, d]))
    scale = max(float(np.abs(g[verts]).max()), 1e-300)
    return {"functional": name, "vertices": sorted(int(v) for v in verts), "step": step,
            "max_abs_err": worst, "max_rel_err": worst / scale}


def cmd_gradcheck(args) -> int:
    mesh = _load(args.mesh, args)
    require_valid(mesh)
    structure = _structure(args, mesh)
    tables = None
    names = [n.strip() for n in args.functional.split(",") if n.strip()]
    results, code = {}, EXIT_OK
    for name in names:
        if name.startswith("SS_") and tables is None:
            tables = ss.tables_for(mesh, args.quad_n, args.quad_depth)
        try:
            results[name] = gradcheck(mesh, name, args.samples, args.h, args.seed, structure, tables)
        except (pl.NonSmoothPoint, ss.NotImmersed) as e:
            results[name] = {"functional": name, "error": type(e).__name__, "message": str(e)}
            code = EXIT_NUMERICAL
    _dump({"schema": SCHEMA_VERSION, "version": __version__, "input": {str(args.mesh): _sha256(args.mesh)},
           "seed": args.seed, "results": results}, args.output)
    return code


# --- solve -----------------------------------------------------------------

def _symmetry(spec_text: str, mesh: TriMesh):
    from . import symmetry

    groups = symmetry.GROUPS
    if spec_text in groups:
        mats = groups[spec_text]()
    else:
        path = Path(spec_text)
        if not path.exists():
            raise InputError(f"--sym: {spec_text!r} is neither a group name {sorted(groups)} nor a file")
        try:
            mats = [np.asarray(m, dtype=np.float64) for m in json.loads(path.read_text())]
        except (ValueError, TypeError) as e:
            raise InputError(f"--sym file must be a JSON list of 3x3 matrices: {e}")
        if not mats or any(m.shape != (3, 3) for m in mats):
            raise InputError("--sym file must be a JSON list of 3x3 matrices")
    try:
        return symmetry.build_symmetry(mesh, mats)
    except ValueError as e:
        raise InputError(f"initial mesh is not symmetric under the given group: {e}")


def _problem_spec(args, mesh):
    from .optimize import ProblemSpec

    try:
        return ProblemSpec(
            representation=args.rep, problem=args.problem, w_variant=args.w_variant,
            m_variant=args.m_variant, lam=args.lam, structure=_structure(args, mesh),
            quad_n=args.quad_n, quad_depth=args.quad_depth, A0=args.A0, v0=args.v0, m0=args.m0,
            mu0=args.mu0, mu_growth=args.mu_growth, mu_max=args.mu_max, tol_g=args.tol_g,
            tol_c=args.tol_c, max_iter=args.max_iter, method=args.method,
            deterministic=not args.nondeterministic, symmetrize=args.symmetrize,
            time_limit=args.time_limit, carry_hessian=args.carry_hessian,
            h0_scale=args.h0_scale)
    except ValueError as e:
        raise InputError(str(e))


def cmd_solve(args) -> int:
    from .optimize import OptimizeError, minimize

    mesh = _load(args.mesh, args)
    require_valid(mesh)
    if args.perturb:
        mesh = gen.perturb(mesh, args.perturb, args.seed)
    spec = _problem_spec(args, mesh)
    sym = _symmetry(args.sym, mesh) if args.sym else None
    start = time.perf_counter()
    try:
        res = minimize(mesh, spec, sym)
    except OptimizeError as e:
        _dump({"schema": SCHEMA_VERSION, "version": __version__, "error": str(e)}, args.report)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    elapsed = time.perf_counter() - start
    if args.output:
        write_mesh(res.mesh, args.output)
    if args.figure:
        from .plotting import plot_history

        plot_history(res.history, args.figure, title=f"{spec.problem.value} ({spec.representation.value})")
    summary = res.summary()
    timing = {"seconds": elapsed}
    summary.pop("seconds")
    doc = {"schema": SCHEMA_VERSION, "version": __version__,
           "input": {str(args.mesh): _sha256(args.mesh)}, "seed": args.seed,
           "spec": spec.echo(), "history": res.history, "final": summary, "timing": timing,
           "output": str(args.output) if args.output else None}
    _dump(doc, args.report)
    if not args.report:
        return _solve_code(res)
    print(json.dumps(_finite({"reason": res.reason, "feasible": res.feasible, "W": res.W,
                              "v0": res.v0, "m0": res.m0, "iterations": res.iterations})))
    return _solve_code(res)


def _solve_code(res) -> int:
    if not res.feasible:
        return EXIT_INFEASIBLE
    if res.reason in ("line-search-failure", "non-immersed"):
        return EXIT_NUMERICAL
    return EXIT_OK


# --- verify ----------------------------------------------------------------

def cmd_verify(args) -> int:
    from . import verify

    if args.sweep not in verify.SWEEPS:
        raise InputError(f"unknown sweep {args.sweep!r}; choose from {sorted(verify.SWEEPS)}")
    opts = {k: getattr(args, k) for k in ("m", "n", "ratio") if getattr(args, k) is not None}
    try:
        rows = verify.run_sweep(args.sweep, args.params, args.threads, **opts)
    except ValueError as e:
        raise InputError(str(e))
    stream = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(verify.COLUMNS)
        for r in rows:
            w.writerow([repr(float(r[c])) for c in verify.COLUMNS])
    finally:
        if args.output:
            stream.close()
    if args.figure:
        from .plotting import plot_sweep

        plot_sweep(rows, args.figure, title=verify.SWEEPS[args.sweep].description)
    return EXIT_OK


# --- argument parsing ------------------------------------------------------

def _add_mesh_opts(p):
    p.add_argument("mesh", help="input OBJ or OFF mesh")
    p.add_argument("--invert", type=_floats, metavar="CX,CY,CZ,R",
                   help="apply a sphere inversion before evaluation")
    p.add_argument("--loop-subdivide", type=int, default=0, metavar="K",
                   help="Loop-subdivide the control mesh K times (same limit surface)")
    p.add_argument("--omega", type=_floats, metavar="RE,IM",
                   help="torus lattice conformal structure for the Dirichlet energy")
    p.add_argument("--grid", type=_floats, metavar="M,N", help="torus grid size for --omega")
    p.add_argument("--quad-n", type=int, default=None, help="quadrature grid size (power of two)")
    p.add_argument("--quad-depth", type=int, default=16, help="quadrature rings near irregular vertices")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="willmore", description=__doc__.splitlines()[0])
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top.add_argument("--config", help="file of key = value lines mirroring the command's flags "
                     "(may appear anywhere on the command line)")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True, parser_class=_Parser)
    g = msub.add_parser("gen", help="generate a mesh")
    gsub = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for name, help_ in (("sph-torus", "spherical torus T_{m,n,eps}"), ("plan-torus", "planar torus T_{m,n,r}"),
                        ("sphere", "subdivided platonic solid"), ("rev-torus", "torus of revolution")):
        p = gsub.add_parser(name, help=help_)
        if name != "sphere":
            p.add_argument("--m", type=int, required=True)
            p.add_argument("--n", type=int, required=True)
        if name == "sph-torus":
            p.add_argument("--eps", type=float, required=True)
        elif name == "plan-torus":
            p.add_argument("--r", type=_floats, required=True, metavar="R0,R1,...")
        elif name == "rev-torus":
            p.add_argument("--R", type=float, required=True)
            p.add_argument("--r", type=float, required=True)
        else:
            p.add_argument("--kind", dest="solid", default="octahedron",
                           choices=["octahedron", "icosahedron", "tetrahedron"])
            p.add_argument("--levels", type=int, default=0)
            p.add_argument("--project", action="store_true")
            p.add_argument("--flatten", type=float, nargs="?", const=gen.DEFAULT_FLATTEN, default=None)
        p.add_argument("--perturb", type=float, default=0.0, help="seeded normal noise scale")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("-o", "--output", required=True)
        p.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("energy", help="evaluate energies, JSON to stdout")
    _add_mesh_opts(p)
    p.add_argument("--which", help=f"comma list from {', '.join(PL_ENERGIES + SS_ENERGIES)}")
    p.add_argument("--w-bobenko", action="store_true", help="evaluate W_Bobenko")
    p.add_argument("--ss", action="store_true", help="evaluate the Loop subdivision surface functionals")
    p.add_argument("-o", "--output", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_energy, quad_n=8)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with central differences")
    _add_mesh_opts(p)
    p.add_argument("--functional", required=True, help="comma list, e.g. A,V,W_NormalCur,SS_W")
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--h", type=float, default=1e-6, help="step relative to the bounding-box diagonal")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gradcheck, quad_n=8)

    p = sub.add_parser("solve", help="minimize an energy under constraints")
    _add_mesh_opts(p)
    p.add_argument("--rep", choices=["pl", "loop"], default="loop")
    p.add_argument("--problem", choices=["willmore", "canham", "helfrich"], default="willmore")
    p.add_argument("--w-variant", choices=[v.value for v in pl.WVariant], default="normalcur")
    p.add_argument("--m-variant", choices=[v.value for v in pl.MVariant], default="cotan")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--A0", type=float)
    p.add_argument("--v0", type=float)
    p.add_argument("--m0", type=float)
    p.add_argument("--mu0", type=float, default=10.0)
    p.add_argument("--mu-growth", type=float, default=10.0)
    p.add_argument("--mu-max", type=float, default=1e8)
    p.add_argument("--tol-g", type=float, default=1e-6)
    p.add_argument("--tol-c", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=5000, help="iteration cap per penalty stage")
    p.add_argument("--method", choices=["bfgs", "gd"], default="bfgs")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--h0-scale", choices=["curvature", "gradient"], default="curvature",
                   help="initial BFGS inverse Hessian: s'y/y'y at the first update, or 1/|grad F|")
    p.add_argument("--carry-hessian", action="store_true", help="keep the BFGS inverse Hessian across mu stages")
    p.add_argument("--sym", help="group name (octahedral, d4h, d3, c3v) or JSON file of 3x3 matrices")
    p.add_argument("--symmetrize", action="store_true", help="project iterates onto the symmetric subspace")
    p.add_argument("--nondeterministic", action="store_true")
    p.add_argument("--perturb", type=float, default=0.0, help="seeded normal noise added to the start")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="final mesh file")
    p.add_argument("--report", help="JSON report file (default stdout)")
    p.add_argument("--figure", help="PNG of the optimization history")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="closed-form sweeps, CSV output")
    p.add_argument("sweep", help="bobenko-spherical, bobenko-planar, centroid-limit or effarea-limit")
    p.add_argument("--params", type=_floats, help="comma list of sweep parameters")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default from WILLMORE_THREADS)")
    p.add_argument("-o", "--output", help="CSV file (default stdout)")
    p.add_argument("--figure", help="PNG plot of the sweep")
    p.set_defaults(func=cmd_verify)
    return top


def read_config(path) -> dict:
    """key = value lines; '#' starts a comment; keys use flag names with or without dashes."""
    out = {}
    for no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{no}: expected key = value")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def _leaf_parser(parser, argv):
    """The subparser that handles argv (following the chain of subcommands)."""
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            for tok in argv:
                if tok in a.choices:
                    rest = argv[argv.index(tok) + 1:]
                    return _leaf_parser(a.choices[tok], rest)
    return parser


def _apply_config(parser, argv, cfg: dict):
    leaf = _leaf_parser(parser, argv)
    actions = {a.dest: a for a in leaf._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in actions:
            raise InputError(f"config key {k!r} is not a flag of this command")
        a = actions[k]
        a.required = False  # supplied by the config file
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[k] = v.lower() in ("1", "true", "yes", "on")
        else:
            defaults[k] = a.type(v) if a.type else v
    leaf.set_defaults(**defaults)


def _strip_config(argv):
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
        elif tok == "--config":
            skip = True
        elif not tok.startswith("--config="):
            out.append(tok)
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config:
            argv = _strip_config(argv)
            _apply_config(parser, argv, read_config(known.config))
        args = parser.parse_args(argv)
        return args.func(args)
    except (InputError, MeshFormatError, MeshError, FileNotFoundError, argparse.ArgumentTypeError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (pl.NonSmoothPoint, ss.NotImmersed, NumericalError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
