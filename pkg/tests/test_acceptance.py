"""Acceptance criteria, one test each. A summary line per criterion is printed after the run."""

import math
import time

import numpy as np
import pytest

from willmore import generators as gen
from willmore import optimize as opt
from willmore import pl
from willmore import ss
from willmore import symmetry
from willmore import verify
from willmore.cli import gradcheck
from willmore.mesh import midpoint_subdivide


@pytest.fixture
def report(record_property):
    def rec(n, text):
        record_property("criterion", (n, text))
        print(f"criterion {n}: {text}")
    return rec


def test_c01_exact_values(report):
    t = time.perf_counter()
    cube, tet = gen.unit_cube(), gen.tetrahedron()
    e_cube = (abs(pl.area(cube) - 6), abs(pl.volume(cube) - 1), abs(pl.m_steiner(cube) - 6 * math.pi))
    E = pl.dirichlet_energy(tet, gradient=False)[0]
    e_tet = (abs(pl.area(tet) - 8 * math.sqrt(3)), abs(pl.volume(tet) - 8 / 3), abs(E - 8 * math.sqrt(3)))
    dt = time.perf_counter() - t
    report(1, f"cube errs {max(e_cube[:2]):.1e}/{e_cube[2]:.1e}, tetra max err {max(e_tet):.1e}, {dt:.2f}s")
    assert max(e_cube[:2]) <= 1e-12 and e_cube[2] <= 1e-10
    assert max(e_tet) <= 1e-10
    assert dt < 1


PL_NAMES = ["A", "V", "W_Centroid", "W_Voronoi", "W_EffArea", "W_NormalCur", "W_Bobenko",
            "M_Cotan", "M_Steiner", "Dirichlet"]


def test_c02_gradient_suite(report):
    t = time.perf_counter()
    sphere = gen.perturb(gen.sphere_mesh("octahedron", 2, project=True), 0.03, seed=1)
    torus = gen.perturb(gen.revolution_torus(8, 10, 2.0, 0.8), 0.03, seed=2)
    lattice = pl.TorusLattice(complex(0.3, 0.9), 8, 10)
    worst = {}
    for k, mesh in enumerate((sphere, torus)):
        for name in PL_NAMES:
            r = gradcheck(mesh, name, samples=6, seed=k)
            worst[name] = max(worst.get(name, 0.0), r["max_rel_err"])
    worst["Dirichlet_torus"] = gradcheck(torus, "Dirichlet", samples=6, structure=lattice)["max_rel_err"]
    blob = gen.perturb(midpoint_subdivide(gen.octahedron()), 0.05, seed=3)
    tables = ss.tables_for(blob, n=2)
    for name in ("SS_A", "SS_V", "SS_M", "SS_W"):
        for mesh, tb in ((blob, tables), (torus, ss.tables_for(torus, n=2))):
            r = gradcheck(mesh, name, samples=4, tables=tb)
            worst[name] = max(worst.get(name, 0.0), r["max_rel_err"])
    dt = time.perf_counter() - t
    name = max(worst, key=worst.get)
    report(2, f"{len(worst)} functionals, worst rel err {worst[name]:.1e} ({name}), {dt:.0f}s")
    assert worst[name] <= 1e-5
    assert dt < 120


def test_c03_spherical_tori(report):
    t = time.perf_counter()
    rows = verify.run_sweep("bobenko-spherical", params=[0.3, 0.1, 0.03, 0.01, 0.003], m=10, n=20)
    e = [r["energy"] for r in rows]
    dt = time.perf_counter() - t
    decreasing = all(b < a for a, b in zip(e, e[1:]))
    report(3, f"W = {', '.join(f'{x:.5f}' for x in e)}; |W - 4pi| = {abs(e[-1] - 4 * math.pi):.1e}, {dt:.2f}s")
    assert decreasing and abs(e[-1] - 4 * math.pi) <= 1e-2
    assert dt < 10


def test_c04_planar_closed_form(report):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        m, n = int(rng.integers(3, 9)), int(rng.integers(3, 13))
        r = np.sort(rng.uniform(0.05, 1.0, m))[::-1]
        r[0] = 1.0
        w = pl.w_bobenko(gen.planar_torus(m, n, r))
        worst = max(worst, abs(w - verify.bobenko_planar_closed_form(n, r)))
    dt = time.perf_counter() - t
    report(4, f"20 random tori, max |beta-sum - closed form| = {worst:.1e}, {dt:.2f}s")
    assert worst <= 1e-9
    assert dt < 5


def test_c05_pl_limits(report):
    t = time.perf_counter()
    c = verify.run_sweep("centroid-limit", params=[1e-3], n=8)[0]
    e = verify.run_sweep("effarea-limit", params=[1e-4], n=8)[0]
    dt = time.perf_counter() - t
    rc = abs(c["energy"] / c["closed_form"] - 1)
    re = abs(e["energy"] / e["closed_form"] - 1)
    report(5, f"centroid {c['energy']:.4f} vs {c['closed_form']:.4f} ({rc:.1e}), "
              f"effarea {e['energy']:.4f} vs {e['closed_form']:.4f} ({re:.1e}), {dt:.2f}s")
    assert c["closed_form"] == pytest.approx(8.4853, abs=1e-4)
    assert e["closed_form"] == pytest.approx(16.9706, abs=1e-4)
    assert rc <= 0.01 and re <= 0.01
    assert dt < 5


def test_c06_bobenko_ground_state(report):
    t = time.perf_counter()
    w = pl.w_bobenko(gen.sphere_mesh("octahedron", 2, project=True))
    dt = time.perf_counter() - t
    report(6, f"W_Bobenko = {w:.12f}, |W - 4pi| = {abs(w - 4 * math.pi):.1e}, {dt:.3f}s")
    assert abs(w - 4 * math.pi) <= 1e-8
    assert dt < 1


def test_c07_loop_sphere(report):
    mesh = gen.sphere_mesh("octahedron", 2)
    r = opt.minimize(mesh, opt.ProblemSpec(representation="loop"))
    rel = abs(r.values["W"] / (4 * math.pi) - 1)
    report(7, f"{mesh.n_vertices} control points: W = {r.values['W']:.5f} ({rel:.1e} from 4pi), "
              f"{r.reason}, feasible={r.feasible}, {r.seconds:.1f}s")
    assert r.feasible and rel <= 0.01
    assert r.seconds < 300


def test_c08_loop_torus(report):
    mesh = gen.revolution_torus(16, 16, math.sqrt(2), 1.0)
    r = opt.minimize(mesh, opt.ProblemSpec(representation="loop"))
    target = 2 * math.pi ** 2
    rel = abs(r.values["W"] / target - 1)
    report(8, f"W = {r.values['W']:.5f} ({rel:.1e} from 2pi^2), {r.reason}, feasible={r.feasible}, "
              f"{r.seconds:.0f}s")
    assert rel <= 0.02
    assert r.seconds < 900


def _min_angle_deg(mesh):
    x, f = mesh.vertices, mesh.faces
    out = np.inf
    for k in range(3):
        a = x[f[:, (k + 1) % 3]] - x[f[:, k]]
        b = x[f[:, (k + 2) % 3]] - x[f[:, k]]
        c = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out = min(out, float(np.degrees(np.arccos(np.clip(c, -1, 1))).min()))
    return out


def _flatness(mesh):
    # smallest over largest principal extent; about 0.63 for the starting torus
    s = np.linalg.svd(mesh.vertices - mesh.vertices.mean(0), compute_uv=False)
    return float(s[-1] / s[0])


def test_c09_regularization_prevents_collapse(report):
    t = time.perf_counter()
    m = n = 12
    mesh = gen.revolution_torus(m, n, math.sqrt(2), 1.0)
    square = pl.TorusLattice(complex(1, 1), m, n)  # untwisted square structure of this grid
    bare = opt.minimize(mesh, opt.ProblemSpec(representation="pl", w_variant="centroid", time_limit=400))
    reg = opt.minimize(mesh, opt.ProblemSpec(representation="pl", w_variant="normalcur", lam=2.0,
                                             structure=square, time_limit=400))
    ratio = pl.dirichlet_energy(reg.mesh, square, gradient=False)[0] / pl.area(reg.mesh)
    dt = time.perf_counter() - t
    b_ang, r_ang = _min_angle_deg(bare.mesh), _min_angle_deg(reg.mesh)
    report(9, f"centroid W = {bare.values['W']:.3f} (2pi^2 = {2 * math.pi ** 2:.3f}), min angle {b_ang:.1e} deg, "
              f"flatness {_flatness(bare.mesh):.2f}; normalcur+2E W = {reg.values['W']:.3f}, E/A = {ratio:.4f}, "
              f"min angle {r_ang:.1f} deg, flatness {_flatness(reg.mesh):.2f}; {dt:.0f}s")
    assert bare.values["W"] < 2 * math.pi ** 2 and b_ang < 1.0
    assert ratio <= 1.05 and r_ang >= 10.0 and _flatness(reg.mesh) >= 0.5
    assert dt < 900


def _max_deviation(mesh, spec, sym):
    rows = []
    r = opt.minimize(mesh, spec, sym, callback=rows.append)
    return max(row["symmetry_deviation"] for row in rows) / mesh.bbox_diagonal(), r


def test_c11_symmetry_preservation(report):
    t = time.perf_counter()
    runs = []
    fine = gen.sphere_mesh("octahedron", 3, project=True, flatten=0.6)
    coarse = gen.sphere_mesh("octahedron", 2, project=True, flatten=0.6)
    # one penalty stage of exactly the capped length, no early exit
    fixed = dict(max_iter=200, mu_max=10.0, tol_g=0.0, stall_window=0)
    cases = [
        ("gd pl", fine, opt.ProblemSpec(representation="pl", lam=2.0, method="gd", **fixed)),
        ("gd loop", coarse, opt.ProblemSpec(representation="loop", method="gd", **fixed)),
        ("bfgs pl", coarse, opt.ProblemSpec(representation="pl", lam=2.0, **fixed)),
        ("bfgs loop", coarse, opt.ProblemSpec(representation="loop", max_iter=200)),
    ]
    for label, mesh, spec in cases:
        sym = symmetry.build_symmetry(mesh, symmetry.d4h_group())
        dev, r = _max_deviation(mesh, spec, sym)
        runs.append((label, dev, r.iterations))
    dt = time.perf_counter() - t
    report(11, "; ".join(f"{k} {n} it dev/bbox {d:.1e}" for k, d, n in runs) + f", {dt:.0f}s")
    assert all(d <= 1e-10 for _, d, _ in runs)
    assert [n for k, _, n in runs if k.startswith("gd")] == [200, 200]
    assert dt < 120


def _canham(v0, flatten=None, time_limit=600.0):
    # 3x-subdivided octahedron (258 control points), slightly perturbed off the symmetric start
    mesh = gen.perturb(gen.sphere_mesh("octahedron", 3, flatten=flatten), 1e-3, seed=0)
    spec = opt.ProblemSpec(representation="loop", problem="canham", v0=v0, mu0=1e3,
                           time_limit=time_limit, carry_hessian=True)
    return opt.minimize(mesh, spec)


@pytest.mark.slow
def test_c10_canham(report):
    t = time.perf_counter()
    out = []
    ok = True
    # the oblate v0 = 0.5 branch converges slowly near feasibility and gets the larger budget
    for v0, target, below, limit in ((0.85, 16.16, None, 600.0), (0.5, 25.05, 8 * math.pi, 1000.0)):
        for flatten in (None, 0.6):
            r = _canham(v0, flatten, limit)
            W = r.values["W"]
            hit = r.feasible and abs(W / target - 1) <= 0.02 and (below is None or W < below)
            if hit:
                break  # otherwise repeat once from the flattened start
        ok &= hit
        start = "flattened" if flatten else "octahedron"
        out.append(f"v0={v0}: W = {W:.4f} (target {target}, {abs(W / target - 1):.1e}) from {start}, "
                   f"{r.reason}, feasible={r.feasible}, {r.seconds:.0f}s")
    dt = time.perf_counter() - t
    report(10, "; ".join(out) + f"; total {dt:.0f}s")
    assert ok
    assert dt < 1800


@pytest.mark.extended
def test_c12_helfrich_pear(report):
    # tapered axial start: triangular-pyramid symmetry, no top/bottom mirror
    mesh = gen.axial_mesh(2, taper=0.3)
    spec = opt.ProblemSpec(representation="loop", problem="helfrich", v0=0.8, m0=1.2, time_limit=900)
    r = opt.minimize(mesh, spec)
    rel = abs(r.values["W"] / 20.44 - 1)
    report(12, f"pear W = {r.values['W']:.4f} ({rel:.1e} from 20.44), {r.reason}, feasible={r.feasible}, "
               f"{r.seconds:.0f}s")
    assert r.feasible and rel <= 0.02
