import numpy as np
import pytest

from willmore import generators as gen
from willmore import loop
from willmore.mesh import MeshError, validate


def _points(n, rng, inner=0.0):
    v, w = rng.random(n), rng.random(n)
    flip = v + w > 1
    v[flip], w[flip] = 1 - v[flip], 1 - w[flip]
    keep = v + w > inner
    return v[keep], w[keep]


def test_beta_valence6():
    assert loop.loop_beta(6) == pytest.approx(1 / 16, abs=1e-16)


def test_subdivide_counts():
    o = gen.octahedron()
    s = loop.loop_subdivide(o)
    assert (s.n_vertices, s.n_faces) == (o.n_vertices + o.topology.n_edges, 4 * o.n_faces)
    assert validate(s).genus == 0


def test_subdivide_affine(rng):
    m = gen.perturb(gen.revolution_torus(5, 7, 2.0, 1.0), 0.1, seed=0)
    L, t = rng.normal(size=(3, 3)), rng.normal(size=3)
    a = loop.loop_subdivide(m.with_vertices(m.vertices @ L.T + t)).vertices
    b = loop.loop_subdivide(m).vertices @ L.T + t
    assert np.allclose(a, b, atol=1e-12)


def test_subdivide_edge_rule():
    m = gen.perturb(gen.icosahedron(), 0.05, seed=1)
    s = loop.loop_subdivide(m)
    e, opp, x = m.topology.edges, m.topology.edge_opposite, m.vertices
    k = 7
    expect = 3 / 8 * (x[e[k, 0]] + x[e[k, 1]]) + 1 / 8 * (x[opp[k, 0]] + x[opp[k, 1]])
    assert np.allclose(s.vertices[m.n_vertices + k], expect, atol=1e-15)


def test_regular_basis_partition(rng):
    v, w = _points(100, rng)
    b = loop.regular_basis(v, w, order=2)
    assert np.allclose(b[0].sum(-1), 1, atol=1e-13)
    for d in b[1:]:
        assert np.allclose(d.sum(-1), 0, atol=1e-12)
    assert np.all(b[0] >= -1e-15)


def test_regular_linear_reproduction(rng):
    c = np.array([[a, b, 0.0] for a, b in loop.REGULAR_TEMPLATE])
    v, w = _points(100, rng)
    p, pv, pw = loop.eval_regular(c, v, w, order=1)
    assert np.allclose(p[:, :2], np.c_[v, w], atol=1e-13)
    assert np.allclose(pv, [1, 0, 0], atol=1e-12)
    assert np.allclose(pw, [0, 1, 0], atol=1e-12)


def test_regular_basis_domain():
    with pytest.raises(ValueError):
        loop.regular_basis(0.8, 0.5)


def test_regular_coefficients_exact():
    coef = loop.regular_coefficients()
    assert len(coef) == 12 and all(len(r) == 15 for r in coef)
    # the corner value is the valence-6 limit mask: 1/2 at c0, 1/12 at each neighbour
    assert coef[0][0] * 12 == 6 and all(coef[i][0] * 12 == 1 for i in range(1, 7))


@pytest.mark.parametrize("N", [3, 4, 5, 7, 8, 12])
def test_eigen_residual(N):
    es = loop.eigenstructure(N)
    A = loop.subdivision_matrix(N)
    assert np.max(np.abs(A @ es.V - es.V @ es.Lambda)) <= 1e-10
    assert np.max(np.abs(es.V @ es.Vinv - np.eye(N + 6))) <= 1e-10


def test_eigen_unit_eigenvalue():
    lam = loop.eigenstructure(6).eigenvalues
    assert np.sum(np.abs(lam - 1) < 1e-12) == 1


def test_valence3_jordan():
    es = loop.eigenstructure(3)
    assert len(es.jordan) == 1
    j = es.jordan[0]
    assert es.Lambda[j, j + 1] == 1.0 and es.eigenvalues[j] == es.eigenvalues[j + 1]


@pytest.mark.parametrize("N", [4, 5, 6, 7])
def test_no_jordan_otherwise(N):
    assert loop.eigenstructure(N).jordan == ()


def test_valence6_paths_agree(rng):
    v, w = _points(100, rng, inner=1e-6)
    a = loop.irregular_basis(6, v, w, order=2)
    b = loop.regular_basis(v, w, order=2)
    for x, y in zip(a, b):
        assert np.max(np.abs(x - y) / (1 + np.abs(y))) <= 1e-10


@pytest.mark.parametrize("N", [3, 4, 5, 7, 9])
def test_eigen_path_matches_powers(N, rng):
    v, w = _points(20, rng, inner=1e-3)
    for vi, wi in zip(v, w):
        a = loop.irregular_basis(N, vi, wi, order=2)
        b = loop.irregular_basis_direct(N, vi, wi, order=2)
        for x, y in zip(a, b):
            assert np.max(np.abs(x - y)) <= 1e-10 * max(1.0, np.max(np.abs(y)))


@pytest.mark.parametrize("N", [3, 4, 5, 7, 8])
def test_irregular_partition_and_affine(N, rng):
    v, w = _points(50, rng, inner=1e-8)
    phi = loop.irregular_basis(N, v, w, order=2)
    assert np.allclose(phi[0].sum(-1), 1, atol=1e-12)
    for d in phi[1:]:
        assert np.max(np.abs(d.sum(-1))) <= 1e-9 * max(1.0, np.max(np.abs(d)))
    c = rng.normal(size=(N + 6, 3))
    L, t = rng.normal(size=(3, 3)), rng.normal(size=3)
    a = loop.eval_irregular(c @ L.T + t, v, w)[0]
    b = loop.eval_irregular(c, v, w)[0] @ L.T + t
    assert np.allclose(a, b, atol=1e-11)


@pytest.mark.parametrize("N", [3, 4, 5, 7, 8])
def test_stationarity(N, rng):
    c = rng.normal(size=(N + 6, 3))
    A = loop.subdivision_matrix(N)
    v, w = _points(40, rng, inner=1e-6)
    v, w = v / 2, w / 2
    for order in (0, 1):
        a = loop.eval_irregular(c, v, w, order=order)
        b = loop.eval_irregular(A @ c, 2 * v, 2 * w, order=order)
        assert np.allclose(a[0], b[0], atol=1e-11)
        if order:
            # d/dv at (v, w) is twice d/dv of the refined patch at (2v, 2w)
            assert np.allclose(a[1], 2 * b[1], atol=1e-9)


def test_irregular_origin_is_limit_point(rng):
    N = 5
    c = rng.normal(size=(N + 6, 3))
    p = loop.eval_irregular(c, 0.0, 0.0)[0]
    chi = loop.limit_weight(N)
    assert np.allclose(p, (1 - N * chi) * c[0] + chi * c[1:N + 1].sum(0), atol=1e-14)
    with pytest.raises(ValueError):
        loop.irregular_basis(N, 0.0, 0.0, order=1)


def _patch_point(mesh, tables, face, v, w, order=0):
    ctrl = tables.vfl(face)
    c = mesh.vertices[ctrl]
    if tables.valence[face] == 6:
        return loop.eval_regular(c, v, w, order)
    return loop.eval_irregular(c, v, w, order)


@pytest.fixture(scope="module")
def control():
    m = gen.sphere_mesh("octahedron", 1, project=True)
    return gen.perturb(m, 0.05, seed=5)


def test_patch_tables_counts(control):
    t = loop.build_patch_tables(control)
    assert set(t.controls) == {4, 6}
    ids, ctrl = t.controls[4]
    assert ctrl.shape == (len(ids), 10) and len(ids) == 24
    torus = loop.build_patch_tables(gen.revolution_torus(6, 8, 2.0, 1.0))
    assert set(torus.controls) == {6} and torus.controls[6][1].shape == (96, 12)


def test_patch_tables_need_isolation():
    with pytest.raises(MeshError, match="subdivide"):
        loop.build_patch_tables(gen.octahedron())


def test_vfl_locality(control):
    t = loop.build_patch_tables(control)
    rings = control.topology.rings
    for fid, f in enumerate(control.faces.tolist()):
        one = set(f).union(*(rings[v] for v in f))
        two = one.union(*(rings[v] for v in one))
        assert set(t.vfl(fid).tolist()) <= two
        assert set(t.vfl(fid)[:3].tolist()) == set(f)


def test_corners_are_limit_positions(control):
    t = loop.build_patch_tables(control)
    lim = loop.limit_positions(control)
    for fid in range(control.n_faces):
        ctrl = t.vfl(fid)
        pts = _patch_point(control, t, fid, np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))[0]
        assert np.allclose(pts, lim[ctrl[:3]], atol=1e-12)


def test_edge_midpoint_matches_refinement(control):
    t = loop.build_patch_tables(control)
    fine = loop.limit_positions(loop.loop_subdivide(control))
    index = {tuple(e): k for k, e in enumerate(control.topology.edges.tolist())}
    nv = control.n_vertices
    for fid in range(control.n_faces):
        ctrl = t.vfl(fid)
        b, c = int(ctrl[1]), int(ctrl[2])
        k = index.get((b, c), index.get((c, b)))
        p = _patch_point(control, t, fid, 0.5, 0.5)[0]
        assert np.allclose(p, fine[nv + k], atol=1e-12)


def test_cross_patch_continuity(control):
    t = loop.build_patch_tables(control)
    s = np.linspace(0.05, 0.95, 7)
    for k, (f0, f1) in enumerate(control.topology.edge_faces.tolist()):
        a, b = control.topology.edges[k]
        pts = []
        for f in (f0, f1):
            corners = t.vfl(f)[:3].tolist()
            bary = np.zeros((len(s), 3))
            bary[:, corners.index(a)] = 1 - s
            bary[:, corners.index(b)] = s
            pts.append(_patch_point(control, t, f, bary[:, 1], bary[:, 2])[0])
        assert np.allclose(pts[0], pts[1], atol=1e-10)


def test_convex_hull_regular(rng):
    c = rng.normal(size=(12, 3))
    v, w = _points(200, rng)
    p = loop.eval_regular(c, v, w)[0]
    assert np.all(p.min(0) >= c.min(0) - 1e-12) and np.all(p.max(0) <= c.max(0) + 1e-12)


def test_dyadic_trajectory(control):
    # the limit of the control point born at an edge midpoint after two steps
    # (parameter (1/4, 1/4)) equals direct evaluation there
    t = loop.build_patch_tables(control)
    fid = int(t.controls[4][0][0])
    a, b, _ = t.vfl(fid)[:3]
    fine = loop.loop_subdivide(control)
    nv1 = control.n_vertices
    index1 = {tuple(e): k for k, e in enumerate(control.topology.edges.tolist())}
    # level-1 midpoints of edges (a, b) and (a, c) sit at (1/2, 0) and (0, 1/2)
    c = t.vfl(fid)[2]
    mab = nv1 + index1.get((a, b), index1.get((b, a)))
    mac = nv1 + index1.get((a, c), index1.get((c, a)))
    fine2 = loop.loop_subdivide(fine)
    index2 = {tuple(e): k for k, e in enumerate(fine.topology.edges.tolist())}
    k = index2.get((mab, mac), index2.get((mac, mab)))
    lim = loop.limit_positions(fine2)[fine.n_vertices + k]
    assert np.allclose(_patch_point(control, t, fid, 0.25, 0.25)[0], lim, atol=1e-12)
