"""PL functionals of a closed oriented triangle mesh and their gradients.

Values are computed here in numpy from the vertex-based formulas (cotangent
weights, 1-ring volume gradients). Gradients of the curvature energies come
from an independent automatic-differentiation path in ``_pl_autodiff``; the
two agree on values, which the tests check.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriMesh


class WVariant(str, enum.Enum):
    CENTROID = "centroid"
    VORONOI = "voronoi"
    EFFAREA = "effarea"
    NORMALCUR = "normalcur"
    BOBENKO = "bobenko"


class MVariant(str, enum.Enum):
    COTAN = "cotan"
    STEINER = "steiner"


AREA_SCHEMES = (WVariant.CENTROID, WVariant.VORONOI, WVariant.EFFAREA, WVariant.NORMALCUR)


class NonSmoothPoint(ArithmeticError):
    """The energy is not differentiable at the requested configuration."""


# --- basic face quantities -------------------------------------------------

def _face_cross(mesh: TriMesh) -> np.ndarray:
    x, f = mesh.vertices, mesh.faces
    return np.cross(x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]])


def face_areas(mesh: TriMesh) -> np.ndarray:
    return 0.5 * np.linalg.norm(_face_cross(mesh), axis=1)


def area(mesh: TriMesh) -> float:
    return float(face_areas(mesh).sum())


def volume(mesh: TriMesh) -> float:
    x, f = mesh.vertices, mesh.faces
    det = np.einsum("ij,ij->i", x[f[:, 0]], np.cross(x[f[:, 1]], x[f[:, 2]]))
    return float(det.sum() / 6.0)


def check_nondegenerate(mesh: TriMesh) -> None:
    a = face_areas(mesh)
    tol = 1e-14 * max(mesh.bbox_diagonal(), 1e-300) ** 2
    bad = np.flatnonzero(a <= tol)
    if bad.size:
        raise MeshError(f"face {int(bad[0])} has zero area")


def cotan_weights(mesh: TriMesh) -> np.ndarray:
    """Per edge, cot of the angle opposite it in each of its two faces, shape (E, 2)."""
    topo = mesh.topology
    x = mesh.vertices
    e, opp = topo.edges, topo.edge_opposite
    out = np.empty(opp.shape)
    for s in range(2):
        u = x[e[:, 0]] - x[opp[:, s]]
        w = x[e[:, 1]] - x[opp[:, s]]
        out[:, s] = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
    return out


def grad_area(mesh: TriMesh) -> np.ndarray:
    """grad_v A = 1/2 sum_f n_f x (opposite edge of v in f).

    Equal to the cotangent formula 1/2 sum_i (cot a_i + cot b_i)(x_v - x_{w_i}),
    but well conditioned when two vertices nearly coincide: there the cotangent
    form multiplies the rounding of a short edge by cot ~ 1/length.
    """
    check_nondegenerate(mesh)
    x, f = mesh.vertices, mesh.faces
    p = x[f]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    g = np.zeros_like(x)
    for k in range(3):
        np.add.at(g, f[:, k], 0.5 * np.cross(n, p[:, (k + 2) % 3] - p[:, (k + 1) % 3]))
    return g


def _ring_pairs(mesh: TriMesh):
    """Flattened (center, w_i, w_{i+1}) triples of all 1-rings, cached on the topology."""
    topo = mesh.topology
    cached = getattr(topo, "_ring_pairs", None)
    if cached is None:
        c, a, b = [], [], []
        for v, ring in enumerate(topo.rings):
            k = len(ring)
            c += [v] * k
            a += list(ring)
            b += [ring[(i + 1) % k] for i in range(k)]
        cached = (np.array(c), np.array(a), np.array(b))
        topo._ring_pairs = cached
    return cached


def grad_volume(mesh: TriMesh) -> np.ndarray:
    """grad_v V = 1/6 sum_i x_{w_i} x x_{w_{i+1}} over the counterclockwise 1-ring."""
    x = mesh.vertices
    c, a, b = _ring_pairs(mesh)
    terms = np.cross(x[a], x[b]) / 6.0
    return np.stack([np.bincount(c, weights=terms[:, d], minlength=len(x)) for d in range(3)], 1)


def _face_corner_angles_cot(mesh: TriMesh) -> np.ndarray:
    x, f = mesh.vertices, mesh.faces
    cots = np.empty(f.shape)
    for k in range(3):
        p = x[f[:, k]]
        u = x[f[:, (k + 1) % 3]] - p
        w = x[f[:, (k + 2) % 3]] - p
        cots[:, k] = np.einsum("ij,ij->i", u, w) / np.linalg.norm(np.cross(u, w), axis=1)
    return cots


def voronoi_areas(mesh: TriMesh) -> np.ndarray:
    """Mixed (circumcentric / midpoint fallback) vertex areas; they tile the surface."""
    x, f = mesh.vertices, mesh.faces
    fa = face_areas(mesh)
    cots = _face_corner_angles_cot(mesh)
    out = np.zeros(len(x))
    for k in range(3):
        i, j, l = f[:, k], f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        # circumcentric share of corner k: edges (k,j) and (k,l), opposite angles at l and j
        lij = np.sum((x[j] - x[i]) ** 2, 1)
        lil = np.sum((x[l] - x[i]) ** 2, 1)
        circ = (lij * cots[:, (k + 2) % 3] + lil * cots[:, (k + 1) % 3]) / 8.0
        obtuse_here = cots[:, k] < 0
        obtuse_else = (cots[:, (k + 1) % 3] < 0) | (cots[:, (k + 2) % 3] < 0)
        share = np.where(obtuse_here, fa / 2, np.where(obtuse_else, fa / 4, circ))
        np.add.at(out, i, share)
    return out


def star_areas(mesh: TriMesh) -> np.ndarray:
    fa = face_areas(mesh)
    out = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], fa)
    return out


def local_area(mesh: TriMesh, scheme) -> np.ndarray:
    scheme = WVariant(scheme)
    if scheme == WVariant.CENTROID:
        return star_areas(mesh) / 3.0
    if scheme == WVariant.VORONOI:
        return voronoi_areas(mesh)
    gv = grad_volume(mesh)
    if scheme == WVariant.EFFAREA:
        return np.linalg.norm(gv, axis=1)
    if scheme == WVariant.NORMALCUR:
        ga = grad_area(mesh)
        na = np.linalg.norm(ga, axis=1)
        bad = np.flatnonzero(na <= 1e-13 * na.max())
        if bad.size:
            raise MeshError(f"grad A vanishes at vertex {int(bad[0])}; normal-curvature area undefined")
        return np.abs(np.einsum("ij,ij->i", gv, ga)) / na
    raise ValueError(f"{scheme} has no local area")


@dataclass
class MeanCurvature:
    H: np.ndarray
    normals: np.ndarray
    sign_undetermined: np.ndarray  # vertices where <grad A, grad V> = 0


def mean_curvature(mesh: TriMesh, scheme) -> MeanCurvature:
    """H(v) n(v) = -grad_v A / (2 a(v)) with n chosen so that <n, grad_v V> > 0.

    A round sphere with outward orientation therefore has H < 0.
    """
    a = local_area(mesh, scheme)
    bad = np.flatnonzero(a <= 0)
    if bad.size:
        raise MeshError(f"local area vanishes at vertex {int(bad[0])}")
    ga = grad_area(mesh)
    gv = grad_volume(mesh)
    s = np.sign(np.einsum("ij,ij->i", ga, gv))
    na = np.linalg.norm(ga, axis=1)
    H = -s * na / (2 * a)
    safe = np.where(na > 0, na, 1.0)[:, None]
    n = np.where(
        (na > 0)[:, None] & (s != 0)[:, None],
        s[:, None] * ga / safe,
        gv / np.linalg.norm(gv, axis=1, keepdims=True),
    )
    return MeanCurvature(H, n, (s == 0) & (na > 0))


# --- Willmore energies -----------------------------------------------------

def bobenko_cos_beta(mesh: TriMesh) -> np.ndarray:
    """cos of the circumcircle intersection angle at every edge."""
    topo = mesh.topology
    x = mesh.vertices
    e, opp = topo.edges, topo.edge_opposite
    v0, vi = x[e[:, 0]], x[e[:, 1]]
    nxt, prv = x[opp[:, 0]], x[opp[:, 1]]  # (v0, vi, nxt) and (v0, prv, vi) are faces
    A = v0 - nxt
    B = prv - v0
    C = vi - prv
    D = nxt - vi

    def dot(p, q):
        return np.einsum("ij,ij->i", p, q)

    num = dot(A, C) * dot(B, D) - dot(A, B) * dot(C, D) - dot(B, C) * dot(D, A)
    den = np.prod([np.linalg.norm(t, axis=1) for t in (A, B, C, D)], axis=0)
    return num / den


def bobenko_beta(mesh: TriMesh) -> np.ndarray:
    """Circumcircle intersection angle at every edge, in [0, pi].

    Inverting about one endpoint of the edge turns both circumcircles into
    lines through the image of the other endpoint, so beta is a plain angle
    between two vectors there. Evaluated with atan2 this keeps full accuracy
    near beta = 0, where arccos of the cosine formula loses half the digits.
    The cosine formula is kept in ``bobenko_cos_beta`` and agrees.
    """
    topo = mesh.topology
    x = mesh.vertices
    e, opp = topo.edges, topo.edge_opposite
    c = x[e[:, 0]]

    def inv(p):
        d = p - c
        return d / np.einsum("ij,ij->i", d, d)[:, None]

    b, nxt, prv = inv(x[e[:, 1]]), inv(x[opp[:, 0]]), inv(x[opp[:, 1]])
    t0, t1 = nxt - b, b - prv
    return np.arctan2(np.linalg.norm(np.cross(t0, t1), axis=1), np.einsum("ij,ij->i", t0, t1))


def w_bobenko(mesh: TriMesh) -> float:
    """1/2 sum_v (sum_{e at v} beta(e) - 2 pi) + 4 pi (1 - g)."""
    beta = bobenko_beta(mesh)
    g = mesh.genus
    # each edge touches two vertices
    return float(beta.sum() - np.pi * mesh.n_vertices + 4 * np.pi * (1 - g))


def w_value(mesh: TriMesh, variant) -> float:
    """W of the given variant; NormalCur returns +inf when a local area vanishes."""
    variant = WVariant(variant)
    if variant == WVariant.BOBENKO:
        return w_bobenko(mesh)
    ga = grad_area(mesh)
    na2 = np.einsum("ij,ij->i", ga, ga)
    if variant == WVariant.NORMALCUR:
        gv = grad_volume(mesh)
        proj = np.abs(np.einsum("ij,ij->i", gv, ga))
        if np.any(proj == 0):
            return float("inf")
        # H^2 a = |grad A|^2 / (4 a), a = |<grad V, grad A>| / |grad A|
        return float(np.sum(na2 ** 1.5 / (4 * proj)))
    a = local_area(mesh, variant)
    bad = np.flatnonzero(a <= 0)
    if bad.size:
        raise MeshError(f"local area vanishes at vertex {int(bad[0])}")
    return float(np.sum(na2 / (4 * a)))


def w_pl(mesh: TriMesh, variant, gradient: bool = True):
    """(value, gradient) of a PL Willmore energy; gradient is None if not requested."""
    value = w_value(mesh, variant)
    if not gradient:
        return value, None
    if not np.isfinite(value):
        return value, None
    from . import _pl_autodiff

    return value, _pl_autodiff.w_grad(mesh, WVariant(variant))


# --- total mean curvature --------------------------------------------------

def m_cotan(mesh: TriMesh) -> float:
    """-sum_v H(v) a(v) = 1/2 sum_v s(v) |grad_v A|, s(v) = sign <grad_v A, grad_v V>.

    Positive on convex bodies; vertices with an undetermined sign contribute 0.
    """
    ga = grad_area(mesh)
    gv = grad_volume(mesh)
    s = np.sign(np.einsum("ij,ij->i", ga, gv))
    return float(0.5 * np.sum(s * np.linalg.norm(ga, axis=1)))


def dihedral_angles(mesh: TriMesh) -> np.ndarray:
    """Signed angle between the two face normals at each edge, in (-pi, pi); > 0 where convex."""
    topo = mesh.topology
    x = mesh.vertices
    e, ef = topo.edges, topo.edge_faces
    fn = _face_cross(mesh)
    n1, n2 = fn[ef[:, 0]], fn[ef[:, 1]]
    d = x[e[:, 1]] - x[e[:, 0]]
    ln = np.linalg.norm(d, axis=1)
    bad = np.flatnonzero(ln == 0)
    if bad.size:
        raise MeshError(f"edge {tuple(e[bad[0]].tolist())} has zero length")
    n1 = n1 / np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = n2 / np.linalg.norm(n2, axis=1, keepdims=True)
    sin = np.einsum("ij,ij->i", np.cross(n1, n2), d / ln[:, None])
    cos = np.einsum("ij,ij->i", n1, n2)
    return np.arctan2(sin, cos)


def m_steiner(mesh: TriMesh) -> float:
    e = mesh.topology.edges
    x = mesh.vertices
    ln = np.linalg.norm(x[e[:, 1]] - x[e[:, 0]], axis=1)
    return float(np.sum(ln * dihedral_angles(mesh)))


def m_value(mesh: TriMesh, variant) -> float:
    variant = MVariant(variant)
    return m_cotan(mesh) if variant == MVariant.COTAN else m_steiner(mesh)


def m_pl(mesh: TriMesh, variant, gradient: bool = True):
    value = m_value(mesh, variant)
    if not gradient:
        return value, None
    from . import _pl_autodiff

    return value, _pl_autodiff.m_grad(mesh, MVariant(variant))


# --- Dirichlet energy ------------------------------------------------------

@dataclass(frozen=True)
class Equilateral:
    """Every domain triangle is equilateral."""


@dataclass(frozen=True)
class TorusLattice:
    """Regular (m, n) torus grid whose domain triangles are lattice triangles of 1 and omega."""

    omega: complex
    m: int
    n: int

    def __post_init__(self):
        if complex(self.omega).imag <= 0:
            raise ValueError("omega must lie in the upper half plane")


def _domain_cots(mesh: TriMesh, structure) -> np.ndarray:
    """cot of the domain angle at each face corner, shape (F, 3)."""
    if isinstance(structure, Equilateral):
        return np.full(mesh.faces.shape, 1.0 / np.sqrt(3.0))
    if isinstance(structure, TorusLattice):
        from .generators import torus_grid_faces

        m, n = structure.m, structure.n
        grid = torus_grid_faces(m, n)
        f = mesh.faces
        if mesh.n_vertices != m * n or not (
            np.array_equal(f, grid) or np.array_equal(f, grid[:, ::-1])
        ):
            raise MeshError(f"mesh does not have the regular ({m}, {n}) torus grid connectivity")
        om = complex(structure.omega)
        # grid step (1, 0) -> 1, diagonal (1, 1) -> omega, step (0, 1) -> omega - 1
        i, j = f // n, f % n
        di = (i - i[:, :1] + 1) % m - 1
        dj = (j - j[:, :1] + 1) % n - 1
        z = di * 1.0 + dj * (om - 1.0)
        cots = np.empty(f.shape)
        for k in range(3):
            u = z[:, (k + 1) % 3] - z[:, k]
            w = z[:, (k + 2) % 3] - z[:, k]
            prod = np.conj(u) * w
            cots[:, k] = prod.real / np.abs(prod.imag)
        return cots
    raise TypeError(f"unknown conformal structure {structure!r}")


def dirichlet_weights(mesh: TriMesh, structure=Equilateral()) -> np.ndarray:
    """Per-edge weight w_e with E = sum_e w_e |x_i - x_j|^2, w_e = (cot t1 + cot t2) / 4.

    The weights depend only on connectivity, so they are cached on the topology.
    """
    topo = mesh.topology
    cache = getattr(topo, "_dirichlet_cache", None)
    if cache is None:
        cache = topo._dirichlet_cache = {}
    if structure not in cache:
        w = _dirichlet_weights(mesh, structure)
        w.setflags(write=False)
        cache[structure] = w
    return cache[structure]


def _dirichlet_weights(mesh: TriMesh, structure) -> np.ndarray:
    cots = _domain_cots(mesh, structure)
    topo = mesh.topology
    w = np.zeros(topo.n_edges)
    f = mesh.faces
    index = {}
    for k, (a, b) in enumerate(topo.edges.tolist()):
        index[(a, b)] = index[(b, a)] = k
    for c in range(3):
        a, b = f[:, (c + 1) % 3], f[:, (c + 2) % 3]
        ids = np.fromiter((index[(p, q)] for p, q in zip(a.tolist(), b.tolist())), np.int64, len(f))
        np.add.at(w, ids, cots[:, c] / 4.0)
    return w


def dirichlet_energy(mesh: TriMesh, structure=Equilateral(), gradient: bool = True):
    w = dirichlet_weights(mesh, structure)
    e = mesh.topology.edges
    x = mesh.vertices
    d = x[e[:, 0]] - x[e[:, 1]]
    value = float(np.sum(w * np.einsum("ij,ij->i", d, d)))
    if not gradient:
        return value, None
    g = np.zeros_like(x)
    np.add.at(g, e[:, 0], 2 * w[:, None] * d)
    np.add.at(g, e[:, 1], -2 * w[:, None] * d)
    return value, g


def dirichlet_domega(mesh: TriMesh, structure: TorusLattice, h: float = 1e-6) -> complex:
    """dE/d(Re omega) + i dE/d(Im omega) by central differences."""
    def at(om):
        return dirichlet_energy(mesh, TorusLattice(om, structure.m, structure.n), gradient=False)[0]

    om = complex(structure.omega)
    dr = (at(om + h) - at(om - h)) / (2 * h)
    di = (at(om + 1j * h) - at(om - 1j * h)) / (2 * h)
    return complex(dr, di)
