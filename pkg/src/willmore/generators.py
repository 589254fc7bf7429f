"""Mesh families: torus grids (spherical, planar, of revolution) and platonic spheres."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh, midpoint_subdivide


def torus_grid_faces(m: int, n: int) -> np.ndarray:
    """6-regular (m, n) torus connectivity; vertex (i, j) has index i*n + j.

    Vertex (i, j) is joined to (i+1, j), (i+1, j+1), (i, j+1), (i-1, j),
    (i-1, j-1), (i, j-1), all indices modulo m and n. Faces are wound so that
    the normal points along (d/di) x (d/dj).
    """
    if m < 3 or n < 3:
        raise ValueError("torus grid needs m, n >= 3")
    i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * n + j
    b = ((i + 1) % m) * n + j
    c = ((i + 1) % m) * n + (j + 1) % n
    d = i * n + (j + 1) % n
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def spherical_torus(m: int, n: int, eps: float) -> TriMesh:
    """Torus grid with every vertex on the unit sphere; the tunnel closes as eps -> 0."""
    if m < 3 or n < 3:
        raise ValueError("m and n must be at least 3")
    if not 0.0 < eps < np.pi / 2:
        raise ValueError("eps must lie in (0, pi/2)")
    du, dv = 2 * np.pi / m, 2 * np.pi / n
    u = np.arange(m) * du
    tau = (np.pi - 2 * eps) * u / (2 * np.pi * (1 - 1 / m)) + eps
    phi = np.arange(n) * dv
    st, ct = np.sin(tau)[:, None], np.cos(tau)[:, None]
    x = np.stack(
        np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), ct), axis=-1
    ).reshape(-1, 3)
    return TriMesh(x, torus_grid_faces(m, n))


def planar_torus(m: int, n: int, r) -> TriMesh:
    """Flat annulus-shaped torus: ring i is the circle of radius r[i] in the z = 0 plane."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (m,):
        raise ValueError(f"need {m} radii, got {r.shape}")
    if np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    phi = 2 * np.pi * np.arange(n) / n
    x = np.zeros((m, n, 3))
    x[..., 0] = r[:, None] * np.cos(phi)
    x[..., 1] = r[:, None] * np.sin(phi)
    return TriMesh(x.reshape(-1, 3), torus_grid_faces(m, n))


def revolution_torus(m: int, n: int, R: float, r: float) -> TriMesh:
    """Torus of revolution about z: m samples around the tube, n around the axis."""
    if not R > r > 0:
        raise ValueError("need R > r > 0")
    u = 2 * np.pi * np.arange(m) / m
    v = 2 * np.pi * np.arange(n) / n
    rho = (R + r * np.cos(u))[:, None]
    x = np.zeros((m, n, 3))
    x[..., 0] = rho * np.cos(v)
    x[..., 1] = rho * np.sin(v)
    x[..., 2] = (r * np.sin(u))[:, None]
    # d/du x d/dv points inward for this parametrization
    return TriMesh(x.reshape(-1, 3), torus_grid_faces(m, n)[:, ::-1])


def _orient_outward(x: np.ndarray, faces: np.ndarray) -> np.ndarray:
    # valid for convex solids containing their centroid
    c = x.mean(0)
    f = faces.copy()
    n = np.cross(x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]])
    flip = np.einsum("ij,ij->i", n, x[f].mean(1) - c) < 0
    f[flip] = f[flip][:, ::-1]
    return f


def octahedron() -> TriMesh:
    x = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    f = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return TriMesh(x, _orient_outward(x, f))


def tetrahedron() -> TriMesh:
    """Regular tetrahedron on alternate cube corners (+-1, +-1, +-1); edge 2*sqrt(2)."""
    x = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    f = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
    return TriMesh(x, _orient_outward(x, f))


def icosahedron() -> TriMesh:
    t = (1 + np.sqrt(5)) / 2
    x = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    x /= np.linalg.norm(x[0])
    f = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return TriMesh(x, _orient_outward(x, f))


def unit_cube() -> TriMesh:
    """[0,1]^3 with each square split along one diagonal."""
    x = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    f = []
    for a, b, c, d in quads:
        f += [(a, b, c), (a, c, d)]
    return TriMesh(x, _orient_outward(x, np.array(f)))


_SOLIDS = {"octahedron": octahedron, "icosahedron": icosahedron, "tetrahedron": tetrahedron}


def sphere_mesh(kind: str = "octahedron", levels: int = 0, project: bool = False,
                flatten: float | None = None) -> TriMesh:
    """Platonic solid, midpoint-subdivided `levels` times.

    `project` pushes vertices radially onto the unit sphere; `flatten` scales
    z afterwards (a flattened octahedron has square-prism symmetry only).
    """
    if kind not in _SOLIDS:
        raise ValueError(f"unknown solid {kind!r}; choose from {sorted(_SOLIDS)}")
    if levels < 0:
        raise ValueError("levels must be >= 0")
    mesh = _SOLIDS[kind]()
    for _ in range(levels):
        mesh = midpoint_subdivide(mesh)
    x = mesh.vertices.copy()
    if project:
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    if flatten is not None:
        x[:, 2] *= flatten
    return mesh.with_vertices(x)


def axial_mesh(levels: int = 2, stretch: float = 1.0, taper: float = 0.0) -> TriMesh:
    """Projected subdivided octahedron deformed along the (1,1,1) axis.

    With t = <x, u>, u = (1,1,1)/sqrt(3), each vertex moves by
    ((stretch - 1) t + taper (t^2 - 1/3)) u. Coordinate permutations are kept,
    so the result has (at least) the 6-element symmetry of a triangular pyramid;
    a nonzero taper removes the top/bottom mirror (egg or pear-like start).
    """
    mesh = sphere_mesh("octahedron", levels, project=True)
    x = mesh.vertices.copy()
    u = np.ones(3) / np.sqrt(3.0)
    t = x @ u
    x += (((stretch - 1.0) * t + taper * (t * t - 1.0 / 3.0))[:, None]) * u
    return mesh.with_vertices(x)


def perturb(mesh: TriMesh, scale: float, seed: int | None = 0) -> TriMesh:
    """Add iid normal noise of the given absolute scale to every coordinate."""
    rng = np.random.default_rng(seed)
    return mesh.with_vertices(mesh.vertices + scale * rng.standard_normal(mesh.vertices.shape))


DEFAULT_FLATTEN = 0.6
