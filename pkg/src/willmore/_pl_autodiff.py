"""Gradients of the PL curvature energies by reverse-mode automatic differentiation.

The energies are re-expressed face by face (per-face area and volume
gradients scattered to the corners) rather than through 1-rings, so the values
computed here form an independent route to the numpy ones in ``pl``.
Compiled functions are cached on the mesh topology.
"""

from __future__ import annotations

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import TriMesh  # noqa: E402
from .pl import MVariant, NonSmoothPoint, WVariant  # noqa: E402

# |cos beta| above this counts as a circumcircle-tangency kink
BOBENKO_KINK = 1.0 - 1e-9


def _scatter(nv, faces, vals):
    out = jnp.zeros((nv,) + vals.shape[2:], vals.dtype)
    for k in range(3):
        out = out.at[faces[:, k]].add(vals[:, k])
    return out


def _vertex_fields(x, faces):
    a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
    cr = jnp.cross(b - a, c - a)
    nrm = jnp.linalg.norm(cr, axis=1)
    nh = cr / nrm[:, None]
    ga = 0.5 * jnp.stack([jnp.cross(nh, c - b), jnp.cross(nh, a - c), jnp.cross(nh, b - a)], 1)
    gv = jnp.stack([jnp.cross(b, c), jnp.cross(c, a), jnp.cross(a, b)], 1) / 6.0
    nv = x.shape[0]
    return _scatter(nv, faces, ga), _scatter(nv, faces, gv), 0.5 * nrm


def _voronoi(x, faces, fa):
    corners = [x[faces[:, k]] for k in range(3)]
    cots = []
    for k in range(3):
        u = corners[(k + 1) % 3] - corners[k]
        w = corners[(k + 2) % 3] - corners[k]
        cots.append(jnp.sum(u * w, 1) / jnp.linalg.norm(jnp.cross(u, w), axis=1))
    shares = []
    for k in range(3):
        lij = jnp.sum((corners[(k + 1) % 3] - corners[k]) ** 2, 1)
        lil = jnp.sum((corners[(k + 2) % 3] - corners[k]) ** 2, 1)
        circ = (lij * cots[(k + 2) % 3] + lil * cots[(k + 1) % 3]) / 8.0
        here = cots[k] < 0
        other = (cots[(k + 1) % 3] < 0) | (cots[(k + 2) % 3] < 0)
        shares.append(jnp.where(here, fa / 2, jnp.where(other, fa / 4, circ)))
    return _scatter(x.shape[0], faces, jnp.stack(shares, 1))


def _w_energy(variant: WVariant, faces, edges, opp, genus):
    faces = jnp.asarray(faces)
    edges = jnp.asarray(edges)
    opp = jnp.asarray(opp)

    def w(x):
        if variant == WVariant.BOBENKO:
            beta = jnp.arccos(jnp.clip(_cos_beta(x, edges, opp), -1.0, 1.0))
            return jnp.sum(beta) - jnp.pi * x.shape[0] + 4 * jnp.pi * (1 - genus)
        ga, gv, fa = _vertex_fields(x, faces)
        na2 = jnp.sum(ga * ga, 1)
        if variant == WVariant.CENTROID:
            a = _scatter(x.shape[0], faces, jnp.stack([fa, fa, fa], 1)) / 3.0
        elif variant == WVariant.VORONOI:
            a = _voronoi(x, faces, fa)
        elif variant == WVariant.EFFAREA:
            a = jnp.linalg.norm(gv, axis=1)
        else:
            a = jnp.abs(jnp.sum(gv * ga, 1)) / jnp.sqrt(na2)
        return jnp.sum(na2 / (4 * a))

    return w


def _cos_beta(x, edges, opp):
    v0, vi = x[edges[:, 0]], x[edges[:, 1]]
    nxt, prv = x[opp[:, 0]], x[opp[:, 1]]
    A, B, C, D = v0 - nxt, prv - v0, vi - prv, nxt - vi

    def dot(p, q):
        return jnp.sum(p * q, 1)

    num = dot(A, C) * dot(B, D) - dot(A, B) * dot(C, D) - dot(B, C) * dot(D, A)
    den = jnp.linalg.norm(A, axis=1) * jnp.linalg.norm(B, axis=1) * jnp.linalg.norm(C, axis=1) * jnp.linalg.norm(D, axis=1)
    return num / den


def _m_energy(variant: MVariant, faces, edges, ef):
    faces = jnp.asarray(faces)
    edges = jnp.asarray(edges)
    ef = jnp.asarray(ef)

    def m(x):
        if variant == MVariant.COTAN:
            ga, gv, _ = _vertex_fields(x, faces)
            s = jnp.sign(jnp.sum(ga * gv, 1))
            return 0.5 * jnp.sum(s * jnp.linalg.norm(ga, axis=1))
        a, b, c = x[faces[:, 0]], x[faces[:, 1]], x[faces[:, 2]]
        fn = jnp.cross(b - a, c - a)
        fn = fn / jnp.linalg.norm(fn, axis=1, keepdims=True)
        n1, n2 = fn[ef[:, 0]], fn[ef[:, 1]]
        d = x[edges[:, 1]] - x[edges[:, 0]]
        ln = jnp.linalg.norm(d, axis=1)
        theta = jnp.arctan2(jnp.sum(jnp.cross(n1, n2) * d, 1) / ln, jnp.sum(n1 * n2, 1))
        return jnp.sum(ln * theta)

    return m


def _cache(mesh: TriMesh) -> dict:
    topo = mesh.topology
    cache = getattr(topo, "_autodiff_cache", None)
    if cache is None:
        cache = {}
        topo._autodiff_cache = cache
    return cache


def w_function(mesh: TriMesh, variant: WVariant):
    """Jitted (value, grad) function of the coordinate array for this connectivity."""
    cache = _cache(mesh)
    key = ("w", variant)
    if key not in cache:
        topo = mesh.topology
        fn = _w_energy(variant, mesh.faces, topo.edges, topo.edge_opposite, mesh.genus)
        cache[key] = jax.jit(jax.value_and_grad(fn))
    return cache[key]


def m_function(mesh: TriMesh, variant: MVariant):
    cache = _cache(mesh)
    key = ("m", variant)
    if key not in cache:
        topo = mesh.topology
        fn = _m_energy(variant, mesh.faces, topo.edges, topo.edge_faces)
        cache[key] = jax.jit(jax.value_and_grad(fn))
    return cache[key]


def bobenko_kinks(mesh: TriMesh) -> np.ndarray:
    """Edges where the two circumcircles are (nearly) tangent or coincident."""
    topo = mesh.topology
    cb = np.asarray(_cos_beta(jnp.asarray(mesh.vertices), topo.edges, topo.edge_opposite))
    return np.flatnonzero(np.abs(cb) > BOBENKO_KINK)


def w_value_and_grad(mesh: TriMesh, variant: WVariant):
    variant = WVariant(variant)
    if variant == WVariant.BOBENKO:
        kinks = bobenko_kinks(mesh)
        if kinks.size:
            e = mesh.topology.edges[kinks[0]]
            raise NonSmoothPoint(
                f"W_Bobenko is not differentiable: circumcircles at edge {tuple(e.tolist())} are co-circular"
            )
    val, g = w_function(mesh, variant)(jnp.asarray(mesh.vertices))
    return float(val), np.asarray(g)


def w_grad(mesh: TriMesh, variant: WVariant) -> np.ndarray:
    return w_value_and_grad(mesh, variant)[1]


def m_value_and_grad(mesh: TriMesh, variant: MVariant):
    val, g = m_function(mesh, MVariant(variant))(jnp.asarray(mesh.vertices))
    return float(val), np.asarray(g)


def m_grad(mesh: TriMesh, variant: MVariant) -> np.ndarray:
    return m_value_and_grad(mesh, variant)[1]
