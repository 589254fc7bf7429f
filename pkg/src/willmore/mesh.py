"""Closed oriented triangle meshes: data model, validation and topology queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Raised for structurally unusable meshes or invalid queries."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _frozen_copy(a, dtype) -> np.ndarray:
    # arrays that are already frozen with the right dtype are shared, not copied
    if isinstance(a, np.ndarray) and a.dtype == dtype and not a.flags.writeable and a.flags.c_contiguous:
        return a
    return _readonly(np.array(a, dtype=dtype))


class Topology:
    """Connectivity derived from a face list.

    Only combinatorics lives here, so a topology is shared by every mesh that
    differs from another one by vertex positions alone (the usual situation
    inside an optimizer).
    """

    def __init__(self, faces: np.ndarray, n_vertices: int):
        self.faces = faces
        self.n_vertices = int(n_vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def _halfedges(self):
        f = self.faces
        src = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        dst = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        opp = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
        fid = np.tile(np.arange(len(f)), 3)
        return src, dst, opp, fid

    @cached_property
    def edge_table(self) -> dict:
        """Undirected edge -> list of (face, src, dst, opposite) incidences."""
        table: dict[tuple[int, int], list[tuple[int, int, int, int]]] = {}
        src, dst, opp, fid = self._halfedges
        for a, b, c, f in zip(src.tolist(), dst.tolist(), opp.tolist(), fid.tolist()):
            key = (a, b) if a < b else (b, a)
            table.setdefault(key, []).append((f, a, b, c))
        return table

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) edges ``(i, j)`` where ``i -> j`` is traversed by ``edge_faces[:, 0]``."""
        self._require_manifold()
        return self._edge_arrays[0]

    @cached_property
    def edge_faces(self) -> np.ndarray:
        self._require_manifold()
        return self._edge_arrays[1]

    @cached_property
    def edge_opposite(self) -> np.ndarray:
        """(E, 2) vertex opposite the edge in the first and in the second face."""
        self._require_manifold()
        return self._edge_arrays[2]

    @cached_property
    def _edge_arrays(self):
        keys = sorted(self.edge_table)
        e = np.empty((len(keys), 2), dtype=np.int64)
        ef = np.empty((len(keys), 2), dtype=np.int64)
        eo = np.empty((len(keys), 2), dtype=np.int64)
        for k, key in enumerate(keys):
            (f0, a0, b0, c0), (f1, _, _, c1) = self.edge_table[key]
            e[k] = (a0, b0)
            ef[k] = (f0, f1)
            eo[k] = (c0, c1)
        return _readonly(e), _readonly(ef), _readonly(eo)

    @property
    def n_edges(self) -> int:
        return len(self.edge_table)

    def _require_manifold(self):
        bad = [k for k, v in self.edge_table.items() if len(v) != 2]
        if bad:
            raise MeshError(f"edge {bad[0]} is not shared by exactly two faces")

    @cached_property
    def rings(self) -> tuple[tuple[int, ...], ...]:
        """Counterclockwise 1-rings; ``(v, w_i, w_{i+1})`` is a face for each i."""
        succ: list[dict[int, int]] = [dict() for _ in range(self.n_vertices)]
        for a, b, c in self.faces.tolist():
            succ[a][b] = c
            succ[b][c] = a
            succ[c][a] = b
        rings = []
        for v, nxt in enumerate(succ):
            if not nxt:
                raise MeshError(f"vertex {v} is not used by any face")
            start = min(nxt)
            ring = [start]
            w = nxt.get(start)
            while w is not None and w != start:
                ring.append(w)
                if len(ring) > len(nxt):
                    break
                w = nxt.get(w)
            if w is None or len(ring) != len(nxt):
                raise MeshError(f"1-ring of vertex {v} is not a single closed cycle")
            rings.append(tuple(ring))
        return tuple(rings)

    @cached_property
    def valence(self) -> np.ndarray:
        counts = np.bincount(self.faces.ravel(), minlength=self.n_vertices)
        return _readonly(counts.astype(np.int64))

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Vertex coordinates plus a 0-based face list whose triple order fixes orientation."""

    vertices: np.ndarray
    faces: np.ndarray
    topology: Topology = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        v = _frozen_copy(self.vertices, np.float64)
        f = _frozen_copy(self.faces, np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must have shape (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        topo = self.topology
        if topo is None or topo.n_vertices != len(v) or (topo.faces is not f and not np.array_equal(topo.faces, f)):
            topo = Topology(f, len(v))
        object.__setattr__(self, "topology", topo)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def genus(self) -> int:
        chi = self.topology.euler_characteristic
        return (2 - chi) // 2

    def with_vertices(self, vertices) -> "TriMesh":
        """Same connectivity, new coordinates (topology caches are shared)."""
        return TriMesh(vertices, self.faces, self.topology)

    def reversed(self) -> "TriMesh":
        return TriMesh(self.vertices, self.faces[:, ::-1])

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))


@dataclass
class ValidationReport:
    n_vertices: int
    n_edges: int
    n_faces: int
    euler_characteristic: int
    genus: int | None
    degenerate_faces: list[int]
    open_edges: list[tuple[int, int]]
    nonmanifold_edges: list[tuple[int, int]]
    orientation_errors: list[tuple[int, int]]
    nonmanifold_vertices: list[int]
    zero_area_faces: list[int]

    @property
    def ok(self) -> bool:
        """Zero-area faces are flagged but do not fail validation."""
        return not (
            self.degenerate_faces
            or self.open_edges
            or self.nonmanifold_edges
            or self.orientation_errors
            or self.nonmanifold_vertices
            or self.genus is None
        )

    @property
    def orientable(self) -> bool:
        return not self.orientation_errors

    def summary(self) -> str:
        status = "ok" if self.ok else "FAILED"
        parts = [
            f"V={self.n_vertices} E={self.n_edges} F={self.n_faces} chi={self.euler_characteristic}",
            f"genus={self.genus}",
        ]
        for name in (
            "degenerate_faces",
            "open_edges",
            "nonmanifold_edges",
            "orientation_errors",
            "nonmanifold_vertices",
            "zero_area_faces",
        ):
            items = getattr(self, name)
            if items:
                parts.append(f"{name}={len(items)}")
        return f"{status}: " + ", ".join(parts)


def validate(mesh: TriMesh) -> ValidationReport:
    """Check the closed, consistently oriented 2-manifold invariants."""
    f = mesh.faces
    degenerate = [
        i for i, (a, b, c) in enumerate(f.tolist()) if a == b or b == c or a == c
    ]
    open_edges, nonmanifold, orient = [], [], []
    for key, inc in mesh.topology.edge_table.items():
        if len(inc) == 1:
            open_edges.append(key)
        elif len(inc) > 2:
            nonmanifold.append(key)
        elif inc[0][1] == inc[1][1]:
            # both faces traverse the edge in the same direction
            orient.append(key)

    bad_vertices = []
    if not (degenerate or open_edges or nonmanifold or orient):
        try:
            mesh.topology.rings
        except MeshError:
            bad_vertices = _nonmanifold_vertices(mesh)

    x = mesh.vertices
    cross = np.cross(x[f[:, 1]] - x[f[:, 0]], x[f[:, 2]] - x[f[:, 0]])
    scale = max(mesh.bbox_diagonal(), 1e-300)
    zero_area = np.flatnonzero(np.linalg.norm(cross, axis=1) <= 1e-14 * scale**2).tolist()

    chi = len(x) - mesh.topology.n_edges + len(f)
    structural = degenerate or open_edges or nonmanifold or orient or bad_vertices
    genus = None
    if not structural and chi % 2 == 0 and chi <= 2:
        genus = (2 - chi) // 2
    return ValidationReport(
        n_vertices=len(x),
        n_edges=mesh.topology.n_edges,
        n_faces=len(f),
        euler_characteristic=chi,
        genus=genus,
        degenerate_faces=degenerate,
        open_edges=open_edges,
        nonmanifold_edges=nonmanifold,
        orientation_errors=orient,
        nonmanifold_vertices=bad_vertices,
        zero_area_faces=zero_area,
    )


def _nonmanifold_vertices(mesh: TriMesh) -> list[int]:
    bad = []
    succ: list[dict[int, int]] = [dict() for _ in range(mesh.n_vertices)]
    for a, b, c in mesh.faces.tolist():
        succ[a][b] = c
        succ[b][c] = a
        succ[c][a] = b
    for v, nxt in enumerate(succ):
        if not nxt:
            bad.append(v)
            continue
        start = next(iter(nxt))
        w, n = nxt[start], 1
        while w != start and w in nxt and n <= len(nxt):
            w, n = nxt[w], n + 1
        if w != start or n != len(nxt):
            bad.append(v)
    return bad


def require_valid(mesh: TriMesh) -> ValidationReport:
    report = validate(mesh)
    if not report.ok:
        raise MeshError(report.summary())
    return report


@dataclass(frozen=True)
class OneRing:
    center: int
    neighbors: tuple[int, ...]

    @property
    def valence(self) -> int:
        return len(self.neighbors)


def one_ring(mesh: TriMesh, v: int) -> OneRing:
    if not 0 <= v < mesh.n_vertices:
        raise MeshError(f"vertex index {v} out of range [0, {mesh.n_vertices})")
    return OneRing(v, mesh.topology.rings[v])


def midpoint_subdivide(mesh: TriMesh) -> TriMesh:
    """Split every triangle 1-to-4, inserting edge midpoints.

    New vertices are appended after the old ones in the order of
    ``mesh.topology.edges``.
    """
    topo = mesh.topology
    edges = topo.edges
    nv = mesh.n_vertices
    index = {}
    for k, (a, b) in enumerate(edges.tolist()):
        index[(a, b)] = index[(b, a)] = nv + k
    x = mesh.vertices
    mids = 0.5 * (x[edges[:, 0]] + x[edges[:, 1]])
    faces = []
    for a, b, c in mesh.faces.tolist():
        ab, bc, ca = index[(a, b)], index[(b, c)], index[(c, a)]
        faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return TriMesh(np.vstack([x, mids]), np.array(faces, dtype=np.int64))


def invert_sphere(mesh: TriMesh, center, radius: float) -> TriMesh:
    """Inversion x -> c + r^2 (x - c) / |x - c|^2 (orientation-reversing)."""
    c = np.asarray(center, dtype=np.float64)
    d = mesh.vertices - c
    r2 = np.einsum("ij,ij->i", d, d)
    hit = np.flatnonzero(r2 == 0.0)
    if hit.size:
        raise MeshError(f"vertex {int(hit[0])} coincides with the inversion center")
    return mesh.with_vertices(c + (radius**2) * d / r2[:, None])


def extraordinary_vertices(mesh: TriMesh) -> np.ndarray:
    return np.flatnonzero(mesh.topology.valence != 6)


def extraordinary_isolated(mesh: TriMesh) -> bool:
    val = mesh.topology.valence
    e = mesh.topology.edges
    return not np.any((val[e[:, 0]] != 6) & (val[e[:, 1]] != 6))
