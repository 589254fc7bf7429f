"""Finite isometry groups acting on meshes and the symmetry-deviation measure."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import MeshError, TriMesh


@dataclass(frozen=True)
class SymmetryElement:
    g: np.ndarray  # orthogonal 3x3
    perm: np.ndarray  # perm[v] is the vertex that g maps v onto


@dataclass(frozen=True)
class SymmetrySpec:
    elements: tuple[SymmetryElement, ...]

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


def signed_permutation_matrices() -> list[np.ndarray]:
    """The 48 elements of the full octahedral group O_h."""
    mats = []
    for p in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for row, col in enumerate(p):
                m[row, col] = signs[row]
            mats.append(m)
    return mats


def octahedral_group() -> list[np.ndarray]:
    return signed_permutation_matrices()


def d4h_group() -> list[np.ndarray]:
    """16 signed permutations keeping the z axis (square prism symmetry)."""
    return [m for m in signed_permutation_matrices() if abs(m[2, 2]) == 1.0]


def d3_group() -> list[np.ndarray]:
    """Rotations of a triangle about the (1,1,1) axis: 3 cyclic shifts and 3 half-turns."""
    out = []
    for p in itertools.permutations(range(3)):
        m = np.zeros((3, 3))
        m[np.arange(3), p] = 1.0
        if np.linalg.det(m) < 0:
            m = -m  # half-turn about an axis perpendicular to (1,1,1)
        out.append(m)
    return out


def c3v_group() -> list[np.ndarray]:
    """Coordinate permutations: 3 rotations about (1,1,1) and 3 mirror planes through it."""
    out = []
    for p in itertools.permutations(range(3)):
        m = np.zeros((3, 3))
        m[np.arange(3), p] = 1.0
        out.append(m)
    return out


GROUPS = {"octahedral": octahedral_group, "d4h": d4h_group, "d3": d3_group, "c3v": c3v_group}


def match_permutation(mesh: TriMesh, g: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Vertex permutation induced by g, found by nearest-vertex matching."""
    x = mesh.vertices
    tree = cKDTree(x)
    dist, idx = tree.query(x @ np.asarray(g).T)
    scale = max(mesh.bbox_diagonal(), 1e-300)
    if np.any(dist > tol * scale) or len(set(idx.tolist())) != len(x):
        raise MeshError("mesh is not invariant under the given isometry")
    return idx.astype(np.int64)


def build_symmetry(mesh: TriMesh, group: list[np.ndarray], tol: float = 1e-8) -> SymmetrySpec:
    elems = []
    for g in group:
        perm = match_permutation(mesh, g, tol)
        elems.append(SymmetryElement(np.array(g, dtype=float), perm))
    spec = SymmetrySpec(tuple(elems))
    check_automorphisms(mesh, spec)
    return spec


def check_automorphisms(mesh: TriMesh, sym: SymmetrySpec) -> None:
    """Raise unless every permutation maps the face set onto itself.

    Faces are compared unoriented because reflections reverse winding.
    """
    faces = {tuple(sorted(f)) for f in mesh.faces.tolist()}
    for k, el in enumerate(sym.elements):
        if len(el.perm) != mesh.n_vertices:
            raise MeshError(f"group element {k}: permutation has wrong length")
        mapped = el.perm[mesh.faces]
        for f in mapped.tolist():
            if tuple(sorted(f)) not in faces:
                raise MeshError(f"group element {k}: permutation is not a simplicial automorphism")


def check_homomorphism(sym: SymmetrySpec, tol: float = 1e-12) -> None:
    """Whenever g*h is listed, its permutation must be the composition."""
    els = sym.elements
    for a in els:
        for b in els:
            gh = a.g @ b.g
            for c in els:
                if np.allclose(c.g, gh, atol=tol):
                    # x_{perm_b(v)} = b x_v, then a maps it on to perm_a(perm_b(v))
                    if not np.array_equal(c.perm, a.perm[b.perm]):
                        raise MeshError("permutation assignment is not a homomorphism")
                    break


def symmetry_deviation(mesh: TriMesh, sym: SymmetrySpec, check: bool = True) -> float:
    """max over g, v of |g x_v - x_{pi_g(v)}|."""
    if check:
        check_automorphisms(mesh, sym)
    x = mesh.vertices
    worst = 0.0
    for el in sym.elements:
        d = x @ el.g.T - x[el.perm]
        worst = max(worst, float(np.sqrt(np.max(np.einsum("ij,ij->i", d, d)))))
    return worst


def symmetrize(x: np.ndarray, sym: SymmetrySpec) -> np.ndarray:
    """Reynolds projection x_v <- mean_g g^T x_{pi_g(v)} onto G-symmetric configurations.

    Also applies to equivariant vector fields such as gradients. Requires the
    elements to form a group.
    """
    acc = np.zeros_like(x)
    for el in sym.elements:
        acc += x[el.perm] @ el.g
    return acc / len(sym.elements)
