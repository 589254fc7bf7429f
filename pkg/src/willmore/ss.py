"""Area, volume, total mean curvature and Willmore energy of Loop subdivision surfaces.

Each face contributes a patch integral over the parameter triangle; all basis
values at quadrature nodes are tabulated once per valence, so an evaluation is
a few dense products plus pointwise algebra. Gradients with respect to the
control vertices are assembled in adjoint form: the pointwise derivatives of
each integrand with respect to s, s_v, s_w, s_vv, s_vw, s_ww are contracted
with the same tables and scattered through the per-face control lists.

With n = s_v x s_w and the unnormalized second form e = <s_vv, n>,
f = <s_vw, n>, g = <s_ww, n>:

    Hbar = (e G - 2 f F + g E) / (2 (E G - F^2))   (= H |n|)
    A = int |n|,  V = 1/3 int <s, n>,  M = -int Hbar,  W = int Hbar^2 / |n|

so a round sphere has M > 0 and W = 4 pi.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import loop
from .mesh import TriMesh
from .quadrature import QuadRule, make_quadrature

FUNCTIONALS = ("A", "V", "M", "W")


class NotImmersed(ArithmeticError):
    def __init__(self, face: int, node: int):
        super().__init__(f"patch of face {face} is not immersed at quadrature node {node}")
        self.face = face
        self.node = node


@dataclass(frozen=True)
class BasisTable:
    """Basis rows at the quadrature nodes of one valence, stacked as [b, b_v, b_w, b_vv, b_vw, b_ww]."""

    valence: int
    weights: np.ndarray  # (Q,)
    stacked: np.ndarray  # (6 Q, K)

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    def part(self, j: int) -> np.ndarray:
        q = self.n_nodes
        return self.stacked[j * q:(j + 1) * q]


@lru_cache(maxsize=None)
def _quad(n: int, depth: int) -> QuadRule:
    return make_quadrature(n, depth)


# tables read from cache files, keyed by (valence, n, depth)
_LOADED: dict = {}
CACHE_VERSION = 1


def basis_table(valence: int, n: int = 8, depth: int = 16) -> BasisTable:
    key = (valence, n, depth)
    if key in _LOADED:
        return _LOADED[key]
    return _basis_table(valence, n, depth)


@lru_cache(maxsize=None)
def _basis_table(valence: int, n: int, depth: int) -> BasisTable:
    q = _quad(n, depth)
    if valence == 6:
        v, w = q.regular_nodes[:, 0], q.regular_nodes[:, 1]
        rows = loop.regular_basis(v, w, 2)
        weights = q.regular_weights
    else:
        v, w = q.irregular_nodes[:, 0], q.irregular_nodes[:, 1]
        rows = loop.irregular_basis(valence, v, w, 2)
        weights = q.irregular_weights
    stacked = np.ascontiguousarray(np.concatenate(rows, axis=0))
    stacked.setflags(write=False)
    return BasisTable(valence, weights, stacked)


def save_tables(path, valences, n: int = 8, depth: int = 16) -> None:
    """Write the basis tables of the given valences to a versioned .npz cache file."""
    vals = sorted({int(v) for v in valences})
    arrays = {}
    for N in vals:
        t = basis_table(N, n, depth)
        arrays[f"weights_{N}"] = t.weights
        arrays[f"stacked_{N}"] = t.stacked
    with open(path, "wb") as fh:
        np.savez(fh, version=CACHE_VERSION, n=n, depth=depth, valences=np.array(vals), **arrays)


def load_tables(path, n: int | None = None, depth: int | None = None) -> list[int]:
    """Register cached tables for later use; returns the valences read.

    The file's (n, depth) must match the requested ones when given.
    """
    with np.load(path) as z:
        if int(z["version"]) != CACHE_VERSION:
            raise ValueError(f"{path}: cache version {int(z['version'])}, expected {CACHE_VERSION}")
        fn, fd = int(z["n"]), int(z["depth"])
        if (n is not None and n != fn) or (depth is not None and depth != fd):
            raise ValueError(f"{path}: tables are for n={fn}, depth={fd}")
        vals = [int(v) for v in z["valences"]]
        for N in vals:
            w, b = np.array(z[f"weights_{N}"]), np.array(z[f"stacked_{N}"])
            w.setflags(write=False)
            b.setflags(write=False)
            _LOADED[(N, fn, fd)] = BasisTable(N, w, b)
    return vals


@dataclass(frozen=True)
class SSTables:
    patches: loop.PatchTables
    n: int
    depth: int

    def table(self, valence: int) -> BasisTable:
        return basis_table(valence, self.n, self.depth)


def tables_for(mesh: TriMesh, n: int = 8, depth: int = 16) -> SSTables:
    """Patch tables and basis tables for this connectivity (cached on the topology)."""
    topo = mesh.topology
    cache = getattr(topo, "_ss_cache", None)
    if cache is None:
        cache = {}
        topo._ss_cache = cache
    key = (n, depth)
    if key not in cache:
        cache[key] = SSTables(loop.build_patch_tables(mesh), n, depth)
    return cache[key]


# vectors are stored component-first, shape (3, Q, F), so each component is contiguous

def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@dataclass
class FundamentalForms:
    """Pointwise data at the quadrature nodes; vectors (3, Q, F), scalars (Q, F)."""

    s: np.ndarray
    sv: np.ndarray
    sw: np.ndarray
    svv: np.ndarray
    svw: np.ndarray
    sww: np.ndarray
    n: np.ndarray
    norm_n: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    Hbar: np.ndarray


def fundamental_forms(c: np.ndarray, table: BasisTable, face_ids=None) -> FundamentalForms:
    """Geometry of a batch of patches at the nodes; c has shape (F, K, 3) or (K, 3)."""
    if c.ndim == 2:
        c = c[None]
    nf, K, _ = c.shape
    q = table.n_nodes
    cm = np.ascontiguousarray(c.transpose(1, 2, 0)).reshape(K, 3 * nf)
    S = (table.stacked @ cm).reshape(6, q, 3, nf).transpose(0, 2, 1, 3)
    s, sv, sw, svv, svw, sww = S
    n = _cross(sv, sw)
    E, F, G = _dot(sv, sv), _dot(sv, sw), _dot(sw, sw)
    den = E * G - F * F
    bad = np.argwhere(~(den > 1e-14 * E * G))
    if bad.size:
        node, fi = bad[0]
        raise NotImmersed(int(face_ids[fi]) if face_ids is not None else int(fi), int(node))
    norm_n = np.sqrt(den)
    e, f, g = _dot(svv, n), _dot(svw, n), _dot(sww, n)
    H = (e * G - 2 * f * F + g * E) / (2 * den)
    return FundamentalForms(s, sv, sw, svv, svw, sww, n, norm_n, E, F, G, e, f, g, H)


def _integrands(ff: FundamentalForms, which) -> dict:
    out = {}
    if "A" in which:
        out["A"] = ff.norm_n
    if "V" in which:
        out["V"] = _dot(ff.s, ff.n) / 3.0
    if "M" in which:
        out["M"] = -ff.Hbar
    if "W" in which:
        out["W"] = ff.Hbar ** 2 / ff.norm_n
    if "K" in which:
        out["K"] = (ff.e * ff.g - ff.f ** 2) / ff.norm_n ** 3
    return out


def _adjoint(ff: FundamentalForms, coef: dict) -> list:
    """Derivatives of sum_k coef[k] * integrand_k with respect to (s, sv, sw, svv, svw, sww).

    ``coef`` values are scalars or (Q, F) arrays. Uses
    d|n|/d sv = sw x nhat, d|n|/d sw = nhat x sv, and for phi(n) with gradient
    g: d phi/d sv = sw x g, d phi/d sw = g x sv.
    """
    a, b = ff.sv, ff.sw
    zero = np.zeros_like(a)
    out = [zero.copy() for _ in range(6)]
    g_n = np.zeros_like(a)  # accumulated gradient with respect to n
    c_s = 0.0
    c_norm = 0.0  # coefficient of d|n|
    c_H = 0.0  # coefficient of dHbar
    if "A" in coef:
        c_norm = c_norm + coef["A"]
    if "V" in coef:
        c_s = coef["V"] / 3.0
        g_n += (coef["V"] / 3.0) * ff.s
    if "M" in coef:
        c_H = c_H - coef["M"]
    if "W" in coef:
        H, nn = ff.Hbar, ff.norm_n
        c_H = c_H + coef["W"] * 2 * H / nn
        c_norm = c_norm - coef["W"] * H ** 2 / nn ** 2
    if not np.isscalar(c_s) or c_s != 0.0:
        out[0] = c_s * ff.n
    if not np.isscalar(c_norm) or c_norm != 0.0:
        g_n += (c_norm / ff.norm_n) * ff.n
    if not np.isscalar(c_H) or c_H != 0.0:
        den = ff.norm_n ** 2
        H = ff.Hbar
        k = c_H / den
        hE = k * (ff.g / 2 - H * ff.G)
        hF = k * (-ff.f + 2 * H * ff.F)
        hG = k * (ff.e / 2 - H * ff.E)
        he, hf, hg = k * ff.G / 2, -k * ff.F, k * ff.E / 2
        out[1] = out[1] + 2 * hE * a + hF * b
        out[2] = out[2] + hF * a + 2 * hG * b
        out[3] = he * ff.n
        out[4] = hf * ff.n
        out[5] = hg * ff.n
        g_n += he * ff.svv + hf * ff.svw + hg * ff.sww
    out[1] = out[1] + _cross(b, g_n)
    out[2] = out[2] + _cross(g_n, a)
    return out


def _backproject(parts: list, table: BasisTable) -> np.ndarray:
    """Contract adjoint parts with the basis tables; returns local gradients (F, K, 3)."""
    _, q, nf = parts[0].shape
    w = table.weights[None, :, None]
    G = np.stack([p * w for p in parts])  # (6, 3, Q, F)
    G = G.transpose(0, 2, 1, 3).reshape(6 * q, 3 * nf)
    local = table.stacked.T @ G  # (K, 3F)
    return local.reshape(-1, 3, nf).transpose(2, 0, 1)


def patch_functionals(c: np.ndarray, table: BasisTable, which=FUNCTIONALS) -> dict:
    """Integrals of one patch (c: (K, 3) local controls)."""
    ff = fundamental_forms(np.asarray(c, dtype=np.float64), table)
    return {k: float(table.weights @ v[:, 0]) for k, v in _integrands(ff, which).items()}


def patch_gradients(c: np.ndarray, table: BasisTable, which=FUNCTIONALS) -> dict:
    """Gradients of the patch integrals with respect to the local controls, each (K, 3)."""
    ff = fundamental_forms(np.asarray(c, dtype=np.float64), table)
    return {k: _backproject(_adjoint(ff, {k: 1.0}), table)[0] for k in which}


@dataclass
class SSResult:
    values: dict
    gradients: dict | None


def _scatter(local: np.ndarray, ctrl: np.ndarray, nv: int) -> np.ndarray:
    flat = ctrl.ravel()
    return np.stack(
        [np.bincount(flat, weights=local[..., d].ravel(), minlength=nv) for d in range(3)], axis=1
    )


def _groups(mesh: TriMesh, tables: SSTables):
    x = mesh.vertices
    # fixed valence order keeps the summation order deterministic
    for N in sorted(tables.patches.controls):
        ids, ctrl = tables.patches.controls[N]
        table = tables.table(N)
        yield ctrl, table, fundamental_forms(x[ctrl], table, ids)


def ss_energy(mesh: TriMesh, tables: SSTables | None = None, which=FUNCTIONALS,
              gradient: bool = True) -> SSResult:
    """Sum of patch integrals over all faces, with gradients scattered to the control vertices."""
    if tables is None:
        tables = tables_for(mesh)
    nv = mesh.n_vertices
    values = {k: 0.0 for k in which}
    grads = {k: np.zeros((nv, 3)) for k in which} if gradient else None
    for ctrl, table, ff in _groups(mesh, tables):
        vals = _integrands(ff, which)
        for k in which:
            values[k] += float(np.sum(table.weights @ vals[k]))
        if gradient:
            for k in which:
                grads[k] += _scatter(_backproject(_adjoint(ff, {k: 1.0}), table), ctrl, nv)
    return SSResult(values, grads)


def ss_combined(mesh: TriMesh, tables: SSTables, which, coefficients):
    """Values of `which` and the gradient of sum_k c_k F_k with c = coefficients(values).

    One adjoint pass instead of one per functional; this is what the
    optimizer uses for its penalty function.
    """
    nv = mesh.n_vertices
    groups = list(_groups(mesh, tables))
    values = {k: 0.0 for k in which}
    for _, table, ff in groups:
        vals = _integrands(ff, which)
        for k in which:
            values[k] += float(np.sum(table.weights @ vals[k]))
    coef = coefficients(values)
    grad = np.zeros((nv, 3))
    for ctrl, table, ff in groups:
        grad += _scatter(_backproject(_adjoint(ff, coef), table), ctrl, nv)
    return values, grad


def gauss_bonnet_integral(mesh: TriMesh, tables: SSTables | None = None) -> float:
    """Integral of Gauss curvature over the limit surface (should be 4 pi (1 - g))."""
    return ss_energy(mesh, tables, which=("K",), gradient=False).values["K"]
