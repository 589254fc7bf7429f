"""Loop subdivision: refinement step, exact patch evaluation, per-face control lists.

Local control ordering
----------------------
A patch is the limit surface over one face (c0, c1, c2) of the control mesh,
parametrized by (v, w) in the triangle v, w >= 0, v + w <= 1, with c0 at
(0, 0), c1 at (1, 0) and c2 at (0, 1). Controls are addressed through a
triangular lattice chart in which c0 = (0,0), c1 = (1,0), c2 = (0,1) and the
six lattice neighbours of (a, b) are (a+-1, b), (a, b+-1), (a+1, b-1),
(a-1, b+1). If c0 has valence N (c1 and c2 must be regular):

    0          c0                      (0, 0)
    1..N       1-ring of c0, counterclockwise from c1 = (1,0), c2 = (0,1);
               so c3 = (-1, 1) and cN = (1, -1)
    N+1..N+5   (2,-1), (2,0), (1,1), (0,2), (-1,2)

For N = 6 this is the 12-point regular stencil, ordered
(0,0) (1,0) (0,1) (-1,1) (-1,0) (0,-1) (1,-1) (2,-1) (2,0) (1,1) (0,2) (-1,2).
Where 1-rings coalesce on a small mesh the same vertex index simply repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.linalg

from .mesh import MeshError, TriMesh, midpoint_subdivide

# lattice directions, counterclockwise
_DIRS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

REGULAR_TEMPLATE = ((0, 0), (1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1),
                    (2, -1), (2, 0), (1, 1), (0, 2), (-1, 2))
_EXTRA = ((2, -1), (2, 0), (1, 1), (0, 2), (-1, 2))


def _rot60(d):
    a, b = d
    return (-b, a + b)


def _rotm60(d):
    a, b = d
    return (a + b, -a)


def loop_beta(k: int) -> float:
    return (5.0 / 8.0 - (3.0 / 8.0 + 0.25 * math.cos(2 * math.pi / k)) ** 2) / k


def limit_weight(k: int) -> float:
    """Neighbour weight of the limit-position mask at a valence-k vertex."""
    return 1.0 / (3.0 / (8.0 * loop_beta(k)) + k)


# --- global refinement -------------------------------------------------------

def loop_subdivide(mesh: TriMesh) -> TriMesh:
    """One Loop step; connectivity and vertex numbering follow midpoint_subdivide."""
    topo = mesh.topology
    x = mesh.vertices
    new_old = np.empty_like(x)
    for v, ring in enumerate(topo.rings):
        k = len(ring)
        b = loop_beta(k)
        new_old[v] = (1 - k * b) * x[v] + b * x[list(ring)].sum(0)
    e, opp = topo.edges, topo.edge_opposite
    edge_pts = 0.375 * (x[e[:, 0]] + x[e[:, 1]]) + 0.125 * (x[opp[:, 0]] + x[opp[:, 1]])
    split = midpoint_subdivide(mesh)
    return split.with_vertices(np.vstack([new_old, edge_pts]))


def limit_positions(mesh: TriMesh) -> np.ndarray:
    x = mesh.vertices
    out = np.empty_like(x)
    for v, ring in enumerate(mesh.topology.rings):
        k = len(ring)
        chi = limit_weight(k)
        out[v] = (1 - k * chi) * x[v] + chi * x[list(ring)].sum(0)
    return out


# --- regular patch: box-spline basis derived by exact refinement --------------

_MONOMIALS = tuple((a, d - a) for d in range(5) for a in range(d, -1, -1))


def _lattice_refine(data: dict) -> dict:
    """One regular Loop step on integer lattice data, scaled by 16."""
    out = {}
    keys = set(data)
    lo = min(min(k) for k in keys) * 2
    hi = max(max(k) for k in keys) * 2
    for a in range(lo, hi + 1):
        for b in range(lo, hi + 1):
            if a % 2 == 0 and b % 2 == 0:
                p = (a // 2, b // 2)
                nb = [(p[0] + d[0], p[1] + d[1]) for d in _DIRS]
                if p in data and all(q in data for q in nb):
                    out[(a, b)] = 10 * data[p] + sum(data[q] for q in nb)
                continue
            if a % 2 and b % 2 == 0:
                d = (1, 0)
                p = ((a - 1) // 2, b // 2)
            elif a % 2 == 0:
                d = (0, 1)
                p = (a // 2, (b - 1) // 2)
            else:
                d = (-1, 1)
                p = ((a + 1) // 2, (b - 1) // 2)
            q = (p[0] + d[0], p[1] + d[1])
            r = (p[0] + _rot60(d)[0], p[1] + _rot60(d)[1])
            s = (p[0] + _rotm60(d)[0], p[1] + _rotm60(d)[1])
            if all(t in data for t in (p, q, r, s)):
                out[(a, b)] = 6 * (data[p] + data[q]) + 2 * (data[r] + data[s])
    return out


def _solve_exact(mat: list[list[Fraction]], rhs: list[list[Fraction]]) -> list[list[Fraction]]:
    """Gauss-Jordan elimination over the rationals; rhs has one column per system."""
    n = len(mat)
    aug = [row[:] + r[:] for row, r in zip(mat, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if aug[r][col] != 0)
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [t / pv for t in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [row[n:] for row in aug]


@lru_cache(maxsize=None)
def regular_coefficients() -> tuple[tuple[Fraction, ...], ...]:
    """Monomial coefficients of the 12 quartic basis functions, exact.

    Each basis function is the limit of a delta at one stencil point. Two
    refinement steps plus the limit mask give exact limit values at the 15
    points (i/4, j/4) of the patch, which determine the quartic.
    """
    span = range(-5, 7)
    samples = [(i, j) for j in range(5) for i in range(5 - j)]
    values = []
    for t in REGULAR_TEMPLATE:
        data = {(a, b): int((a, b) == t) for a in span for b in span}
        fine = _lattice_refine(_lattice_refine(data))
        row = []
        for p in samples:
            nb = [(p[0] + d[0], p[1] + d[1]) for d in _DIRS]
            row.append(Fraction(6 * fine[p] + sum(fine[q] for q in nb), 16 * 16 * 12))
        values.append(row)
    vander = [[Fraction(i, 4) ** a * Fraction(j, 4) ** b for a, b in _MONOMIALS] for i, j in samples]
    # vander @ coef = values^T, one right-hand side per basis function
    rhs = [[values[k][s] for k in range(12)] for s in range(len(samples))]
    sol = _solve_exact(vander, rhs)
    return tuple(tuple(sol[m][k] for m in range(len(_MONOMIALS))) for k in range(12))


@lru_cache(maxsize=None)
def _coef_array() -> np.ndarray:
    return np.array([[float(c) for c in row] for row in regular_coefficients()])


def _monomial_table(v, w, order: int) -> list[np.ndarray]:
    """Monomials and their partials: [m, m_v, m_w, m_vv, m_vw, m_ww] up to `order`."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)

    def pw(x, k):
        return x ** k if k >= 0 else np.zeros_like(x)

    out = [np.stack([pw(v, a) * pw(w, b) for a, b in _MONOMIALS], -1)]
    if order >= 1:
        out.append(np.stack([a * pw(v, a - 1) * pw(w, b) for a, b in _MONOMIALS], -1))
        out.append(np.stack([b * pw(v, a) * pw(w, b - 1) for a, b in _MONOMIALS], -1))
    if order >= 2:
        out.append(np.stack([a * (a - 1) * pw(v, a - 2) * pw(w, b) for a, b in _MONOMIALS], -1))
        out.append(np.stack([a * b * pw(v, a - 1) * pw(w, b - 1) for a, b in _MONOMIALS], -1))
        out.append(np.stack([b * (b - 1) * pw(v, a) * pw(w, b - 2) for a, b in _MONOMIALS], -1))
    return out


def _check_domain(v, w, tol=1e-12):
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if np.any(v < -tol) or np.any(w < -tol) or np.any(v + w > 1 + tol):
        raise ValueError("parameter point outside the patch triangle")
    return v, w


def regular_basis(v, w, order: int = 0) -> list[np.ndarray]:
    """[b, b_v, b_w, (b_vv, b_vw, b_ww)] each of shape (..., 12); 3 arrays for order 1."""
    v, w = _check_domain(v, w)
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    coef = _coef_array()
    return [m @ coef.T for m in _monomial_table(v, w, order)]


# --- irregular patches: extended subdivision matrix and eigenstructure --------

def _chart_index(N: int) -> dict:
    idx = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (-1, 1): 3, (1, -1): N}
    for k, p in enumerate(_EXTRA):
        idx[p] = N + 1 + k
    return idx


def _ring_pos(N: int) -> dict:
    return {(1, 0): 1, (0, 1): 2, (-1, 1): 3, (1, -1): N}


def _fine_stencil(N: int, F: tuple[int, int]) -> np.ndarray:
    """Weights over the N+6 coarse controls of the refined point at fine chart coords F."""
    chart = _chart_index(N)
    ring = _ring_pos(N)
    b = loop_beta(N)
    out = np.zeros(N + 6)
    a, c = F
    if a % 2 == 0 and c % 2 == 0:
        p = (a // 2, c // 2)
        if p == (0, 0):
            out[0] = 1 - N * b
            out[1:N + 1] = b
        else:
            out[chart[p]] += 10 / 16
            for d in _DIRS:
                out[chart[(p[0] + d[0], p[1] + d[1])]] += 1 / 16
        return out
    if a % 2 and c % 2 == 0:
        d, p = (1, 0), ((a - 1) // 2, c // 2)
    elif a % 2 == 0:
        d, p = (0, 1), (a // 2, (c - 1) // 2)
    else:
        d, p = (-1, 1), ((a + 1) // 2, (c - 1) // 2)
    q = (p[0] + d[0], p[1] + d[1])
    if (0, 0) in (p, q):
        i = ring[q if p == (0, 0) else p]
        out[0] += 3 / 8
        out[i] += 3 / 8
        out[(i % N) + 1] += 1 / 8
        out[((i - 2) % N) + 1] += 1 / 8
        return out
    r = (p[0] + _rot60(d)[0], p[1] + _rot60(d)[1])
    s = (p[0] + _rotm60(d)[0], p[1] + _rotm60(d)[1])
    out[chart[p]] += 3 / 8
    out[chart[q]] += 3 / 8
    out[chart[r]] += 1 / 8
    out[chart[s]] += 1 / 8
    return out


@lru_cache(maxsize=None)
def subdivision_matrix(N: int) -> np.ndarray:
    """(N+6) x (N+6) map from local controls to the controls of the sub-patch at c0."""
    if N < 3:
        raise ValueError("valence must be at least 3")
    b = loop_beta(N)
    A = np.zeros((N + 6, N + 6))
    A[0, 0] = 1 - N * b
    A[0, 1:N + 1] = b
    for i in range(1, N + 1):
        A[i, 0] += 3 / 8
        A[i, i] += 3 / 8
        A[i, (i % N) + 1] += 1 / 8
        A[i, ((i - 2) % N) + 1] += 1 / 8
    # outer controls: fine chart coordinates are twice the coarse ones
    for k, p in enumerate(_EXTRA):
        A[N + 1 + k] = _fine_stencil(N, (p[0], p[1]))
    A.setflags(write=False)
    return A


def subdivision_eigenvalues(N: int) -> list[float]:
    """All N+6 eigenvalues, known in closed form."""
    b = loop_beta(N)
    lams = [1.0, 5 / 8 - N * b]
    lams += [3 / 8 + 0.25 * math.cos(2 * math.pi * k / N) for k in range(1, N)]
    lams += [1 / 8] * 3 + [1 / 16] * 2
    return lams


@dataclass(frozen=True)
class EigenStructure:
    N: int
    V: np.ndarray
    Vinv: np.ndarray
    eigenvalues: np.ndarray  # diagonal of Lambda
    jordan: tuple[int, ...]  # columns j with Lambda[j, j+1] = 1
    Mk: tuple[np.ndarray, np.ndarray, np.ndarray]  # picking matrices for T_p, T_mid, T_q

    @property
    def Lambda(self) -> np.ndarray:
        L = np.diag(self.eigenvalues)
        for j in self.jordan:
            L[j, j + 1] = 1.0
        return L

    def power(self, k: int) -> np.ndarray:
        """Lambda^k."""
        L = np.diag(self.eigenvalues ** k)
        for j in self.jordan:
            lam = self.eigenvalues[j]
            L[j, j + 1] = k * lam ** (k - 1) if k >= 1 else 0.0
        return L


def _null_space(M: np.ndarray, dim: int) -> np.ndarray:
    _, s, vh = np.linalg.svd(M)
    return vh[-dim:].T, s


def _picking_matrices(N: int):
    # sub-patch origins and lattice axes in fine chart coordinates
    frames = (((1, 0), (1, 0), (0, 1)),     # T_p
              ((1, 1), (-1, 0), (0, -1)),   # T_mid (rotated by 180 degrees)
              ((0, 1), (1, 0), (0, 1)))     # T_q
    out = []
    for o, e1, e2 in frames:
        rows = []
        for a, b in REGULAR_TEMPLATE:
            F = (o[0] + a * e1[0] + b * e2[0], o[1] + a * e1[1] + b * e2[1])
            rows.append(_fine_stencil(N, F))
        out.append(np.array(rows))
    return tuple(out)


@lru_cache(maxsize=None)
def eigenstructure(N: int) -> EigenStructure:
    """Generalized eigenvectors of the extended subdivision matrix.

    Eigenvalues come from the closed form; each eigenspace is the SVD null
    space of A - lambda I. Where that falls short of the multiplicity (the
    valence-3 case at 1/16) a Jordan chain is built from the null space of
    (A - lambda I)^2.
    """
    A = subdivision_matrix(N)
    n = N + 6
    lams = sorted(subdivision_eigenvalues(N), reverse=True)
    groups: list[list[float]] = []
    for lam in lams:
        if groups and abs(groups[-1][0] - lam) < 1e-12:
            groups[-1].append(lam)
        else:
            groups.append([lam])
    cols, diag, jordan = [], [], []
    I = np.eye(n)
    for g in groups:
        lam, mult = g[0], len(g)
        B = A - lam * I
        K1, s = _null_space(B, mult)
        geo = int(np.sum(s < 1e-10 * max(1.0, s[0])))
        if geo >= mult:
            cols += list(K1.T)
            diag += [lam] * mult
            continue
        if mult - geo != 1:
            raise ArithmeticError(f"unexpected defect for valence {N} at eigenvalue {lam}")
        E, _ = _null_space(B, geo)
        K2, _ = _null_space(B @ B, mult)
        # a vector of the generalized space outside the eigenspace heads the chain
        resid = K2 - E @ (E.T @ K2)
        v2 = resid[:, np.argmax(np.linalg.norm(resid, axis=0))]
        v2 /= np.linalg.norm(v2)
        v1 = B @ v2
        others = E - np.outer(v1, v1 @ E) / (v1 @ v1)
        u, sv, _ = np.linalg.svd(others)
        rest = u[:, : geo - 1]
        for r in rest.T:
            cols.append(r)
            diag.append(lam)
        jordan.append(len(cols))
        cols += [v1, v2]
        diag += [lam, lam]
    V = np.array(cols).T
    Vinv = np.linalg.inv(V)
    es = EigenStructure(N, V, Vinv, np.array(diag), tuple(jordan), _picking_matrices(N))
    res = np.max(np.abs(A @ V - V @ es.Lambda))
    if res > 1e-10 or np.max(np.abs(V @ Vinv - I)) > 1e-10:
        raise ArithmeticError(f"eigen decomposition for valence {N} is inaccurate ({res:.2e})")
    return es


def _ring_and_piece(v: np.ndarray, w: np.ndarray):
    """Ring n >= 1, sub-triangle k (0: T_p, 1: T_mid, 2: T_q) and local parameter t."""
    s = v + w
    _, e = np.frexp(s)
    n = np.maximum(1, 1 - e)
    scale = np.ldexp(1.0, n - 1)
    vs, ws = v * scale, w * scale
    k = np.where(vs >= 0.5, 0, np.where(ws >= 0.5, 2, 1))
    tv = np.where(k == 0, 2 * vs - 1, np.where(k == 2, 2 * vs, 1 - 2 * vs))
    tw = np.where(k == 0, 2 * ws, np.where(k == 2, 2 * ws - 1, 1 - 2 * ws))
    return n, k, np.clip(tv, 0.0, 1.0), np.clip(tw, 0.0, 1.0)


def irregular_basis(N: int, v, w, order: int = 0) -> list[np.ndarray]:
    """Basis rows over the N+6 local controls at points of an irregular patch.

    Returns [phi, phi_v, phi_w, (phi_vv, phi_vw, phi_ww)], each (..., N+6).
    Evaluation goes through the eigenbasis: phi = b(t)^T M_k V Lambda^(n-1) V^-1,
    with chain-rule factors 2^n (first) and 4^n (second derivatives); the
    T_mid piece is rotated, which flips the sign of the first derivatives.
    """
    v, w = _check_domain(v, w)
    shape = np.broadcast(v, w).shape
    v = np.broadcast_to(v, shape).ravel()
    w = np.broadcast_to(w, shape).ravel()
    at_origin = (v + w) == 0
    if order >= 1 and np.any(at_origin):
        raise ValueError("derivatives are not defined at the extraordinary vertex")
    es = eigenstructure(N)
    nout = 1 + 2 * (order >= 1) + 3 * (order >= 2)
    out = [np.zeros((len(v), N + 6)) for _ in range(nout)]
    n, k, tv, tw = _ring_and_piece(np.where(at_origin, 1.0, v), w)
    coef = _coef_array()
    for kk in range(3):
        MkV = es.Mk[kk] @ es.V
        for nn in np.unique(n[k == kk]):
            sel = np.flatnonzero((k == kk) & (n == nn) & ~at_origin)
            if not sel.size:
                continue
            tail = es.power(int(nn) - 1) @ es.Vinv
            mons = _monomial_table(tv[sel], tw[sel], order)
            f1 = (-1.0 if kk == 1 else 1.0) * 2.0 ** nn
            f2 = 4.0 ** nn
            factors = [1.0, f1, f1, f2, f2, f2][:nout]
            for j in range(nout):
                out[j][sel] = factors[j] * ((mons[j] @ coef.T) @ MkV @ tail)
    if np.any(at_origin):
        chi = limit_weight(N)
        row = np.zeros(N + 6)
        row[0] = 1 - N * chi
        row[1:N + 1] = chi
        out[0][at_origin] = row
    return [o.reshape(shape + (N + 6,)) for o in out]


def irregular_basis_direct(N: int, v: float, w: float, order: int = 0) -> list[np.ndarray]:
    """Same rows as irregular_basis, but by explicit powers of the subdivision matrix."""
    if v + w == 0:
        raise ValueError("direct evaluation needs a point away from the extraordinary vertex")
    n, k, tv, tw = _ring_and_piece(np.array([v]), np.array([w]))
    n, k = int(n[0]), int(k[0])
    A = subdivision_matrix(N)
    Mk = eigenstructure(N).Mk[k]
    P = Mk @ np.linalg.matrix_power(A, n - 1)
    b = regular_basis(tv, tw, order)
    f1 = (-1.0 if k == 1 else 1.0) * 2.0 ** n
    f2 = 4.0 ** n
    factors = [1.0, f1, f1, f2, f2, f2]
    return [factors[j] * (b[j][0] @ P) for j in range(len(b))]


def eval_irregular(c: np.ndarray, v, w, order: int = 0) -> list[np.ndarray]:
    """Surface point (and partials) of an irregular patch with local controls c ((N+6) x 3)."""
    c = np.asarray(c, dtype=np.float64)
    N = c.shape[0] - 6
    return [phi @ c for phi in irregular_basis(N, v, w, order)]


def eval_regular(c: np.ndarray, v, w, order: int = 0) -> list[np.ndarray]:
    c = np.asarray(c, dtype=np.float64)
    if c.shape[0] != 12:
        raise ValueError("a regular patch has 12 controls")
    return [b @ c for b in regular_basis(v, w, order)]


# --- per-face control lists ----------------------------------------------------

@dataclass(frozen=True)
class PatchTables:
    """Faces grouped by the valence of their extraordinary corner (6 = regular)."""

    valence: np.ndarray  # per face
    controls: dict  # valence -> (face ids, (nf, valence+6) control indices)

    @property
    def n_faces(self) -> int:
        return len(self.valence)

    def vfl(self, face: int) -> np.ndarray:
        N = int(self.valence[face])
        ids, ctrl = self.controls[N]
        return ctrl[np.searchsorted(ids, face)]


def _rotate_to(ring: tuple, start: int) -> list:
    i = ring.index(start)
    return list(ring[i:] + ring[:i])


def _face_controls(rings, a: int, b: int, c: int) -> list[int]:
    ra = _rotate_to(rings[a], b)
    if ra[1] != c:
        raise MeshError(f"face ({a}, {b}, {c}) is inconsistent with the 1-ring of {a}")
    N = len(ra)
    # ring of p = b, counterclockwise: [c_{N+2}, c_{N+3}, c2, c0, cN, c_{N+1}]
    rp = rings[b]
    j = rp.index(a)
    m = len(rp)
    p_ring = {d: rp[(j + d) % m] for d in (-3, -2, -1, 1, 2)}
    # ring of q = c: [c_{N+3}, c_{N+4}, c_{N+5}, c3, c0, c1]
    rq = rings[c]
    j2 = rq.index(a)
    m2 = len(rq)
    q_ring = {d: rq[(j2 + d) % m2] for d in (-4, -3, -2, -1, 1)}
    if p_ring[-1] != c or p_ring[1] != ra[-1] or q_ring[1] != b or q_ring[-1] != ra[2]:
        raise MeshError(f"1-rings around face ({a}, {b}, {c}) do not fit together")
    if p_ring[-2] != q_ring[-4]:
        raise MeshError(f"1-rings around face ({a}, {b}, {c}) disagree on the opposite vertex")
    extra = [p_ring[2], p_ring[-3], p_ring[-2], q_ring[-3], q_ring[-2]]
    return [a] + ra + extra


def build_patch_tables(mesh: TriMesh) -> PatchTables:
    topo = mesh.topology
    rings = topo.rings
    val = topo.valence
    groups: dict[int, list] = {}
    valence = np.empty(mesh.n_faces, dtype=np.int64)
    for fid, f in enumerate(mesh.faces.tolist()):
        irregular = [i for i in range(3) if val[f[i]] != 6]
        if len(irregular) > 1:
            raise MeshError(
                f"face {fid} has {len(irregular)} extraordinary corners; "
                "apply midpoint_subdivide (or loop_subdivide) first to isolate them"
            )
        r = irregular[0] if irregular else 0
        a, b, c = f[r], f[(r + 1) % 3], f[(r + 2) % 3]
        N = int(val[a])
        valence[fid] = N
        groups.setdefault(N, []).append((fid, _face_controls(rings, a, b, c)))
    controls = {
        N: (np.array([g[0] for g in items], dtype=np.int64), np.array([g[1] for g in items], dtype=np.int64))
        for N, items in groups.items()
    }
    return PatchTables(valence, controls)
