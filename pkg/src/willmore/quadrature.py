"""Composite 7-point quadrature on the patch triangle, plus its ring layout for irregular patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _seven_point():
    """Symmetric degree-5 rule on the reference triangle (weights sum to 1/2)."""
    s15 = np.sqrt(15.0)
    a1, b1 = (6 - s15) / 21, (9 + 2 * s15) / 21
    a2, b2 = (6 + s15) / 21, (9 - 2 * s15) / 21
    w1, w2 = (155 - s15) / 1200, (155 + s15) / 1200
    bary = [(1 / 3, 1 / 3, 1 / 3),
            (a1, a1, b1), (a1, b1, a1), (b1, a1, a1),
            (a2, a2, b2), (a2, b2, a2), (b2, a2, a2)]
    weights = [9 / 40, w1, w1, w1, w2, w2, w2]
    pts = np.array([[b[1], b[2]] for b in bary])
    return pts, 0.5 * np.array(weights)


BASE_POINTS, BASE_WEIGHTS = _seven_point()


def _is_dyadic(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def composite_rule(n: int, corners=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))):
    """Nodes and weights on a triangle split uniformly into n^2 congruent cells."""
    p0, p1, p2 = (np.asarray(c, dtype=np.float64) for c in corners)
    e1, e2 = (p1 - p0) / n, (p2 - p0) / n
    jac = abs(e1[0] * e2[1] - e1[1] * e2[0])  # |det| of the cell map from the reference triangle
    nodes, weights = [], []
    for i in range(n):
        for j in range(n - i):
            # upright cell with corner (i, j)
            o = p0 + i * e1 + j * e2
            nodes.append(o + BASE_POINTS[:, :1] * e1 + BASE_POINTS[:, 1:] * e2)
            weights.append(BASE_WEIGHTS * jac)
            if i + j < n - 1:
                # inverted cell with corner (i+1, j+1)
                o = p0 + (i + 1) * e1 + (j + 1) * e2
                nodes.append(o - BASE_POINTS[:, :1] * e1 - BASE_POINTS[:, 1:] * e2)
                weights.append(BASE_WEIGHTS * jac)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass(frozen=True)
class QuadRule:
    """Nodes (v, w) and weights on the patch triangle.

    ``regular`` covers the whole triangle with a uniform grid of size 1/n.
    ``irregular`` covers the rings (1/2)^(j-1) (T minus T/2), j = 1..D, each
    split into its three sub-triangles so that no cell straddles the piecewise
    structure near the extraordinary vertex; the last 4^-D of the area is left
    out (the integrands are bounded there).
    """

    n: int
    depth: int
    regular_nodes: np.ndarray
    regular_weights: np.ndarray
    irregular_nodes: np.ndarray
    irregular_weights: np.ndarray


def make_quadrature(n: int = 8, depth: int = 16) -> QuadRule:
    if not _is_dyadic(n):
        raise ValueError(f"grid size n must be a power of two, got {n}")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    rn, rw = composite_rule(n)
    nodes, weights = [], []
    for j in range(1, depth + 1):
        h = 0.5 ** j  # side of each sub-triangle in ring j
        cells = max(min(n, 2), n >> j)
        subs = (((h, 0.0), (2 * h, 0.0), (h, h)),      # next to c1
                ((h, h), (0.0, h), (h, 0.0)),           # middle, rotated
                ((0.0, h), (h, h), (0.0, 2 * h)))       # next to c2
        for corners in subs:
            p, w = composite_rule(cells, corners)
            nodes.append(p)
            weights.append(w)
    return QuadRule(n, depth, rn, rw, np.concatenate(nodes), np.concatenate(weights))
