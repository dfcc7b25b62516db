"""2D geometry for boundary element solves on polygonal image subdomains.

Image space is the unit square [0, 1]^2, so fractions of the image width
("1/256", "1/20") translate directly into absolute lengths. Subdomain
boundaries are simple counterclockwise polygons; outward normals follow the
tangent-rotated-by-minus-90-degrees convention, which points out of a
counterclockwise polygon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_H_MAX = 1.0 / 256.0

# 3-point Gauss-Legendre rule on [0, 1]
GAUSS3_POS = np.array([0.5 * (1.0 - np.sqrt(0.6)), 0.5, 0.5 * (1.0 + np.sqrt(0.6))])
GAUSS3_WEIGHT = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def polygon_signed_area(vertices):
    """Signed area of a polygon given as an (V, 2) vertex array (CCW > 0)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


@dataclass
class SubdomainBoundary:
    """Closed polygonal outer boundary of one image subdomain.

    Vertices are stored without repeating the first point; closure is
    implied. Orientation must be counterclockwise.
    """

    id: str
    vertices: np.ndarray  # (V, 2)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError(f"subdomain {self.id!r}: need >= 3 vertices of shape (V, 2)")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"subdomain {self.id!r}: non-finite vertex")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) == 0.0):
            raise ValueError(f"subdomain {self.id!r}: repeated consecutive vertex")
        if polygon_signed_area(v) <= 0.0:
            raise ValueError(f"subdomain {self.id!r}: polygon must be counterclockwise")
        self.vertices = v

    @property
    def perimeter(self):
        v = self.vertices
        edges = np.roll(v, -1, axis=0) - v
        return float(np.sum(np.hypot(edges[:, 0], edges[:, 1])))


@dataclass
class ElementSet:
    """Straight boundary elements of one subdomain, as arrays over elements.

    Normals are unit outward vectors; `node` / `node_weight` cache the
    3-point Gauss rule per element, with the arc-length factor folded into
    the weights (so weights of one element sum to its length).
    """

    owner: str
    a: np.ndarray            # (N, 2) element start points
    b: np.ndarray            # (N, 2) element end points
    length: np.ndarray       # (N,)
    normal: np.ndarray       # (N, 2)
    node: np.ndarray         # (N, 3, 2)
    node_weight: np.ndarray  # (N, 3)

    @property
    def count(self):
        return self.a.shape[0]


def gauss3(a, b):
    """3-point Gauss-Legendre nodes and weights on the segment a-b.

    Weights include the arc-length factor |b - a| / 2 * (2 w_ref), i.e. they
    sum to the segment length; the rule integrates quintics exactly.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    seg = b - a
    length = float(np.hypot(seg[0], seg[1]))
    if length == 0.0:
        raise ValueError("gauss3: degenerate segment")
    nodes = a[None, :] + GAUSS3_POS[:, None] * seg[None, :]
    weights = GAUSS3_WEIGHT * length
    return nodes, weights


def discretize_boundary(boundary, h_max=DEFAULT_H_MAX):
    """Split every polygon edge into ceil(edge_length / h_max) equal elements.

    Elements are ordered counterclockwise along the boundary and carry
    outward unit normals (tangent rotated by -90 degrees).
    """
    if h_max <= 0.0:
        raise ValueError("h_max must be positive")
    v = boundary.vertices
    starts, ends = [], []
    for i in range(v.shape[0]):
        p, q = v[i], v[(i + 1) % v.shape[0]]
        edge = q - p
        edge_len = float(np.hypot(edge[0], edge[1]))
        if edge_len == 0.0:
            raise ValueError(f"subdomain {boundary.id!r}: degenerate edge")
        n_pieces = int(np.ceil(edge_len / h_max))
        t = np.linspace(0.0, 1.0, n_pieces + 1)
        pts = p[None, :] + t[:, None] * edge[None, :]
        starts.append(pts[:-1])
        ends.append(pts[1:])
    a = np.concatenate(starts, axis=0)
    b = np.concatenate(ends, axis=0)
    seg = b - a
    length = np.hypot(seg[:, 0], seg[:, 1])
    tangent = seg / length[:, None]
    normal = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1)
    node = a[:, None, :] + GAUSS3_POS[None, :, None] * seg[:, None, :]
    node_weight = GAUSS3_WEIGHT[None, :] * length[:, None]
    return ElementSet(owner=boundary.id, a=a, b=b, length=length,
                      normal=normal, node=node, node_weight=node_weight)


def point_in_polygon(points, vertices, edge_tol=1e-12):
    """Vectorized point-in-polygon test; points on an edge count as inside.

    points: (M, 2) or (2,); returns a bool array (M,) or a scalar bool.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.asarray(vertices, dtype=float)
    a = v                       # (E, 2)
    b = np.roll(v, -1, axis=0)  # (E, 2)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ax, ay = a[None, :, 0], a[None, :, 1]
    bx, by = b[None, :, 0], b[None, :, 1]

    # crossing-number test on a ray toward +x
    cond = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_int = ax + (py - ay) * (bx - ax) / (by - ay)
    crossings = np.sum(cond & (x_int > px), axis=1)
    inside = (crossings % 2) == 1

    # points on an edge count as inside regardless of the ray parity
    ex, ey = bx - ax, by - ay
    cross = ex * (py - ay) - ey * (px - ax)
    dot = ex * (px - ax) + ey * (py - ay)
    len2 = ex * ex + ey * ey
    on_edge = np.any((np.abs(cross) <= edge_tol) & (dot >= -edge_tol) & (dot <= len2 + edge_tol), axis=1)
    result = inside | on_edge
    if np.asarray(points).ndim == 1:
        return bool(result[0])
    return result


def point_in_subdomain(p, boundary):
    """True iff p lies strictly inside or on the boundary polygon."""
    return point_in_polygon(p, boundary.vertices)
