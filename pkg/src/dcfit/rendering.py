"""Raster rendering of handle documents at arbitrary resolution."""
from __future__ import annotations

import numpy as np

from .bem_forward import assemble_rhs, boundary_weights, build_system, eval_f, solve_boundary
from .geometry import DEFAULT_H_MAX, point_in_polygon

_RENDER_CHUNK = 16384


def grid_points(resolution):
    """Pixel centers of a resolution^2 grid; row i is y = (i + 0.5) / R."""
    centers = (np.arange(resolution) + 0.5) / resolution
    gx, gy = np.meshgrid(centers, centers)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def document_domain_of(doc, points):
    """Priority-resolved subdomain index per point, from a handle document."""
    order = sorted(range(len(doc.subdomains)),
                   key=lambda i: (doc.subdomains[i].priority, i))
    pts = np.atleast_2d(points)
    out = np.full(pts.shape[0], -1, dtype=int)
    for i in order:
        undecided = out < 0
        if not np.any(undecided):
            break
        hit = point_in_polygon(pts[undecided], doc.subdomains[i].boundary.vertices)
        out[np.nonzero(undecided)[0][hit]] = i
    if np.any(out < 0):
        raise ValueError("handle document does not cover the full frame")
    return out


def render_document(doc, resolution, eps=1e-2, h_max=DEFAULT_H_MAX, systems=None):
    """Evaluate the stored reconstruction at pixel centers, (R, R, 3) linear."""
    pts = grid_points(resolution)
    dom_idx = document_domain_of(doc, pts)
    out = np.zeros((pts.shape[0], 3))
    for i, entry in enumerate(doc.subdomains):
        idx = np.nonzero(dom_idx == i)[0]
        if idx.shape[0] == 0:
            continue
        dom = entry.boundary.id
        sys_i = None if systems is None else systems.get(dom)
        if sys_i is None:
            sys_i = build_system(entry.boundary, h_max)
        hs = doc.handle_sets[dom]
        rhs = assemble_rhs(sys_i.elements, hs, eps, h_max)
        u_bar = solve_boundary(sys_i, rhs)
        for lo in range(0, idx.shape[0], _RENDER_CHUNK):
            sel = idx[lo:lo + _RENDER_CHUNK]
            W = boundary_weights(pts[sel], sys_i.elements)
            u = -(W @ u_bar)
            u += eval_f(pts[sel], hs, eps, h_max)
            u += entry.mean_color[None, :]
            out[sel] = u
    return out.reshape(resolution, resolution, 3)
