"""Analytic derivatives of the reconstruction with respect to handle parameters.

Differentiating the boundary integral equation in the handle parameters
theta leaves the operator unchanged (the outer boundary is fixed), so the
parameter Jacobian of the boundary solution satisfies the same system as
the forward solve with one new right-hand side per parameter:

    A du_bar/dtheta_p = int_{elem_i} df/dtheta_p (x) dx.

One SVD factorization therefore serves the forward solve and the stacked
multi-column Jacobian solves of every optimization step.

Parameters are laid out per handle as 10 contiguous scalars

    [p0.x, p0.y, p1.x, p1.y, w_d.r, w_d.g, w_d.b, w_c.r, w_c.g, w_c.b]

and concatenated over the handles of a subdomain (P = 10 K). The per-domain
mean color is estimated outside the least-squares step and is not part of
theta.

The source derivative df/dtheta differentiates the parametric form of the
jump term. With z(s) = (1 - s) p0 + s p1, m = rot90(p1 - p0), d = z - x and
rho^2 = |d|^2 + eps^2, the two per-node integrands are

    T1 = 1/(2 pi) * (m . d) / rho^2          (multiplies w_d),
    T2 = -1/(4 pi) * log(rho^2) * len        (multiplies w_c),

and endpoint derivatives differentiate through z, through the unnormalized
normal m, and through the arc factor len where it appears (only in the w_c
term; the w_d term absorbs it into m).
"""
from __future__ import annotations

import numpy as np

from .bem_forward import (
    INV_2PI,
    INV_4PI,
    _chunks,
    boundary_weights,
    handle_quadrature,
)
from .geometry import DEFAULT_H_MAX

PARAMS_PER_HANDLE = 10


def param_count(hs):
    return PARAMS_PER_HANDLE * hs.count


def pack_params(hs):
    """Flatten a HandleSet into the per-subdomain parameter vector."""
    theta = np.empty(param_count(hs))
    view = theta.reshape(hs.count, PARAMS_PER_HANDLE)
    view[:, 0:2] = hs.p0
    view[:, 2:4] = hs.p1
    view[:, 4:7] = hs.w_d
    view[:, 7:10] = hs.w_c
    return theta


def apply_params(hs, theta):
    """New HandleSet with geometry and weights taken from a parameter vector."""
    view = np.asarray(theta, dtype=float).reshape(hs.count, PARAMS_PER_HANDLE)
    out = hs.copy()
    out.p0 = view[:, 0:2].copy()
    out.p1 = view[:, 2:4].copy()
    out.w_d = view[:, 4:7].copy()
    out.w_c = view[:, 7:10].copy()
    return out


def eval_df_blocks(points, hs, eps, h_max=DEFAULT_H_MAX, nodes=None, dtype=np.float64):
    """Per-handle column blocks of df/dtheta at the given points.

    Returns (Fd, Fc, SA, SB):
      Fd (M, K)    value of int T1 ds        (w_d columns, and f by linearity)
      Fc (M, K)    value of int T2 ds        (w_c columns)
      SA (M, K, 4) endpoint derivatives of the w_d integrand (per unit w_d)
      SB (M, K, 4) endpoint derivatives of the w_c integrand (per unit w_c)
    """
    if eps <= 0.0:
        raise ValueError("eval_df_blocks: eps must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    M = points.shape[0]
    K = hs.count
    Fd = np.zeros((M, K), dtype=dtype)
    Fc = np.zeros((M, K), dtype=dtype)
    SA = np.zeros((M, K, 4), dtype=dtype)
    SB = np.zeros((M, K, 4), dtype=dtype)
    if K == 0:
        return Fd, Fc, SA, SB
    if nodes is None:
        nodes = handle_quadrature(hs, h_max)

    idx = nodes.index
    s = nodes.s
    p0 = hs.p0[idx]
    e = (hs.p1 - hs.p0)[idx]
    lengths = hs.lengths()
    # derivative of the arc factor is undefined for a collapsed handle;
    # use a zero subgradient there
    safe = np.maximum(lengths, 1e-14)
    ehat = (hs.p1 - hs.p0) / safe[:, None]
    ehat[lengths < 1e-14] = 0.0

    zx = (p0[:, 0] + s * e[:, 0]).astype(dtype)
    zy = (p0[:, 1] + s * e[:, 1]).astype(dtype)
    mx = (-e[:, 1]).astype(dtype)
    my = (e[:, 0]).astype(dtype)
    av = (1.0 - s).astype(dtype)
    bv = s.astype(dtype)
    ds = nodes.ds.astype(dtype)
    cds = (INV_2PI * nodes.ds).astype(dtype)
    lT = lengths[idx].astype(dtype)
    ex_ds = (ehat[idx, 0] * nodes.ds).astype(dtype)
    ey_ds = (ehat[idx, 1] * nodes.ds).astype(dtype)
    px = points[:, 0].astype(dtype)
    py = points[:, 1].astype(dtype)
    eps2 = dtype(eps) * dtype(eps)
    starts = nodes.starts
    T = zx.shape[0]

    def seg(arr):
        return np.add.reduceat(arr, starts, axis=1)

    for lo, hi in _chunks(M, T):
        dx = zx[None, :] - px[lo:hi, None]
        dy = zy[None, :] - py[lo:hi, None]
        rho2 = dx * dx
        rho2 += dy * dy
        rho2 += eps2
        inv = 1.0 / rho2
        md = mx * dx
        md += my * dy
        s1 = md * inv
        G = np.log(rho2)
        G *= -INV_4PI
        Q = cds * inv  # 1/(2 pi) * ds / rho^2

        Fd[lo:hi] = seg(s1 * cds)
        Fc[lo:hi] = seg(G * (ds * lT))

        two_s1 = 2.0 * s1
        # w_d integrand, endpoint derivatives
        SA[lo:hi, :, 0] = seg(Q * (av * mx - dy - two_s1 * (av * dx)))
        SA[lo:hi, :, 1] = seg(Q * (av * my + dx - two_s1 * (av * dy)))
        SA[lo:hi, :, 2] = seg(Q * (bv * mx + dy - two_s1 * (bv * dx)))
        SA[lo:hi, :, 3] = seg(Q * (bv * my - dx - two_s1 * (bv * dy)))
        # w_c integrand: d(G)/dp * len + G * d(len)/dp
        Ql = Q * lT
        SB[lo:hi, :, 0] = seg(-Ql * (av * dx) - G * ex_ds)
        SB[lo:hi, :, 1] = seg(-Ql * (av * dy) - G * ey_ds)
        SB[lo:hi, :, 2] = seg(-Ql * (bv * dx) + G * ex_ds)
        SB[lo:hi, :, 3] = seg(-Ql * (bv * dy) + G * ey_ds)
    return Fd, Fc, SA, SB


def assemble_df(blocks, hs, dtype=np.float64):
    """Full (M, 3, P) Jacobian of f from eval_df_blocks output."""
    Fd, Fc, SA, SB = blocks
    M, K = Fd.shape
    P = PARAMS_PER_HANDLE * K
    df = np.zeros((M, 3, P), dtype=dtype)
    if K == 0:
        return df
    w_d = hs.w_d.astype(dtype)
    w_c = hs.w_c.astype(dtype)
    view = df.reshape(M, 3, K, PARAMS_PER_HANDLE)
    for c in range(3):
        view[:, c, :, 0:4] = SA * w_d[None, :, c, None]
        view[:, c, :, 0:4] += SB * w_c[None, :, c, None]
        view[:, c, :, 4 + c] = Fd
        view[:, c, :, 7 + c] = Fc
    return df


def f_from_blocks(blocks, hs, dtype=np.float64):
    """f(x) recovered from the weight-column blocks (f is linear in weights)."""
    Fd, Fc, _, _ = blocks
    return Fd @ hs.w_d.astype(dtype) + Fc @ hs.w_c.astype(dtype)


def eval_df(points, hs, eps, h_max=DEFAULT_H_MAX, nodes=None, dtype=np.float64):
    """Exact derivative of the regularized jump term, (M, 3, P)."""
    blocks = eval_df_blocks(points, hs, eps, h_max, nodes=nodes, dtype=dtype)
    return assemble_df(blocks, hs, dtype=dtype)


def assemble_drhs(elements, hs, eps, h_max=DEFAULT_H_MAX, nodes=None, dtype=np.float64):
    """Galerkin right-hand sides of the Jacobian solve, stored (N, P, 3).

    Row i, column p integrates df/dtheta_p over element i with the same
    3-point rule as the forward right-hand side.
    """
    N = elements.count
    df_nodes = eval_df(elements.node.reshape(-1, 2), hs, eps, h_max, nodes=nodes, dtype=dtype)
    P = df_nodes.shape[2]
    weighted = df_nodes.reshape(N, 3, 3, P) * elements.node_weight[:, :, None, None]
    return weighted.sum(axis=1).transpose(0, 2, 1)


def rhs_from_drhs(drhs, hs):
    """Forward right-hand side extracted from the weight columns of drhs.

    The Galerkin right-hand side is linear in the jump weights, so it equals
    the contraction of the unit-weight columns with the current weights.
    """
    N, P, _ = drhs.shape
    K = hs.count
    view = drhs.reshape(N, K, PARAMS_PER_HANDLE, 3)
    rhs = np.zeros((N, 3))
    for c in range(3):
        rhs[:, c] = view[:, :, 4 + c, c] @ hs.w_d[:, c]
        rhs[:, c] += view[:, :, 7 + c, c] @ hs.w_c[:, c]
    return rhs


def solve_jacobian_boundary(system, drhs):
    """Boundary values of du/dtheta: one pseudo-solve per parameter column."""
    N, P, C = drhs.shape
    flat = system.solver.solve(drhs.reshape(N, P * C))
    return flat.reshape(N, P, C)


def eval_jacobian(points, system, du_bar, hs, eps, h_max=DEFAULT_H_MAX,
                  weights=None, df=None, dtype=np.float64):
    """Image-space Jacobian J(x) = -W @ du_bar + df(x), shape (M, 3, P).

    `weights` are the boundary integrals of eval_solution; compute them once
    per point batch and share them between the two evaluations.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if weights is None:
        weights = boundary_weights(points, system.elements, dtype=dtype)
    N, P, C = du_bar.shape
    if df is None:
        df = eval_df(points, hs, eps, h_max, dtype=dtype)
    J = weights @ du_bar.reshape(N, P * C).astype(dtype)
    J = -J.reshape(points.shape[0], P, C).transpose(0, 2, 1)
    J += df
    return J
