"""Fundamental solution of the 2D Laplace equation and its derivatives.

The free-space kernel and its normal derivative are

    G(x, y)          = -1/(2 pi) * log r,
    dG/dn_y(x, y)    = -1/(2 pi) * n . (y - x) / r^2,      r = |y - x|.

Both admit a regularized form obtained by replacing r^2 with r^2 + eps^2,
which removes the singularity at x = y and smooths the reconstructed field
near jump boundaries. The gradients exposed here differentiate the
regularized kernels with respect to the source point y and with respect to
an *unnormalized* normal-direction vector m; working with the unnormalized
perpendicular of a segment lets the arc-length Jacobian cancel against the
1/length normalization in parametric segment integrals.
"""
from __future__ import annotations

import numpy as np

INV_2PI = 1.0 / (2.0 * np.pi)
INV_4PI = 1.0 / (4.0 * np.pi)


def _diff(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    r2 = np.sum(d * d, axis=-1)
    return d, r2


def green(x, y, eps=0.0):
    """Regularized fundamental solution -1/(4 pi) * log(r^2 + eps^2)."""
    _, r2 = _diff(x, y)
    rho2 = r2 + eps * eps
    if eps == 0.0 and np.any(r2 == 0.0):
        raise ValueError("green: x == y with eps = 0")
    return -INV_4PI * np.log(rho2)


def green_dn(x, y, n, eps=0.0):
    """Normal derivative -1/(2 pi) * n . (y - x) / (r^2 + eps^2)."""
    d, r2 = _diff(x, y)
    n = np.asarray(n, dtype=float)
    rho2 = r2 + eps * eps
    if eps == 0.0 and np.any(r2 == 0.0):
        raise ValueError("green_dn: x == y with eps = 0")
    return -INV_2PI * np.sum(n * d, axis=-1) / rho2


def kernel_grads(x, y, m, eps):
    """Derivatives of the regularized kernels for the parametric jump term.

    For d = y - x, rho^2 = |d|^2 + eps^2 and the scaled double-layer kernel
    K(y, m) = -1/(2 pi) * m . d / rho^2 (m unnormalized), returns

        dG/dy  = -1/(2 pi) * d / rho^2,
        dK/dy  = -1/(2 pi) * (m / rho^2 - (m . d) * 2 d / rho^4),
        dK/dm  = -1/(2 pi) * d / rho^2.

    Requires eps > 0; the differential path is always regularized.
    """
    if eps <= 0.0:
        raise ValueError("kernel_grads: eps must be positive")
    d, r2 = _diff(x, y)
    m = np.asarray(m, dtype=float)
    rho2 = (r2 + eps * eps)[..., None]
    md = np.sum(m * d, axis=-1)[..., None]
    dG_dy = -INV_2PI * d / rho2
    dK_dy = -INV_2PI * (m / rho2 - 2.0 * md * d / (rho2 * rho2))
    dK_dm = -INV_2PI * d / rho2
    return dG_dy, dK_dy, dK_dm
