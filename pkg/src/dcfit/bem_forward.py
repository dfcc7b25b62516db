"""Forward boundary element solver for piecewise-harmonic image reconstruction.

Each subdomain carries a zero-Neumann outer boundary and a set of interior
line-segment handles with prescribed jumps: w_d jumps the color across the
handle, w_c jumps its normal derivative. Applying the boundary integral
equation on the discretized outer boundary with piecewise-constant unknowns
and Galerkin testing yields a dense system

    A u_bar = rhs(handles),    A[i][i] = length_i / 2,
    A[i][j] = int_{elem_i} int_{elem_j} dG/dn_y dy dx      (i != j),

whose one-dimensional nullspace (constants) is removed by discarding the
smallest singular value of an SVD. A depends only on the fixed outer
boundary, so the factorization is built once per subdomain and reused for
every handle configuration and for the multi-column Jacobian solves.

The handle source term is evaluated in parametric form. With
z(s) = (1 - s) p0 + s p1 and the unnormalized perpendicular
m = rot90(p1 - p0), the double-layer integrand contracts to

    dG/dn_z(x, z) * len ds = -1/(2 pi) * m . (z - x) / (r^2 + eps^2) ds,

so the jump term of one handle is

    f(x) = 1/(2 pi) * int_0^1 (m . (z - x)) / (r^2 + eps^2) ds * w_d
         + int_0^1 G(x, z(s)) * len ds * w_c,

with both kernels regularized by eps. Handles are subdivided into
ceil(len / h_max) pieces of 3-point Gauss each.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import DEFAULT_H_MAX, GAUSS3_POS, GAUSS3_WEIGHT, discretize_boundary

INV_2PI = 1.0 / (2.0 * np.pi)
INV_4PI = 1.0 / (4.0 * np.pi)

# incremented by factorize(); lets tests assert factorizations are reused
FACTORIZATION_COUNT = 0

# target number of scratch-array entries per evaluation chunk
_CHUNK_ENTRIES = 6_000_000


@dataclass
class Handle:
    """One diffusion-curve segment with constant color and derivative jumps."""

    p0: np.ndarray  # (2,)
    p1: np.ndarray  # (2,)
    w_d: np.ndarray  # (3,) color jump
    w_c: np.ndarray  # (3,) normal-derivative jump
    owner: str = ""

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        self.p1 = np.asarray(self.p1, dtype=float)
        self.w_d = np.asarray(self.w_d, dtype=float)
        self.w_c = np.asarray(self.w_c, dtype=float)

    @property
    def length(self):
        return float(np.hypot(*(self.p1 - self.p0)))


@dataclass
class HandleSet:
    """Handles of one subdomain, stored as arrays over handles."""

    owner: str
    p0: np.ndarray   # (K, 2)
    p1: np.ndarray   # (K, 2)
    w_d: np.ndarray  # (K, 3)
    w_c: np.ndarray  # (K, 3)

    @classmethod
    def empty(cls, owner=""):
        return cls(owner, np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)))

    @classmethod
    def from_handles(cls, handles, owner=None):
        if not handles:
            return cls.empty(owner or "")
        owner = owner if owner is not None else handles[0].owner
        return cls(owner,
                   np.array([h.p0 for h in handles], dtype=float),
                   np.array([h.p1 for h in handles], dtype=float),
                   np.array([h.w_d for h in handles], dtype=float),
                   np.array([h.w_c for h in handles], dtype=float))

    def to_handles(self):
        return [Handle(self.p0[k].copy(), self.p1[k].copy(),
                       self.w_d[k].copy(), self.w_c[k].copy(), self.owner)
                for k in range(self.count)]

    @property
    def count(self):
        return self.p0.shape[0]

    def lengths(self):
        seg = self.p1 - self.p0
        return np.hypot(seg[:, 0], seg[:, 1])

    def copy(self):
        return HandleSet(self.owner, self.p0.copy(), self.p1.copy(),
                         self.w_d.copy(), self.w_c.copy())

    def select(self, mask):
        return HandleSet(self.owner, self.p0[mask].copy(), self.p1[mask].copy(),
                         self.w_d[mask].copy(), self.w_c[mask].copy())


@dataclass
class HandleNodes:
    """Parametric quadrature nodes over a HandleSet, grouped by handle."""

    s: np.ndarray       # (T,) parameter in [0, 1]
    ds: np.ndarray      # (T,) parameter-space weight, sums to 1 per handle
    index: np.ndarray   # (T,) owning handle
    starts: np.ndarray  # (K,) first node of each handle (for reduceat)


def handle_quadrature(hs, h_max=DEFAULT_H_MAX):
    """Build per-handle composite 3-point Gauss nodes in parameter space.

    Each handle uses max(1, ceil(length / h_max)) equal pieces.
    """
    lengths = hs.lengths()
    n_pieces = np.maximum(1, np.ceil(lengths / h_max).astype(int))
    counts = 3 * n_pieces
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    total = int(np.sum(counts))
    s = np.empty(total)
    ds = np.empty(total)
    index = np.empty(total, dtype=int)
    pos = 0
    for k in range(hs.count):
        n = n_pieces[k]
        base = (np.arange(n)[:, None] + GAUSS3_POS[None, :]) / n
        s[pos:pos + 3 * n] = base.ravel()
        ds[pos:pos + 3 * n] = np.tile(GAUSS3_WEIGHT / n, n)
        index[pos:pos + 3 * n] = k
        pos += 3 * n
    return HandleNodes(s=s, ds=ds, index=index, starts=starts)


def _chunks(n, cols):
    rows = max(1, _CHUNK_ENTRIES // max(1, cols))
    for lo in range(0, n, rows):
        yield lo, min(n, lo + rows)


def _node_geometry(hs, nodes, dtype):
    idx = nodes.index
    p0 = hs.p0[idx]
    e = (hs.p1 - hs.p0)[idx]
    s = nodes.s
    zx = (p0[:, 0] + s * e[:, 0]).astype(dtype)
    zy = (p0[:, 1] + s * e[:, 1]).astype(dtype)
    mx = (-e[:, 1]).astype(dtype)
    my = (e[:, 0]).astype(dtype)
    return zx, zy, mx, my


def eval_f(points, hs, eps, h_max=DEFAULT_H_MAX, nodes=None, dtype=np.float64):
    """Jump source term f(x) of all handles at the given points, (M, 3).

    eps must be positive; every handle-kernel evaluation is regularized.
    """
    if eps <= 0.0:
        raise ValueError("eval_f: eps must be positive")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    M = points.shape[0]
    out = np.zeros((M, 3), dtype=dtype)
    if hs.count == 0:
        return out
    if nodes is None:
        nodes = handle_quadrature(hs, h_max)
    zx, zy, mx, my = _node_geometry(hs, nodes, dtype)
    ds = nodes.ds.astype(dtype)
    lens = hs.lengths()[nodes.index]
    # per-node weight rows: w_d part carries 1/(2 pi) ds, w_c part ds * len
    wd_nodes = (hs.w_d[nodes.index] * (INV_2PI * nodes.ds)[:, None]).astype(dtype)
    wc_nodes = (hs.w_c[nodes.index] * (nodes.ds * lens)[:, None]).astype(dtype)
    px = points[:, 0].astype(dtype)
    py = points[:, 1].astype(dtype)
    eps2 = dtype(eps) * dtype(eps)
    T = zx.shape[0]
    for lo, hi in _chunks(M, T):
        dx = zx[None, :] - px[lo:hi, None]
        dy = zy[None, :] - py[lo:hi, None]
        rho2 = dx * dx
        rho2 += dy * dy
        rho2 += eps2
        s1 = mx * dx
        s1 += my * dy
        s1 /= rho2
        np.log(rho2, out=rho2)
        rho2 *= -INV_4PI  # rho2 now holds G values
        out[lo:hi] = s1 @ wd_nodes
        out[lo:hi] += rho2 @ wc_nodes
    return out


def boundary_weights(points, elements, dtype=np.float64):
    """Per-element double-layer integrals W[m, j] = int_{elem_j} dG/dn_y dy.

    Evaluated with the unregularized kernel and the cached 3-point rule;
    points are assumed strictly interior, so no singularity occurs. The
    reconstruction and its parameter Jacobian both contract these same
    weights against boundary solutions: u = -W @ u_bar + f + b.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    M = points.shape[0]
    N = elements.count
    qx = np.ascontiguousarray(elements.node[:, :, 0].ravel().astype(dtype))
    qy = np.ascontiguousarray(elements.node[:, :, 1].ravel().astype(dtype))
    nx = np.repeat(elements.normal[:, 0], 3).astype(dtype)
    ny = np.repeat(elements.normal[:, 1], 3).astype(dtype)
    wt = (elements.node_weight.ravel() * -INV_2PI).astype(dtype)
    wnx = wt * nx
    wny = wt * ny
    px = points[:, 0].astype(dtype)
    py = points[:, 1].astype(dtype)
    out = np.empty((M, N), dtype=dtype)
    for lo, hi in _chunks(M, 3 * N):
        dx = qx[None, :] - px[lo:hi, None]
        dy = qy[None, :] - py[lo:hi, None]
        r2 = dx * dx
        r2 += dy * dy
        dx *= wnx
        dx += wny * dy
        dx /= r2
        out[lo:hi] = dx.reshape(hi - lo, N, 3).sum(axis=2)
    return out


def assemble_system(elements):
    """Dense Galerkin matrix of the outer boundary via 3x3 tensor Gauss.

    The coincident (i == j) integral is analytically zero for straight
    elements; the diagonal holds only the mass term length_i / 2.
    """
    N = elements.count
    if N < 3:
        raise ValueError("assemble_system: need a closed loop of >= 3 elements")
    gap = elements.a - np.roll(elements.b, 1, axis=0)
    if np.max(np.hypot(gap[:, 0], gap[:, 1])) > 1e-9:
        raise ValueError("assemble_system: elements do not form a closed loop")
    qx = elements.node[:, :, 0].ravel()
    qy = elements.node[:, :, 1].ravel()
    wt = elements.node_weight.ravel()
    nx = np.repeat(elements.normal[:, 0], 3)
    ny = np.repeat(elements.normal[:, 1], 3)
    wnx = -INV_2PI * wt * nx
    wny = -INV_2PI * wt * ny
    A = np.empty((N, N))
    for lo, hi in _chunks(3 * N, 3 * N):
        dx = qx[None, :] - qx[lo:hi, None]
        dy = qy[None, :] - qy[lo:hi, None]
        r2 = dx * dx
        r2 += dy * dy
        num = wnx * dx
        num += wny * dy
        with np.errstate(invalid="ignore", divide="ignore"):
            num /= r2
        np.nan_to_num(num, copy=False)  # coincident nodes only occur on the diagonal
        block = (num * wt[lo:hi, None]).reshape(-1, 3, N, 3).sum(axis=(1, 3))
        A[lo // 3:hi // 3] = block
    np.fill_diagonal(A, 0.5 * elements.length)
    return A


class PseudoSolver:
    """Minimum-norm SVD solver with the smallest singular triplet removed."""

    def __init__(self, A, rank_tol=1e-10):
        U, s, Vt = np.linalg.svd(np.asarray(A, dtype=float))
        if s.shape[0] >= 2 and s[-2] / s[0] < rank_tol:
            raise np.linalg.LinAlgError(
                "unexpected rank deficiency: more than one near-zero singular value")
        self.singular_values = s
        self.null_direction = Vt[-1].copy()
        inv = 1.0 / s[:-1]
        self.pinv = (Vt[:-1].T * inv) @ U[:, :-1].T

    def solve(self, rhs):
        """Minimum-norm solution per column; rhs is (N,) or (N, K)."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.pinv.shape[1]:
            raise ValueError("solve: right-hand side size mismatch")
        return self.pinv @ rhs


def factorize(A, rank_tol=1e-10):
    """SVD-factorize the Galerkin matrix once; reused for all later solves."""
    global FACTORIZATION_COUNT
    solver = PseudoSolver(A, rank_tol=rank_tol)
    FACTORIZATION_COUNT += 1
    return solver


@dataclass
class SubdomainSystem:
    """Discretized outer boundary of one subdomain with its reusable solver."""

    elements: object
    A: np.ndarray
    solver: PseudoSolver
    mean_color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def owner(self):
        return self.elements.owner


def build_system(boundary, h_max=DEFAULT_H_MAX):
    elements = discretize_boundary(boundary, h_max)
    A = assemble_system(elements)
    return SubdomainSystem(elements=elements, A=A, solver=factorize(A))


def assemble_rhs(elements, hs, eps, h_max=DEFAULT_H_MAX, nodes=None, dtype=np.float64):
    """Galerkin right-hand side: row i = int_{elem_i} f(x) dx, per channel."""
    N = elements.count
    f_nodes = eval_f(elements.node.reshape(-1, 2), hs, eps, h_max, nodes=nodes, dtype=dtype)
    weighted = f_nodes.reshape(N, 3, 3) * elements.node_weight[:, :, None]
    return weighted.sum(axis=1)


def solve_boundary(system, rhs):
    """Boundary solution(s) for the given right-hand side(s), via the SVD."""
    solver = system.solver if isinstance(system, SubdomainSystem) else system
    return solver.solve(rhs)


def eval_solution(points, system, u_bar, hs, eps, h_max=DEFAULT_H_MAX,
                  weights=None, mean_color=None, dtype=np.float64):
    """Reconstructed color u(x) = -W @ u_bar + f(x) + b at interior points.

    `weights` may pass precomputed boundary_weights for these points; the
    same matrix drives the Jacobian evaluation and should be shared.
    Evaluation exactly on the outer boundary is not supported.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if weights is None:
        weights = boundary_weights(points, system.elements, dtype=dtype)
    b = system.mean_color if mean_color is None else np.asarray(mean_color, dtype=float)
    u = -(weights @ u_bar.astype(dtype))
    u += eval_f(points, hs, eps, h_max, dtype=dtype)
    u += b.astype(dtype)
    return u


def handle_side_colors(handle_index, system, u_bar, hs, eps, h_max=DEFAULT_H_MAX):
    """Colors on the two sides of one handle at its midpoint.

    The reconstruction at a point on the handle gives the side-average
    color; the prescribed jump splits it as c_avg +/- w_d / 2. With the
    double-layer sign of the jump term, the "+" side is the one the handle
    normal rot90(p1 - p0) points away from.
    """
    mid = 0.5 * (hs.p0[handle_index] + hs.p1[handle_index])
    c_avg = eval_solution(mid[None, :], system, u_bar, hs, eps, h_max)[0]
    half = 0.5 * hs.w_d[handle_index]
    return c_avg + half, c_avg - half
