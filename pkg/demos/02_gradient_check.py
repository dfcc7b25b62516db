"""Differential solver sanity: analytic Jacobian against finite differences.

The parameter Jacobian of the reconstruction comes from the same factorized
boundary system as the forward solve, with one stacked right-hand side per
parameter. This script compares every column of the analytic Jacobian at a
few interior points against central finite differences of the full
pipeline (re-assemble, re-solve, re-evaluate).

Run from the repository root:  python demos/02_gradient_check.py
"""
import numpy as np

from dcfit import (
    HandleSet,
    SubdomainBoundary,
    assemble_drhs,
    assemble_rhs,
    build_system,
    eval_jacobian,
    eval_solution,
    solve_boundary,
    solve_jacobian_boundary,
)
from dcfit.bem_diff import apply_params, pack_params

rng = np.random.default_rng(2024)
frame = SubdomainBoundary("frame", np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float))
system = build_system(frame, h_max=1 / 128)
eps = 0.01

handles = HandleSet("frame",
                    0.2 + 0.6 * rng.random((3, 2)), 0.2 + 0.6 * rng.random((3, 2)),
                    rng.uniform(-1, 1, (3, 3)), rng.uniform(-1, 1, (3, 3)))
points = 0.2 + 0.6 * rng.random((4, 2))


def forward(hs):
    rhs = assemble_rhs(system.elements, hs, eps)
    return eval_solution(points, system, solve_boundary(system, rhs), hs, eps)


drhs = assemble_drhs(system.elements, handles, eps)
du_bar = solve_jacobian_boundary(system, drhs)
J = eval_jacobian(points, system, du_bar, handles, eps)

theta = pack_params(handles)
h = 1e-5
worst = 0.0
for p in range(theta.size):
    tp, tm = theta.copy(), theta.copy()
    tp[p] += h
    tm[p] -= h
    fd = (forward(apply_params(handles, tp)) - forward(apply_params(handles, tm))) / (2 * h)
    rel = np.abs(J[:, :, p] - fd) / (np.abs(fd) + 1e-8)
    worst = max(worst, rel.max())
    name = ["p0.x", "p0.y", "p1.x", "p1.y", "wd.r", "wd.g", "wd.b",
            "wc.r", "wc.g", "wc.b"][p % 10]
    if p % 10 == 0:
        print(f"handle {p // 10}:")
    print(f"  {name:5s} max rel err {rel.max():.2e}")
print(f"\nworst relative error over all {theta.size} parameters: {worst:.2e}")
