"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The heavy recovery and soft-shadow optimizations are shared module-scoped
fixtures; everything is deterministic given the seeds fixed here.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from dcfit.bem_diff import (
    apply_params,
    assemble_drhs,
    eval_jacobian,
    pack_params,
    solve_jacobian_boundary,
)
from dcfit.bem_forward import (
    HandleSet,
    assemble_rhs,
    assemble_system,
    boundary_weights,
    build_system,
    eval_solution,
    handle_side_colors,
    solve_boundary,
)
from dcfit.formats import document_from_state, read_handle_file, read_scene_file, write_handle_file
from dcfit.geometry import SubdomainBoundary, discretize_boundary
from dcfit.optimizer import LMConfig, build_systems, optimize
from dcfit.target import build_oracle

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
RECOVERY_SCENE = Path(__file__).resolve().parent.parent / "demos" / "scenes" / "recovery.scene"
SHADOW_SCENE = Path(__file__).resolve().parent.parent / "demos" / "scenes" / "softshadow.scene"


def report(num, name, ok, detail):
    line = f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


def recovery_config(**kw):
    base = dict(samples_per_step=20_000, spp=32, max_steps=100, handle_count0=32,
                h_max=1.0 / 256.0, eval_dtype="float32",
                rmse_interval=5, rmse_resolution=256)
    base.update(kw)
    return LMConfig(**base)


@pytest.fixture(scope="module")
def recovery_run(tmp_path_factory):
    """Criterion 4's run: fit the noisy 5-handle ground truth for 100 steps."""
    scene = read_scene_file(RECOVERY_SCENE)
    cfg = recovery_config()
    systems = build_systems(scene, cfg.h_max)
    oracle = build_oracle(scene, h_max=cfg.h_max, systems=systems)
    t0 = time.perf_counter()
    state, metrics = optimize(cfg, scene, oracle, seed=11, systems=systems)
    wall = time.perf_counter() - t0
    out = tmp_path_factory.mktemp("recovery")
    write_handle_file(document_from_state(state, scene), out / "final.handles")
    return {"state": state, "metrics": metrics, "wall": wall,
            "handles_path": out / "final.handles", "scene": scene}


def test_criterion_1_gradient_correctness():
    rng = np.random.default_rng(101)
    system = build_system(SubdomainBoundary("bg", UNIT_SQUARE), h_max=1.0 / 32.0)
    eps = 0.01
    h_fd = 1e-5
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        # keep every handle length away from a quadrature piece-count
        # boundary so the finite-difference oracle stays smooth
        while True:
            hs = HandleSet("bg",
                           0.15 + 0.7 * rng.random((3, 2)),
                           0.15 + 0.7 * rng.random((3, 2)),
                           rng.uniform(-1, 1, (3, 3)),
                           rng.uniform(-1, 1, (3, 3)))
            frac = hs.lengths() * 32.0
            if np.all(np.abs(frac - np.round(frac)) > 1e-3):
                break
        pts = 0.15 + 0.7 * rng.random((2, 2))
        drhs = assemble_drhs(system.elements, hs, eps)
        du_bar = solve_jacobian_boundary(system, drhs)
        J = eval_jacobian(pts, system, du_bar, hs, eps)
        theta = pack_params(hs)
        for p in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[p] += h_fd
            tm[p] -= h_fd
            vals = []
            for t in (tp, tm):
                hs_t = apply_params(hs, t)
                rhs = assemble_rhs(system.elements, hs_t, eps)
                ub = solve_boundary(system, rhs)
                vals.append(eval_solution(pts, system, ub, hs_t, eps))
            fd = (vals[0] - vals[1]) / (2 * h_fd)
            rel = np.abs(J[:, :, p] - fd) / (np.abs(fd) + 1e-8)
            worst = max(worst, float(rel.max()))
    wall = time.perf_counter() - t0
    report(1, "gradient correctness", worst < 1e-4 and wall < 120.0,
           f"max rel err {worst:.2e}, {wall:.0f}s")


def test_criterion_2_forward_solver_sanity():
    t0 = time.perf_counter()
    boundary = SubdomainBoundary("bg", UNIT_SQUARE)
    elements = discretize_boundary(boundary, 1.0 / 256.0)
    A = assemble_system(elements)
    nullspace = float(np.max(np.abs(A @ np.ones(elements.count))))

    system = build_system(boundary, h_max=1.0 / 128.0)
    hs = HandleSet("bg", np.array([[0.3, 0.35]]), np.array([[0.7, 0.4]]),
                   np.zeros((1, 3)), np.zeros((1, 3)))
    rhs = assemble_rhs(system.elements, hs, 0.01)
    u_bar = solve_boundary(system, rhs)
    b = np.array([0.3, 0.6, 0.9])
    pts = np.array([[0.2, 0.8], [0.5, 0.1], [0.9, 0.5]])
    u = eval_solution(pts, system, u_bar, hs, 0.01, mean_color=b)
    zero_weight_exact = bool(np.all(u_bar == 0.0) and np.array_equal(u, np.tile(b, (3, 1))))

    eps = 0.01
    hs2 = HandleSet("bg", np.array([[0.35, 0.35]]), np.array([[0.65, 0.3]]),
                    np.array([[0.4, 0.2, -0.3]]), np.array([[0.5, -0.5, 0.2]]))
    rhs2 = assemble_rhs(system.elements, hs2, eps)
    ub2 = solve_boundary(system, rhs2)
    center = np.array([[0.5, 0.62]])  # 0.24 away from the handle, >= 5 eps
    ang = 2 * np.pi * (np.arange(256) + 0.5) / 256
    circle = center + 0.05 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    u_c = eval_solution(center, system, ub2, hs2, eps)[0]
    u_avg = eval_solution(circle, system, ub2, hs2, eps).mean(axis=0)
    mv_err = float(np.max(np.abs(u_c - u_avg) / (np.abs(u_avg) + 1e-12)))
    wall = time.perf_counter() - t0
    report(2, "forward solver sanity",
           zero_weight_exact and nullspace < 1e-4 and mv_err < 1e-3 and wall < 60.0,
           f"zero-weight exact {zero_weight_exact}, |A 1|_inf {nullspace:.2e}, "
           f"mean-value err {mv_err:.2e}, {wall:.0f}s")


def test_criterion_3_jump_semantics():
    eps = 0.01
    system = build_system(SubdomainBoundary("bg", UNIT_SQUARE), h_max=1.0 / 128.0)
    w_d = np.array([0.4, 0.0, 0.0])
    hs = HandleSet("bg", np.array([[0.15, 0.5]]), np.array([[0.85, 0.5]]),
                   w_d[None, :], np.zeros((1, 3)))
    rhs = assemble_rhs(system.elements, hs, eps)
    u_bar = solve_boundary(system, rhs)
    mid = np.array([0.5, 0.5])
    normal = np.array([0.0, 1.0])  # rot90(p1 - p0) normalized
    pts = np.stack([mid + 3 * eps * normal, mid - 3 * eps * normal])
    u = eval_solution(pts, system, u_bar, hs, eps, mean_color=np.full(3, 0.5))
    jump = float(abs(u[0, 0] - u[1, 0]))
    jump_ok = abs(jump - 0.4) <= 0.15 * 0.4
    c_plus, c_minus = handle_side_colors(0, system, u_bar, hs, eps)
    sides_ok = bool(np.array_equal(c_plus - c_minus, w_d))
    report(3, "jump semantics", jump_ok and sides_ok,
           f"jump {jump:.4f} vs 0.4, side diff exact {sides_ok}")


def test_criterion_4_recovery_experiment(recovery_run):
    metrics = recovery_run["metrics"]
    rmse5 = [m["rmse_linear"] for m in metrics if m["step"] == 5][0]
    rmse100 = [m["rmse_linear"] for m in metrics if m["step"] == 100][0]
    wall = recovery_run["wall"]
    report(4, "recovery experiment",
           rmse100 < 0.02 and rmse100 < rmse5 and wall < 900.0,
           f"rmse step5 {rmse5:.4f}, step100 {rmse100:.4f}, {wall:.0f}s")


def test_criterion_5_compatibility_invariant(recovery_run):
    worst = max(m["compat_residual"] for m in recovery_run["metrics"] if m["accepted"])
    report(5, "compatibility invariant", worst <= 1e-10, f"max residual {worst:.2e}")


def test_criterion_6_damping_behavior(recovery_run):
    metrics = recovery_run["metrics"]
    accepted = [m for m in metrics if m["accepted"]]
    rejected = [m for m in metrics if not m["accepted"]]
    strict = all(m["loss_after"] < m["loss_before"] for m in accepted)
    restored = all(m["theta_hash_after"] == m["theta_hash_before"] for m in rejected)
    report(6, "damping behavior", strict and restored and len(accepted) > 0,
           f"{len(accepted)} accepted strictly decreasing {strict}, "
           f"{len(rejected)} rejected bitwise-restored {restored}")


def test_criterion_7_sparsity_sweep():
    results = []
    for mult, lwd, lwc in (("0x", 1e-300, 0.0), ("1x", 1e-4, 1e-5), ("10x", 1e-3, 1e-4)):
        scene = read_scene_file(RECOVERY_SCENE)
        # the prune threshold is an experiment knob: at this reduced budget
        # weight norms stay well above the library default, so the sweep
        # uses a threshold matched to the observed norm scale
        cfg = recovery_config(samples_per_step=6000, spp=16, max_steps=30,
                              handle_count0=100, rmse_interval=30,
                              sparsity_enabled=True, lambda_w_d=lwd, lambda_w_c=lwc,
                              prune_threshold=0.05)
        systems = build_systems(scene, cfg.h_max)
        oracle = build_oracle(scene, h_max=cfg.h_max, systems=systems)
        state, metrics = optimize(cfg, scene, oracle, seed=42, systems=systems)
        rmse = [m["rmse_linear"] for m in metrics if m["rmse_linear"]][-1]
        results.append((mult, state.handle_count(), rmse))
    counts = [n for _, n, _ in results]
    rmses = [r for _, _, r in results]
    counts_ok = counts[0] >= counts[1] >= counts[2]
    rmse_ok = rmses[0] <= rmses[1] <= rmses[2]
    report(7, "sparsity sweep", counts_ok and rmse_ok,
           f"counts {counts}, rmse {[round(r, 4) for r in rmses]}")


def test_criterion_8_smoothing_ablation():
    finals = {}
    for eps in (1e-2, 1e-4):
        scene = read_scene_file(RECOVERY_SCENE)
        cfg = recovery_config(samples_per_step=8000, spp=16, max_steps=30,
                              rmse_interval=30, eps=eps)
        systems = build_systems(scene, cfg.h_max)
        oracle = build_oracle(scene, h_max=cfg.h_max, systems=systems)
        state, metrics = optimize(cfg, scene, oracle, seed=42, systems=systems)
        finals[eps] = [m["rmse_linear"] for m in metrics if m["rmse_linear"]][-1]
    report(8, "smoothing ablation", finals[1e-2] <= finals[1e-4],
           f"rmse eps=1e-2 {finals[1e-2]:.4f} <= eps=1e-4 {finals[1e-4]:.4f}")


def test_criterion_9_mc_noise_robustness():
    scene = read_scene_file(SHADOW_SCENE)
    cfg = recovery_config(rmse_interval=25)
    systems = build_systems(scene, cfg.h_max)
    oracle = build_oracle(scene, h_max=cfg.h_max, systems=systems)
    state, metrics = optimize(cfg, scene, oracle, seed=23, systems=systems)
    rmse100 = [m["rmse_linear"] for m in metrics if m["step"] == 100][0]
    report(9, "mc noise robustness", rmse100 < 0.04, f"rmse {rmse100:.4f} vs 0.04")


def test_criterion_10_determinism_and_io(recovery_run, tmp_path):
    import contextlib
    import io

    from dcfit.cli import main as cli_main

    args = ["fit", "--scene", str(RECOVERY_SCENE), "--seed", "3", "--profile", "test",
            "--steps", "3", "--set", "samples_per_step=400", "--set", "spp=2",
            "--set", "handle_count0=8", "--set", "h_max=0.03125"]
    outs = []
    for d in ("a", "b"):
        out = tmp_path / d
        assert cli_main(args + ["--out", str(out)]) == 0
        outs.append((out / "handles_final.handles").read_bytes())
    identical = outs[0] == outs[1]

    doc = read_handle_file(recovery_run["handles_path"])
    round_path = tmp_path / "round.handles"
    write_handle_file(doc, round_path)
    doc2 = read_handle_file(round_path)
    hs, hs2 = doc.handle_sets["bg"], doc2.handle_sets["bg"]
    round_trip_err = max(float(np.max(np.abs(getattr(hs, a) - getattr(hs2, a))))
                         for a in ("p0", "p1", "w_d", "w_c"))

    png = tmp_path / "own.png"
    handles = str(recovery_run["handles_path"])
    assert cli_main(["render", "--handles", handles, "--res", "64",
                     "--out", str(png), "--eps", "0.01"]) == 0
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        assert cli_main(["eval-rmse", "--handles", handles, "--ref", str(png),
                         "--res", "64", "--eps", "0.01"]) == 0
    own_rmse = float(buf.getvalue().strip())

    # the logged ground-truth RMSE must match an independent re-evaluation
    # through the CLI to 1e-6 (tone-mapped space, float path)
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        assert cli_main(["eval-rmse", "--handles", handles, "--ref", str(RECOVERY_SCENE),
                         "--res", "256", "--eps", "0.01", "--space", "srgb"]) == 0
    cli_rmse = float(buf.getvalue().strip())
    logged = [m["rmse_srgb"] for m in recovery_run["metrics"] if m["step"] == 100][0]
    cross_ok = abs(cli_rmse - logged) < 1e-6

    report(10, "determinism and io",
           identical and round_trip_err <= 1e-9 and own_rmse == 0.0 and cross_ok,
           f"byte-identical {identical}, round-trip err {round_trip_err:.1e}, "
           f"own-render rmse {own_rmse}, cli vs log |d|={abs(cli_rmse - logged):.2e}")
