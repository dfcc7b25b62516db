import numpy as np
import pytest

import dcfit.bem_forward as bf
from dcfit.bem_forward import (
    HandleSet,
    PseudoSolver,
    assemble_rhs,
    assemble_system,
    boundary_weights,
    build_system,
    eval_f,
    eval_solution,
    factorize,
    handle_quadrature,
    handle_side_colors,
    solve_boundary,
)
from dcfit.geometry import SubdomainBoundary, discretize_boundary

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture(scope="module")
def square_system():
    return build_system(SubdomainBoundary("bg", UNIT_SQUARE), h_max=1.0 / 64.0)


def one_handle(p0, p1, w_d, w_c):
    return HandleSet("bg", np.array([p0]), np.array([p1]),
                     np.array([w_d], dtype=float), np.array([w_c], dtype=float))


class TestAssembleSystem:
    def test_diagonal_is_half_length(self):
        els = discretize_boundary(SubdomainBoundary("bg", UNIT_SQUARE), 1.0 / 256.0)
        A = assemble_system(els)
        assert np.allclose(np.diag(A), 1.0 / 512.0, rtol=1e-14)

    def test_constants_in_nullspace(self):
        els = discretize_boundary(SubdomainBoundary("bg", UNIT_SQUARE), 1.0 / 256.0)
        A = assemble_system(els)
        assert np.max(np.abs(A @ np.ones(els.count))) < 1e-4

    def test_constants_in_nullspace_pentagon(self):
        poly = SubdomainBoundary("p", np.array(
            [[0.5 + 0.45 * np.cos(a), 0.5 + 0.45 * np.sin(a)]
             for a in np.linspace(0, 2 * np.pi, 6)[:-1] + 0.3]))
        els = discretize_boundary(poly, 1.0 / 128.0)
        A = assemble_system(els)
        assert np.max(np.abs(A @ np.ones(els.count))) < 1e-4

    def test_collinear_elements_give_zero(self):
        els = discretize_boundary(SubdomainBoundary("bg", UNIT_SQUARE), 0.25)
        A = assemble_system(els)
        # first four elements lie on the bottom edge
        assert abs(A[0, 2]) <= 1e-12
        assert abs(A[1, 3]) <= 1e-12

    def test_open_loop_rejected(self):
        els = discretize_boundary(SubdomainBoundary("bg", UNIT_SQUARE), 0.5)
        bad = els
        bad.a = els.a + 0.01
        with pytest.raises(ValueError, match="closed"):
            assemble_system(bad)


class TestFactorize:
    def test_identity_discards_one_direction(self):
        solver = factorize(np.eye(3))
        v = solver.null_direction
        x = solver.solve(v.copy())
        assert abs(x @ v) < 1e-12

    def test_zero_rhs(self):
        solver = factorize(np.eye(4))
        assert np.allclose(solver.solve(np.zeros(4)), 0.0)

    def test_rank_deficient_recovery(self):
        rng = np.random.default_rng(5)
        # construct a 50x50 matrix with exactly one zero singular value
        q1, _ = np.linalg.qr(rng.standard_normal((50, 50)))
        q2, _ = np.linalg.qr(rng.standard_normal((50, 50)))
        s = np.sort(rng.uniform(0.5, 2.0, 50))[::-1]
        s[-1] = 0.0
        A = (q1 * s) @ q2
        solver = factorize(A)
        v = rng.standard_normal(50)
        x = solver.solve(A @ v)
        v_perp = v - (v @ solver.null_direction) * solver.null_direction
        assert np.max(np.abs(x - v_perp)) < 1e-8

    def test_double_rank_deficiency_rejected(self):
        rng = np.random.default_rng(6)
        q1, _ = np.linalg.qr(rng.standard_normal((20, 20)))
        s = np.linspace(2.0, 1.0, 20)
        s[-2:] = 1e-14
        A = (q1 * s) @ q1.T
        with pytest.raises(np.linalg.LinAlgError, match="rank"):
            factorize(A)

    def test_factorization_counter_increments(self):
        before = bf.FACTORIZATION_COUNT
        factorize(np.eye(3))
        assert bf.FACTORIZATION_COUNT == before + 1

    def test_multicolumn_equals_per_column(self):
        rng = np.random.default_rng(8)
        A = rng.standard_normal((30, 30))
        A[:, -1] = A[:, 0]  # make it singular-ish in one direction
        solver = PseudoSolver(A, rank_tol=0.0)
        rhs = rng.standard_normal((30, 30))
        stacked = solver.solve(rhs)
        for k in range(30):
            # columns are independent; BLAS accumulation order may differ
            # between the stacked and single solves by a few ulps
            assert np.allclose(stacked[:, k], solver.solve(rhs[:, k].copy()),
                               rtol=0, atol=1e-12)


class TestEvalF:
    def test_no_handles(self):
        hs = HandleSet.empty("bg")
        assert np.array_equal(eval_f(np.array([[0.5, 0.5]]), hs, 0.01), np.zeros((1, 3)))

    def test_zero_weights(self):
        hs = one_handle([0.3, 0.4], [0.6, 0.4], [0, 0, 0], [0, 0, 0])
        assert np.array_equal(eval_f(np.array([[0.5, 0.5]]), hs, 0.01), np.zeros((1, 3)))

    def test_against_midpoint_quadrature_oracle(self):
        # frozen: 1e5-point midpoint rule for int G dz over the segment
        # (0.4,0.5)-(0.6,0.5) seen from (0.5,0.7) at eps = 0.01
        oracle = 0.04995597202305968
        hs = one_handle([0.4, 0.5], [0.6, 0.5], [0, 0, 0], [1, 1, 1])
        val = eval_f(np.array([[0.5, 0.7]]), hs, 0.01)[0, 0]
        assert val == pytest.approx(oracle, rel=1e-8)

    def test_linearity_in_weights(self):
        rng = np.random.default_rng(2)
        pts = rng.random((5, 2))
        hs1 = one_handle([0.2, 0.3], [0.7, 0.6], [0.3, -0.2, 0.1], [0.5, 0.0, -0.4])
        hs2 = hs1.copy()
        hs2.w_d *= 2.0
        hs2.w_c *= 2.0
        assert np.allclose(eval_f(pts, hs2, 0.01), 2.0 * eval_f(pts, hs1, 0.01), rtol=1e-12)


class TestAssembleRhs:
    def test_no_handles_zero(self, square_system):
        rhs = assemble_rhs(square_system.elements, HandleSet.empty("bg"), 0.01)
        assert np.array_equal(rhs, np.zeros((square_system.elements.count, 3)))

    def test_linear_in_weights(self, square_system):
        hs = one_handle([0.3, 0.3], [0.7, 0.7], [0.2, 0.1, 0.0], [0.1, -0.1, 0.3])
        hs2 = hs.copy()
        hs2.w_d *= 2
        hs2.w_c *= 2
        r1 = assemble_rhs(square_system.elements, hs, 0.01)
        r2 = assemble_rhs(square_system.elements, hs2, 0.01)
        assert np.allclose(r2, 2 * r1, rtol=1e-12)

    def test_row_against_refined_quadrature(self, square_system):
        # handle 0.1 away from the bottom edge; oracle refines the element
        # integral into 100 sub-segments of 3-point Gauss each
        from dcfit.geometry import GAUSS3_POS, GAUSS3_WEIGHT

        hs = one_handle([0.3, 0.1], [0.7, 0.12], [0.4, 0.0, 0.0], [0.3, 0.0, 0.0])
        rhs = assemble_rhs(square_system.elements, hs, 0.01)
        els = square_system.elements
        i = 20  # an element on the bottom edge
        t = (np.arange(100)[:, None] + GAUSS3_POS[None, :]).ravel() / 100
        w = np.tile(GAUSS3_WEIGHT / 100, 100) * els.length[i]
        xs = els.a[i] + t[:, None] * (els.b[i] - els.a[i])
        oracle = w @ eval_f(xs, hs, 0.01)
        assert np.max(np.abs(rhs[i] - oracle)) / np.max(np.abs(oracle)) < 1e-6


class TestSolveBoundary:
    def test_zero_rhs(self, square_system):
        u = solve_boundary(square_system, np.zeros((square_system.elements.count, 3)))
        assert np.array_equal(u, np.zeros_like(u))

    def test_compatible_rhs_roundtrip(self, square_system):
        rng = np.random.default_rng(9)
        N = square_system.elements.count
        v = rng.standard_normal(N)
        rhs = square_system.A @ v
        u = solve_boundary(square_system, rhs)
        assert np.max(np.abs(square_system.A @ u - rhs)) < 1e-8
        vn = square_system.solver.null_direction
        assert np.max(np.abs(u - (v - (v @ vn) * vn))) < 1e-6

    def test_thirty_columns_match_single_solves(self, square_system):
        rng = np.random.default_rng(10)
        N = square_system.elements.count
        rhs = rng.standard_normal((N, 30))
        stacked = solve_boundary(square_system, rhs)
        for k in range(30):
            single = solve_boundary(square_system, rhs[:, k].copy())
            assert np.allclose(stacked[:, k], single, rtol=0, atol=1e-12)

    def test_dimension_mismatch(self, square_system):
        with pytest.raises(ValueError):
            solve_boundary(square_system, np.zeros(3))


class TestEvalSolution:
    def test_constant_solution(self, square_system):
        hs = HandleSet.empty("bg")
        u_bar = np.zeros((square_system.elements.count, 3))
        pts = np.array([[0.2, 0.2], [0.5, 0.9], [0.8, 0.4]])
        u = eval_solution(pts, square_system, u_bar, hs, 0.01,
                          mean_color=np.array([0.5, 0.5, 0.5]))
        assert np.allclose(u, 0.5, atol=1e-14)

    def test_zero_weights_give_exact_constant(self, square_system):
        hs = one_handle([0.3, 0.3], [0.6, 0.6], [0, 0, 0], [0, 0, 0])
        rhs = assemble_rhs(square_system.elements, hs, 0.01)
        u_bar = solve_boundary(square_system, rhs)
        assert np.array_equal(u_bar, np.zeros_like(u_bar))

    def test_mean_value_property(self, square_system):
        # circle average by 256-point quadrature, circle well inside the
        # domain and far from the handle relative to eps
        eps = 0.01
        hs = one_handle([0.35, 0.35], [0.65, 0.3], [0.4, 0.2, -0.3], [0.5, -0.5, 0.2])
        rhs = assemble_rhs(square_system.elements, hs, eps)
        u_bar = solve_boundary(square_system, rhs)
        center = np.array([[0.5, 0.62]])
        radius = 0.05
        ang = 2 * np.pi * (np.arange(256) + 0.5) / 256
        circle = center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        u_c = eval_solution(center, square_system, u_bar, hs, eps)[0]
        u_avg = eval_solution(circle, square_system, u_bar, hs, eps).mean(axis=0)
        assert np.max(np.abs(u_c - u_avg) / (np.abs(u_avg) + 1e-12)) < 1e-3

    def test_mirror_antisymmetry_across_horizontal_handle(self, square_system):
        eps = 0.01
        hs = one_handle([0.35, 0.5], [0.65, 0.5], [1.0, 0.0, 0.0], [0, 0, 0])
        rhs = assemble_rhs(square_system.elements, hs, eps)
        u_bar = solve_boundary(square_system, rhs)
        b = np.array([0.25, 0.5, 0.75])
        square_system.mean_color = b.copy()
        above = np.array([[0.5, 0.5 + d] for d in (0.02, 0.07, 0.2, 0.4)])
        below = above.copy()
        below[:, 1] = 1.0 - below[:, 1]
        ua = eval_solution(above, square_system, u_bar, hs, eps) - b
        ub = eval_solution(below, square_system, u_bar, hs, eps) - b
        square_system.mean_color = np.zeros(3)
        assert np.max(np.abs(ua + ub)) < 1e-6

    def test_superposition_in_weights_and_constant(self, square_system):
        eps = 0.01
        rng = np.random.default_rng(11)
        pts = 0.2 + 0.6 * rng.random((6, 2))
        hs_a = one_handle([0.3, 0.4], [0.7, 0.45], [0.3, 0, 0], [0.2, 0, 0])
        hs_b = hs_a.copy()
        hs_b.w_d = np.array([[0.0, 0.5, 0.0]])
        hs_b.w_c = np.array([[0.0, -0.1, 0.0]])
        hs_sum = hs_a.copy()
        hs_sum.w_d = hs_a.w_d + hs_b.w_d
        hs_sum.w_c = hs_a.w_c + hs_b.w_c

        def solve_eval(hs, b):
            rhs = assemble_rhs(square_system.elements, hs, eps)
            ub = solve_boundary(square_system, rhs)
            return eval_solution(pts, square_system, ub, hs, eps, mean_color=b)

        ua = solve_eval(hs_a, np.array([0.1, 0.0, 0.2]))
        ub = solve_eval(hs_b, np.array([0.3, 0.1, 0.0]))
        u_sum = solve_eval(hs_sum, np.array([0.4, 0.1, 0.2]))
        assert np.max(np.abs(ua + ub - u_sum)) < 1e-12

    def test_factorization_reused_across_solves(self, square_system):
        before = bf.FACTORIZATION_COUNT
        rng = np.random.default_rng(12)
        for _ in range(5):
            hs = one_handle(rng.random(2) * 0.5 + 0.2, rng.random(2) * 0.5 + 0.25,
                            rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
            rhs = assemble_rhs(square_system.elements, hs, 0.01)
            solve_boundary(square_system, rhs)
        assert bf.FACTORIZATION_COUNT == before

    def test_refactorization_reproduces_solutions_bitwise(self, square_system):
        solver2 = factorize(square_system.A)
        rng = np.random.default_rng(14)
        rhs = rng.standard_normal((square_system.elements.count, 3))
        assert np.array_equal(square_system.solver.solve(rhs), solver2.solve(rhs))

    def test_shared_weights_match_direct_evaluation(self, square_system):
        eps = 0.01
        hs = one_handle([0.3, 0.4], [0.7, 0.45], [0.3, 0.1, 0], [0.2, -0.2, 0])
        rhs = assemble_rhs(square_system.elements, hs, eps)
        u_bar = solve_boundary(square_system, rhs)
        pts = np.array([[0.4, 0.6], [0.6, 0.2]])
        W = boundary_weights(pts, square_system.elements)
        direct = eval_solution(pts, square_system, u_bar, hs, eps)
        shared = eval_solution(pts, square_system, u_bar, hs, eps, weights=W)
        assert np.array_equal(direct, shared)


class TestHandleSideColors:
    def test_splits_average_color(self, square_system):
        eps = 0.01
        hs = one_handle([0.4, 0.5], [0.6, 0.5], [0.2, 0.0, 0.0], [0, 0, 0])
        rhs = assemble_rhs(square_system.elements, hs, eps)
        u_bar = solve_boundary(square_system, rhs)
        square_system.mean_color = np.array([0.5, 0.5, 0.5])
        c_plus, c_minus = handle_side_colors(0, square_system, u_bar, hs, eps)
        square_system.mean_color = np.zeros(3)
        assert np.allclose(c_plus - c_minus, [0.2, 0.0, 0.0], atol=1e-14)
        mid = eval_solution(np.array([[0.5, 0.5]]), square_system, u_bar, hs, eps,
                            mean_color=np.array([0.5, 0.5, 0.5]))[0]
        assert np.allclose(0.5 * (c_plus + c_minus), mid, atol=1e-12)

    def test_zero_jump_sides_equal(self, square_system):
        hs = one_handle([0.4, 0.5], [0.6, 0.5], [0, 0, 0], [0.5, 0.2, -0.1])
        rhs = assemble_rhs(square_system.elements, hs, 0.01)
        u_bar = solve_boundary(square_system, rhs)
        c_plus, c_minus = handle_side_colors(0, square_system, u_bar, hs, 0.01)
        assert np.array_equal(c_plus, c_minus)

    def test_difference_equals_w_d_random(self, square_system):
        rng = np.random.default_rng(13)
        for _ in range(5):
            hs = one_handle(0.2 + 0.5 * rng.random(2), 0.25 + 0.5 * rng.random(2),
                            rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
            rhs = assemble_rhs(square_system.elements, hs, 0.01)
            u_bar = solve_boundary(square_system, rhs)
            c_plus, c_minus = handle_side_colors(0, square_system, u_bar, hs, 0.01)
            assert np.allclose(c_plus - c_minus, hs.w_d[0], atol=1e-14)


class TestHandleQuadrature:
    def test_piece_count_minimum_one(self):
        hs = one_handle([0.5, 0.5], [0.5005, 0.5], [1, 0, 0], [0, 0, 0])
        nodes = handle_quadrature(hs, 1.0 / 256.0)
        assert nodes.s.size == 3

    def test_weights_sum_to_one_per_handle(self):
        hs = HandleSet("bg", np.array([[0.1, 0.1], [0.3, 0.3]]),
                       np.array([[0.4, 0.1], [0.32, 0.9]]),
                       np.zeros((2, 3)), np.zeros((2, 3)))
        nodes = handle_quadrature(hs, 1.0 / 256.0)
        sums = np.add.reduceat(nodes.ds, nodes.starts)
        assert np.allclose(sums, 1.0, rtol=1e-13)
