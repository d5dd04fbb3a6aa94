import numpy as np
from django.test import SimpleTestCase

from cc_terminal.exceptions import StructuralError
from cc_terminal.qpcore import QpStatus, QuadraticProgram, check_kkt, solve_lp, solve_qp


def shifted_square(lower=2.0):
    """min (z - 1)^2 subject to z >= lower."""
    return QuadraticProgram([[2.0]], [-2.0], A_in=[[-1.0]], b_in=[-lower], offset=1.0)


class QuadraticProgramTests(SimpleTestCase):

    def test_rejects_nonsymmetric_hessian(self):
        with self.assertRaises(StructuralError):
            QuadraticProgram([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])

    def test_rejects_indefinite_hessian(self):
        with self.assertRaises(StructuralError):
            QuadraticProgram(np.diag([1.0, -1.0]), [0.0, 0.0])

    def test_rejects_mismatched_rhs(self):
        with self.assertRaises(StructuralError):
            QuadraticProgram(np.eye(2), [0.0, 0.0], A_in=[[1.0, 0.0]], b_in=[1.0, 2.0])

    def test_residuals_are_scaled(self):
        problem = shifted_square()
        self.assertAlmostEqual(problem.primal_residual([1.0]), 1.0 / 3.0)
        self.assertEqual(problem.primal_residual([5.0]), 0.0)


class SolveQpTests(SimpleTestCase):

    def test_active_bound(self):
        result = solve_qp(shifted_square())
        self.assertIs(result.status, QpStatus.OPTIMAL)
        self.assertAlmostEqual(result.point[0], 2.0, places=6)
        self.assertAlmostEqual(result.objective, 1.0, places=6)
        self.assertAlmostEqual(result.dual_in[0], 2.0, places=5)

    def test_inactive_bound(self):
        result = solve_qp(shifted_square(lower=-5.0))
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.point[0], 1.0, places=6)
        self.assertAlmostEqual(result.objective, 0.0, places=6)

    def test_equality_constrained(self):
        problem = QuadraticProgram(2.0 * np.eye(2), [0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[2.0])
        result = solve_qp(problem)
        self.assertTrue(result.optimal)
        np.testing.assert_allclose(result.point, [1.0, 1.0], atol=1e-6)
        self.assertAlmostEqual(result.objective, 2.0, places=6)

    def test_infeasible(self):
        problem = QuadraticProgram([[2.0]], [0.0], A_in=[[1.0], [-1.0]], b_in=[-1.0, -1.0])
        result = solve_qp(problem)
        self.assertIs(result.status, QpStatus.INFEASIBLE)
        self.assertTrue(np.isnan(result.objective))

    def test_unconstrained_without_minimum(self):
        problem = QuadraticProgram(np.diag([2.0, 0.0]), [0.0, 1.0])
        self.assertIs(solve_qp(problem).status, QpStatus.UNBOUNDED)

    def test_unconstrained_with_minimum(self):
        problem = QuadraticProgram(np.diag([2.0, 4.0]), [-2.0, 4.0])
        result = solve_qp(problem)
        self.assertTrue(result.optimal)
        np.testing.assert_allclose(result.point, [1.0, -1.0])

    def test_zero_hessian_goes_to_lp(self):
        problem = QuadraticProgram(np.zeros((1, 1)), [1.0], A_in=[[-1.0]], b_in=[-3.0])
        result = solve_qp(problem)
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.objective, 3.0, places=7)

    def test_rejects_non_positive_tolerance(self):
        with self.assertRaises(StructuralError):
            solve_qp(shifted_square(), tol=0.0)


class SolveLpTests(SimpleTestCase):

    def test_bounded(self):
        result = solve_lp([1.0, 1.0], [[-1.0, 0.0], [0.0, -1.0]], [-1.0, -2.0])
        self.assertTrue(result.optimal)
        self.assertAlmostEqual(result.objective, 3.0, places=7)
        np.testing.assert_allclose(result.dual_in, [1.0, 1.0], atol=1e-7)

    def test_interval(self):
        result = solve_lp([1.0], [[1.0], [-1.0]], [3.0, -1.0])
        self.assertAlmostEqual(result.point[0], 1.0, places=7)

    def test_unbounded(self):
        self.assertIs(solve_lp([-1.0], [[-1.0]], [0.0]).status, QpStatus.UNBOUNDED)

    def test_infeasible(self):
        result = solve_lp([0.0], [[1.0], [-1.0]], [-1.0, -1.0])
        self.assertIs(result.status, QpStatus.INFEASIBLE)

    def test_offset_is_added(self):
        result = solve_lp([1.0], [[-1.0]], [0.0], offset=2.5)
        self.assertAlmostEqual(result.objective, 2.5, places=7)


class CheckKktTests(SimpleTestCase):

    def test_optimal_point_passes(self):
        report = check_kkt(shifted_square(), [2.0])
        self.assertTrue(report.ok)
        self.assertAlmostEqual(report.multipliers_in[0], 2.0, places=7)

    def test_interior_non_stationary_point_fails(self):
        report = check_kkt(shifted_square(), [3.0])
        self.assertFalse(report.ok)
        self.assertGreater(report.stationarity, 0.5)

    def test_infeasible_point_fails(self):
        report = check_kkt(shifted_square(), [1.0])
        self.assertFalse(report.ok)
        self.assertGreater(report.feasibility, 0.0)

    def test_solver_answer_passes(self):
        problem = QuadraticProgram(2.0 * np.eye(2), [0.0, 0.0], A_in=[[-1.0, -1.0]], b_in=[-2.0],
                                   A_eq=[[1.0, -1.0]], b_eq=[0.0])
        result = solve_qp(problem)
        self.assertTrue(result.optimal)
        self.assertTrue(check_kkt(problem, result.point, tol=1e-6).ok)

    def test_wrong_length(self):
        with self.assertRaises(StructuralError):
            check_kkt(shifted_square(), [1.0, 2.0])


class GridComparisonTests(SimpleTestCase):

    def test_box_constrained_qp_beats_grid(self):
        rng = np.random.default_rng(7)
        root = rng.normal(size=(3, 3))
        H = root @ root.T + 0.1 * np.eye(3)
        g = rng.normal(size=3) * 3.0
        problem = QuadraticProgram(H, g, A_in=np.vstack([np.eye(3), -np.eye(3)]), b_in=np.ones(6))
        result = solve_qp(problem)
        self.assertTrue(result.optimal)
        self.assertTrue(np.all(np.abs(result.point) <= 1.0 + 1e-7))

        axis = np.linspace(-1.0, 1.0, 101)
        grid = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        values = 0.5 * np.einsum("ki,ij,kj->k", grid, H, grid) + grid @ g
        best = grid[np.argmin(values)]
        self.assertLessEqual(result.objective, values.min() + 1e-9)
        # strong convexity turns the objective gap at the grid point into a distance bound
        smallest = np.linalg.eigvalsh(H)[0]
        gap = max(problem.objective(best) - result.objective, 0.0)
        self.assertLessEqual(np.linalg.norm(best - result.point), np.sqrt(2.0 * gap / smallest) + 1e-6)

    def test_random_planar_qps(self):
        rng = np.random.default_rng(17)
        axis = np.linspace(-1.0, 1.0, 201)
        grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
        for case in range(100):
            root = rng.normal(size=(2, rng.integers(1, 3)))
            H = root @ root.T
            g = 2.0 * rng.normal(size=2)
            a, b = rng.normal(size=2), rng.uniform(0.2, 1.0)
            problem = QuadraticProgram(H, g, A_in=np.vstack([np.eye(2), -np.eye(2), a]),
                                       b_in=np.concatenate([np.ones(4), [b]]))
            result = solve_qp(problem)
            with self.subTest(case=case):
                self.assertTrue(result.optimal)
                self.assertTrue(check_kkt(problem, result.point, tol=1e-6).ok)
                feasible = grid[grid @ a <= b]
                values = 0.5 * np.einsum("ki,ij,kj->k", feasible, H, feasible) + feasible @ g
                self.assertLessEqual(result.objective, values.min() + 1e-7 * (1.0 + abs(values.min())))
