import unittest
import logging
import os
import sys
import tempfile
import numpy as np

from mpccert.mpc_errors import EnumerationTooLarge, NumericalFailure
from mpccert.mpc_qp_core import MpcDenseQP, MpcSolverConfig, MpcSolveStatus, MpcWorkingSet
from mpccert.mpc_qp_core import brute_force_solve, check_kkt, cost_model, dual_active_set_solve
from mpccert.mpc_qp_core import iteration_flops, load_qp, save_qp, setup_flops, solve_kkt, to_dual

logger = logging.getLogger('mpc_test')

logging.basicConfig(
    format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
    level = logging.INFO,
    stream = sys.stdout)

class TestConfig(object):

    SEED = 7
    PROBLEMS = 1000
    MAX_N = 6
    MAX_M = 12
    ORACLE_TOLERANCE = 1e-6
    STRICT_COMPLEMENTARITY = 1e-6

def random_qp(
    rng: np.random.Generator,
    n: int,
    m: int
) -> MpcDenseQP:
    '''
    Random strictly convex QP whose origin is strictly feasible.
    '''

    M = rng.normal(size=(n, n))

    return MpcDenseQP(
        H=M @ M.T + 0.5 * np.eye(n),
        f=rng.normal(size=n) * 3.0,
        A=rng.normal(size=(m, n)),
        b=rng.uniform(0.1, 1.0, size=m)
    )

class MpcQpCoreTest(unittest.TestCase):

    def setUp(self):

        self.config = TestConfig()
        self.rng = np.random.default_rng(self.config.SEED)
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):

        for name in os.listdir(self.tmp_dir):
            os.remove(os.path.join(self.tmp_dir, name))
        os.rmdir(self.tmp_dir)

    def test_solver_matches_enumeration_oracle(self):

        cfg = MpcSolverConfig()
        optimal = 0
        compared = 0

        for _ in range(self.config.PROBLEMS):

            n = int(self.rng.integers(1, self.config.MAX_N + 1))
            m = int(self.rng.integers(1, self.config.MAX_M + 1))
            qp = random_qp(self.rng, n, m)

            trace = dual_active_set_solve(qp, cfg)
            if not trace.is_optimal():
                continue

            optimal += 1
            x_oracle, lam_oracle, active = brute_force_solve(qp, tol=1e-9)
            np.testing.assert_allclose(trace.x_star, x_oracle, atol=self.config.ORACLE_TOLERANCE)

            inactive = [index for index in range(m) if index not in active]
            slack = qp.b - qp.A @ x_oracle
            strict = (np.min(lam_oracle[list(active)], initial=np.inf) > self.config.STRICT_COMPLEMENTARITY
                      and np.min(slack[inactive], initial=np.inf) > self.config.STRICT_COMPLEMENTARITY)

            if strict:
                compared += 1
                self.assertEqual(sorted(trace.active_set), sorted(active))

        logger.info(f'{optimal} of {self.config.PROBLEMS} problems optimal, {compared} active sets compared')
        self.assertGreaterEqual(optimal, 0.95 * self.config.PROBLEMS)
        self.assertGreater(compared, 0.5 * optimal)

    def test_dual_transform(self):

        dual = to_dual(MpcDenseQP(np.diag([4.0, 1.0]), [0.0, 0.0], [[1.0, 0.0]], [2.0]))

        np.testing.assert_allclose(dual.Mfac, [[0.5, 0.0]], atol=1e-15)
        np.testing.assert_allclose(dual.d, [2.0], atol=1e-15)

        dual = to_dual(MpcDenseQP(np.eye(2), [-1.0, -1.0], [[1.0, 1.0]], [0.0]))

        np.testing.assert_allclose(dual.d, [-2.0], atol=1e-15)

        for _ in range(20):

            qp = random_qp(self.rng, 5, 9)
            dual = to_dual(qp)
            expected = qp.A @ np.linalg.solve(qp.H, qp.A.T)

            self.assertLess(np.linalg.norm(dual.Mfac @ dual.Mfac.T - expected) / np.linalg.norm(expected), 1e-10)
            np.testing.assert_allclose(dual.d, qp.b + qp.A @ np.linalg.solve(qp.H, qp.f), rtol=1e-10, atol=1e-12)

        with self.assertRaises(NumericalFailure):
            to_dual(MpcDenseQP([[1.0, 2.0], [2.0, 1.0]], [0.0, 0.0], [[1.0, 0.0]], [1.0]))

    def test_kkt_check_rejects_violation(self):

        qp = MpcDenseQP(np.eye(2), [-2.0, 0.0], [[1.0, 0.0]], [1.0])
        trace = dual_active_set_solve(qp, MpcSolverConfig())

        self.assertEqual(trace.active_set, MpcWorkingSet([0]))
        np.testing.assert_allclose(trace.x_star, [1.0, 0.0], atol=1e-12)
        self.assertTrue(check_kkt(qp, trace.x_star, trace.lambda_star, 1e-4, 1e-4))

        # 10 eps_p along the normal of the active row
        shifted = trace.x_star + 10.0 * 1e-4 * qp.A[0]
        self.assertFalse(check_kkt(qp, shifted, trace.lambda_star, 1e-4, 1e-4))

        unconstrained = MpcDenseQP(np.eye(2), [-0.5, 0.0], [[1.0, 0.0]], [1.0])
        self.assertTrue(check_kkt(unconstrained, [0.5, 0.0], [0.0], 1e-4, 1e-4))

    def test_traces_are_deterministic(self):

        for _ in range(50):

            qp = random_qp(self.rng, 6, 12)

            first = dual_active_set_solve(qp, MpcSolverConfig())
            second = dual_active_set_solve(qp, MpcSolverConfig())

            self.assertEqual(first.status, second.status)
            self.assertEqual(first.ws_sequence, second.ws_sequence)
            self.assertEqual(first.flop_estimate, second.flop_estimate)
            np.testing.assert_array_equal(first.x_star, second.x_star)
            np.testing.assert_array_equal(first.lambda_star, second.lambda_star)

    def test_working_set_changes_by_one_index(self):

        changes = 0

        for _ in range(200):

            n = int(self.rng.integers(1, self.config.MAX_N + 1))
            m = int(self.rng.integers(1, self.config.MAX_M + 1))
            trace = dual_active_set_solve(random_qp(self.rng, n, m), MpcSolverConfig())

            for before, after in zip(trace.ws_sequence[:-1], trace.ws_sequence[1:]):
                self.assertEqual(len(set(before) ^ set(after)), 1, f'{before} -> {after}')
                changes += 1

        self.assertGreater(changes, 0)

    def test_optimal_results_satisfy_kkt(self):

        cfg = MpcSolverConfig()

        for _ in range(200):

            n = int(self.rng.integers(1, self.config.MAX_N + 1))
            m = int(self.rng.integers(1, self.config.MAX_M + 1))
            qp = random_qp(self.rng, n, m)

            trace = dual_active_set_solve(qp, cfg)
            if trace.is_optimal():
                self.assertTrue(check_kkt(qp, trace.x_star, trace.lambda_star, 1e-4, 1e-4))
                self.assertEqual(len(trace.ws_sequence), trace.iterations + 1)

    def test_unconstrained_problem(self):

        H = np.array([[2.0, 0.5], [0.5, 1.0]])
        f = np.array([1.0, -1.0])
        qp = MpcDenseQP(H, f, np.zeros((0, 2)), np.zeros(0))

        trace = dual_active_set_solve(qp, MpcSolverConfig())

        self.assertEqual(trace.status, MpcSolveStatus.OPTIMAL)
        self.assertEqual(trace.iterations, 0)
        np.testing.assert_allclose(trace.x_star, -np.linalg.solve(H, f), atol=1e-12)

    def test_single_bound_becomes_active(self):

        qp = MpcDenseQP([[1.0]], [-3.0], [[1.0]], [1.0])

        trace = dual_active_set_solve(qp, MpcSolverConfig())

        self.assertEqual(trace.status, MpcSolveStatus.OPTIMAL)
        self.assertEqual(trace.ws_sequence, [MpcWorkingSet(), MpcWorkingSet([0])])
        np.testing.assert_allclose(trace.x_star, [1.0], atol=1e-12)
        np.testing.assert_allclose(trace.lambda_star, [2.0], atol=1e-12)

    def test_cost_model_counts_iterations(self):

        qp = MpcDenseQP([[1.0]], [-3.0], [[1.0]], [1.0])
        trace = dual_active_set_solve(qp, MpcSolverConfig())

        self.assertEqual(setup_flops(1, 1), 5.0)
        self.assertEqual(iteration_flops(1, 1, 1), 8.0)
        self.assertEqual(cost_model(trace, 1, 1), 13.0)
        self.assertEqual(trace.flop_estimate, 13.0)

    def test_contradicting_bounds_are_infeasible(self):

        # x <= -1 and x >= 1
        qp = MpcDenseQP([[1.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])

        trace = dual_active_set_solve(qp, MpcSolverConfig())

        self.assertEqual(trace.status, MpcSolveStatus.INFEASIBLE)

    def test_iteration_cap(self):

        qp = MpcDenseQP(np.eye(2), [-3.0, -3.0], np.eye(2), [1.0, 1.0])

        trace = dual_active_set_solve(qp, MpcSolverConfig(max_iter=1))

        self.assertEqual(trace.status, MpcSolveStatus.ITERATION_CAP)
        self.assertEqual(trace.iterations, 1)

    def test_kkt_solve_of_working_set(self):

        qp = MpcDenseQP(np.eye(2), [-3.0, -3.0], np.eye(2), [1.0, 1.0])

        x, lam = solve_kkt(qp, [0, 1])

        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(lam, [2.0, 2.0], atol=1e-12)

    def test_working_set_rejects_duplicates(self):

        with self.assertRaises(ValueError):
            MpcWorkingSet([0, 1, 0])

        with self.assertRaises(ValueError):
            MpcWorkingSet([3], m=2)

    def test_invalid_problem_data(self):

        with self.assertRaises(ValueError):
            MpcDenseQP(np.eye(2), [1.0], np.eye(2), [1.0, 1.0])

        with self.assertRaises(ValueError):
            MpcDenseQP(np.eye(1), [np.nan], [[1.0]], [1.0])

        with self.assertRaises(ValueError):
            MpcSolverConfig(eps_primal=0.0)

    def test_enumeration_limit(self):

        qp = MpcDenseQP(np.eye(20), np.zeros(20), self.rng.normal(size=(60, 20)), np.ones(60))

        with self.assertRaises(EnumerationTooLarge):
            brute_force_solve(qp)

    def test_problem_file_reproduces_problem(self):

        qp = random_qp(self.rng, 4, 7)
        path = os.path.join(self.tmp_dir, 'qp.json')

        save_qp(qp, path)
        loaded = load_qp(path)

        self.assertEqual(loaded.checksum(), qp.checksum())

        cfg = MpcSolverConfig()
        self.assertEqual(dual_active_set_solve(loaded, cfg).ws_sequence, dual_active_set_solve(qp, cfg).ws_sequence)

if __name__ == '__main__':
    unittest.main()
