import unittest
import logging
import sys
import numpy as np
import scipy.linalg

from mpccert.mpc_condense import MpcOcpSpec, condense, double_integrator_ocp, instantiate
from mpccert.mpc_condense import lqr_gain, mpc_step, ocp_from_config, prediction_matrices, problem_checksum, riccati_map
from mpccert.mpc_condense import riccati_terminal
from mpccert.mpc_config import MpcConfig
from mpccert.mpc_errors import DimensionMismatch
from mpccert.mpc_qp_core import MpcSolverConfig, MpcSolveStatus
from mpccert.mpc_quad_sim import quadrotor_ocp

logger = logging.getLogger('mpc_test')

logging.basicConfig(
    format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
    level = logging.INFO,
    stream = sys.stdout)

class MpcCondenseTest(unittest.TestCase):

    def setUp(self):

        self.ocp = double_integrator_ocp(dt=0.1, N=2)
        self.pqp = condense(self.ocp)
        self.cfg = MpcSolverConfig()

    def tearDown(self):

        self.ocp = None
        self.pqp = None

    def test_condensed_dimensions(self):

        self.assertEqual(self.pqp.n, 2)
        self.assertEqual(self.pqp.m, 4)
        self.assertEqual(self.pqp.theta_dim, 2)
        self.assertEqual(self.pqp.input_dim, 1)

    def test_terminal_cost_is_riccati_fixed_point(self):

        P = self.ocp.P
        residual = riccati_map(P, self.ocp.F, self.ocp.G, self.ocp.Q, self.ocp.R) - P

        self.assertLess(np.max(np.abs(residual)), 1e-9)
        np.testing.assert_allclose(P, scipy.linalg.solve_discrete_are(self.ocp.F, self.ocp.G, self.ocp.Q, self.ocp.R), atol=1e-9)

    def test_scalar_riccati_solutions(self):

        ocp = MpcOcpSpec(F=[[0.0]], G=[[1.0]], Q=[[1.0]], R=[[1.0]], N=1)
        self.assertAlmostEqual(float(ocp.P[0, 0]), 1.0, places=12)

        ocp = MpcOcpSpec(F=[[1.0]], G=[[1.0]], Q=[[1.0]], R=[[1.0]], N=1)
        self.assertAlmostEqual(float(ocp.P[0, 0]), (1.0 + np.sqrt(5.0)) / 2.0, places=12)

        self.assertAlmostEqual(float(riccati_terminal([[1.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0]), 1.6180339887, places=9)

    def test_terminal_cost_matches_iterated_recursion(self):

        P = self.ocp.Q.copy()
        for _ in range(2000):
            P = riccati_map(P, self.ocp.F, self.ocp.G, self.ocp.Q, self.ocp.R)

        np.testing.assert_allclose(self.ocp.P, P, rtol=1e-9, atol=1e-9)

    def test_condensed_optimum_matches_sparse_kkt(self):

        rng = np.random.default_rng(11)
        n_z, n_u, N = 3, 2, 4

        for _ in range(100):

            F = 0.6 * rng.normal(size=(n_z, n_z))
            G = rng.normal(size=(n_z, n_u))
            Q = np.diag(rng.uniform(0.5, 2.0, size=n_z))
            R = np.diag(rng.uniform(0.5, 2.0, size=n_u))
            ocp = MpcOcpSpec(F=F, G=G, Q=Q, R=R, N=N)
            theta = rng.normal(size=n_z)

            # decision vector [u_0 .. u_{N-1}, z_1 .. z_N]
            n_w = N * (n_u + n_z)
            H = scipy.linalg.block_diag(*([R] * N + [Q] * (N - 1) + [ocp.P]))
            A_eq = np.zeros((N * n_z, n_w))
            b_eq = np.zeros(N * n_z)

            for k in range(N):
                rows = slice(k * n_z, (k + 1) * n_z)
                A_eq[rows, k * n_u:(k + 1) * n_u] = -G
                A_eq[rows, N * n_u + k * n_z:N * n_u + (k + 1) * n_z] = np.eye(n_z)
                if k == 0:
                    b_eq[rows] = F @ theta
                else:
                    A_eq[rows, N * n_u + (k - 1) * n_z:N * n_u + k * n_z] = -F

            kkt = np.block([[H, A_eq.T], [A_eq, np.zeros((N * n_z, N * n_z))]])
            sparse = np.linalg.solve(kkt, np.concatenate([np.zeros(n_w), b_eq]))[:N * n_u]

            qp = instantiate(condense(ocp), theta)
            dense = -np.linalg.solve(qp.H, qp.f)

            np.testing.assert_allclose(dense, sparse, rtol=1e-8, atol=1e-8)

    def test_quadrotor_dimensions(self):

        pqp = condense(quadrotor_ocp(MpcConfig()))

        self.assertEqual(pqp.n, 60)
        self.assertEqual(pqp.m, 120)
        self.assertEqual(pqp.theta_dim, 12)
        self.assertEqual(pqp.input_dim, 4)
        np.testing.assert_array_equal(pqp.H, pqp.H.T)

    def test_unconstrained_solution_is_lqr(self):

        theta = np.array([0.3, -0.2])
        qp = instantiate(self.pqp, theta)
        x = -np.linalg.solve(qp.H, qp.f)

        K = lqr_gain(self.ocp.F, self.ocp.G, self.ocp.R, self.ocp.P)

        np.testing.assert_allclose(x[:1], -K @ theta, atol=1e-9)

    def test_condensed_cost_matches_rollout(self):

        rng = np.random.default_rng(3)
        theta = rng.normal(size=2)
        u = rng.normal(size=2)

        S_z, S_u = prediction_matrices(self.ocp.F, self.ocp.G, self.ocp.N)
        z = S_z @ theta + S_u @ u

        cost = 0.5 * z[4:6] @ self.ocp.P @ z[4:6]
        for k in range(2):
            cost += 0.5 * (z[2 * k:2 * k + 2] @ self.ocp.Q @ z[2 * k:2 * k + 2] + u[k] * self.ocp.R[0, 0] * u[k])

        qp = instantiate(self.pqp, theta)
        constant = 0.5 * theta @ (S_z.T @ scipy.linalg.block_diag(self.ocp.Q, self.ocp.Q, self.ocp.P) @ S_z) @ theta

        self.assertAlmostEqual(0.5 * u @ qp.H @ u + qp.f @ u + constant, cost, places=9)

    def test_origin_needs_no_iterations(self):

        u, trace = mpc_step(self.pqp, np.zeros(2), self.cfg)

        self.assertEqual(trace.status, MpcSolveStatus.OPTIMAL)
        self.assertEqual(trace.iterations, 0)
        np.testing.assert_allclose(u, [0.0], atol=1e-12)

    def test_large_error_saturates_input(self):

        u, trace = mpc_step(self.pqp, np.array([5.0, 5.0]), self.cfg)

        self.assertEqual(trace.status, MpcSolveStatus.OPTIMAL)
        self.assertGreater(trace.iterations, 0)
        self.assertAlmostEqual(float(u[0]), -1.0, places=6)

    def test_restriction_matches_full_family(self):

        basis = np.array([[1.0], [0.5]])
        restricted = self.pqp.restrict(basis)
        s = np.array([0.7])

        full = self.pqp.instantiate(basis @ s)
        sliced = restricted.instantiate(s)

        np.testing.assert_allclose(sliced.f, full.f, atol=1e-12)
        np.testing.assert_allclose(sliced.b, full.b, atol=1e-12)
        self.assertEqual(restricted.theta_dim, 1)

    def test_problem_checksum_depends_on_theta(self):

        first = problem_checksum(self.pqp.source_checksum, np.array([0.1, 0.0]))
        second = problem_checksum(self.pqp.source_checksum, np.array([0.2, 0.0]))

        self.assertNotEqual(first, second)
        self.assertEqual(first, problem_checksum(self.pqp.source_checksum, np.array([0.1, 0.0])))

    def test_theta_dimension_is_checked(self):

        with self.assertRaises(DimensionMismatch):
            self.pqp.instantiate(np.zeros(3))

    def test_invalid_weights(self):

        with self.assertRaises(ValueError):
            MpcOcpSpec(F=np.eye(2), G=np.ones((2, 1)), Q=np.eye(2), R=[[0.0]], N=2)

        with self.assertRaises(DimensionMismatch):
            MpcOcpSpec(F=np.eye(2), G=np.ones((2, 1)), Q=np.eye(3), R=[[1.0]], N=2)

    def test_ocp_from_config(self):

        config = MpcConfig().update({'model': 'double_integrator', 'horizon': 3, 'theta_box': [5.0, 5.0]})
        ocp = ocp_from_config(config)

        self.assertEqual(ocp.N, 3)
        self.assertEqual(ocp.n_z, 2)
        np.testing.assert_allclose(ocp.input_bounds()[0], [-1.0])
        np.testing.assert_allclose(ocp.input_bounds()[1], [1.0])

        with self.assertRaises(ValueError):
            MpcConfig().update({'no_such_key': 1})

if __name__ == '__main__':
    unittest.main()
