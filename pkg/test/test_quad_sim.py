import unittest
import logging
import sys
import numpy as np

from mpccert.mpc_condense import condense
from mpccert.mpc_config import MpcConfig
from mpccert.mpc_errors import NearSingularAttitude, SimDiverged
from mpccert.mpc_qp_core import MpcSolverConfig, setup_flops
from mpccert.mpc_quad_sim import HoverTrajectory, MpcDaqpController, QuadParams, QuadState, StepSequence
from mpccert.mpc_quad_sim import closed_loop, dynamics_step, linearize_hover, log_error_states, motor_map
from mpccert.mpc_quad_sim import quadrotor_ocp, quaternion_to_rodrigues, rodrigues_to_quaternion, trajectory_from_config

logger = logging.getLogger('mpc_test')

logging.basicConfig(
    format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
    level = logging.INFO,
    stream = sys.stdout)

class TestConfig(object):

    DT = 0.002
    EPSILON = 1e-6
    LINEARIZATION_TOLERANCE = 1e-5

def controller_for(
    r_preset: int
) -> MpcDaqpController:

    config = MpcConfig()
    config.R_PRESET = r_preset

    return MpcDaqpController(condense(quadrotor_ocp(config)), MpcSolverConfig(), name=f'daqp_r{r_preset}')

class MpcQuadSimTest(unittest.TestCase):

    def setUp(self):

        self.config = TestConfig()
        self.params = QuadParams()

    def tearDown(self):

        self.params = None

    def test_hover_command(self):

        self.assertAlmostEqual(float(self.params.u0[0]), 0.483, places=3)
        self.assertAlmostEqual(4.0 * self.params.kt * float(self.params.u0[0]), self.params.mass * self.params.gravity, places=12)

    def test_hover_is_an_equilibrium(self):

        state = QuadState.hover(1.0)

        for _ in range(1000):
            state = dynamics_step(state, self.params.u0, self.params, 0.001)

        np.testing.assert_allclose(state.to_vector(), QuadState.hover(1.0).to_vector(), atol=1e-9)

    def test_free_fall(self):

        state = QuadState.hover(0.0)

        for _ in range(500):
            state = dynamics_step(state, np.zeros(4), self.params, 0.001)

        self.assertAlmostEqual(float(state.p[2]), -0.5 * self.params.gravity * 0.5 ** 2, places=9)
        self.assertAlmostEqual(float(state.V[2]), -self.params.gravity * 0.5, places=9)

    def test_rodrigues_round_trip(self):

        r = np.array([0.1, -0.2, 0.05])
        q = rodrigues_to_quaternion(r)

        self.assertAlmostEqual(float(np.linalg.norm(q)), 1.0, places=12)
        np.testing.assert_allclose(quaternion_to_rodrigues(q), r, atol=1e-12)

        with self.assertRaises(NearSingularAttitude):
            quaternion_to_rodrigues(np.array([0.0, 1.0, 0.0, 0.0]))

    def test_linearization_matches_finite_differences(self):

        F, G = linearize_hover(self.params, self.config.DT)
        eps = self.config.EPSILON

        base = dynamics_step(QuadState.hover(0.0), self.params.u0, self.params, self.config.DT).to_reduced()

        for i in range(12):
            perturbed = QuadState.from_error(eps * np.eye(12)[i])
            step = dynamics_step(perturbed, self.params.u0, self.params, self.config.DT).to_reduced()
            np.testing.assert_allclose((step - base) / eps, F[:, i], atol=self.config.LINEARIZATION_TOLERANCE, err_msg=f'state column {i}')

        for j in range(4):
            u_m = self.params.u0 + eps * np.eye(4)[j]
            step = dynamics_step(QuadState.hover(0.0), u_m, self.params, self.config.DT).to_reduced()
            np.testing.assert_allclose((step - base) / eps, G[:, j], atol=self.config.LINEARIZATION_TOLERANCE, err_msg=f'input column {j}')

    def test_motor_map_clamps(self):

        u_m, clamped = motor_map(np.ones(4), self.params.u0)

        self.assertTrue(clamped)
        np.testing.assert_array_equal(u_m, np.ones(4))

        u_m, clamped = motor_map(np.zeros(4), self.params.u0)

        self.assertFalse(clamped)
        np.testing.assert_array_equal(u_m, self.params.u0)

    def test_invalid_step_size(self):

        with self.assertRaises(ValueError):
            dynamics_step(QuadState.hover(), self.params.u0, self.params, 0.1)

    def test_lighter_input_weight_tracks_step_faster(self):

        trajectory = StepSequence([[0.0, 0.0, 1.0]], hold=0.5)

        heavy = closed_loop(controller_for(900), trajectory, self.params).summary()
        light = closed_loop(controller_for(100), trajectory, self.params).summary()

        logger.info(f'rms_z heavy {heavy["rms_z"]:.4f}, light {light["rms_z"]:.4f}')
        self.assertEqual(heavy['samples'], 500)
        self.assertLess(light['rms_z'], heavy['rms_z'])
        self.assertGreater(light['max_iterations'], 0)

    def test_deadline_violations_hold_previous_command(self):

        trajectory = StepSequence([[0.0, 0.0, 1.0]], hold=0.5)
        # a solve that needs any iteration misses this deadline
        deadline = setup_flops(60, 120)

        heavy = closed_loop(controller_for(900), trajectory, self.params, deadline=deadline)
        light = closed_loop(controller_for(50), trajectory, self.params, deadline=deadline)

        self.assertGreater(light.violations(), 0)
        self.assertLess(heavy.violations(), light.violations())

        violation = light.get_data_for_variable('violation')[:, 0] > 0.0
        u_m = light.get_data_for_variable('u_m')
        held = np.flatnonzero(violation[1:]) + 1
        np.testing.assert_array_equal(u_m[held], u_m[held - 1])

    def test_default_steps_with_calibrated_deadline(self):

        config = MpcConfig()
        trajectory = trajectory_from_config(config, 'step')
        hold = config.STEP_HOLD

        heavy = closed_loop(controller_for(900), trajectory, self.params)
        deadline = float(np.max(heavy.get_data_for_variable('flops')))
        light = closed_loop(controller_for(100), trajectory, self.params)

        self.assertEqual(heavy.get_no_samples(), int(round(trajectory.duration * 500.0)))
        self.assertLess(light.summary()['rms_z'], heavy.summary()['rms_z'])

        calibrated = closed_loop(controller_for(900), trajectory, self.params, deadline=deadline)
        self.assertEqual(calibrated.violations(), 0)

        try:
            lightest = closed_loop(controller_for(50), trajectory, self.params, deadline=deadline)
        except SimDiverged as exception:
            logger.info(f'R=50 run diverged: {exception}')
            lightest = exception.log

        time = lightest.get_data_for_variable('time')[:, 0]
        violation = lightest.get_data_for_variable('violation')[:, 0] > 0.0

        logger.info(f'Deadline {deadline:.0f} flops, R=50 violations {lightest.violations()} up to t={time[-1]:.3f} s')
        self.assertGreater(lightest.violations(), 0)
        # hover at the origin needs no constrained solve
        self.assertGreaterEqual(float(np.min(time[violation])), hold)
        # diagonal descent from the last waypoint
        self.assertTrue(np.any(violation & (time >= 3.0 * hold)))

    def test_hover_bias_gives_steady_offset(self):

        log = closed_loop(controller_for(900), HoverTrajectory(3.0), self.params, hover_bias=0.02)

        error = log.get_data_for_variable('error')
        tail = error[3 * len(error) // 4:, 2]

        logger.info(f'Steady altitude error {np.mean(tail):.4f} m')
        self.assertLess(float(np.mean(tail)), -0.015)

        with self.assertRaises(ValueError):
            closed_loop(controller_for(900), HoverTrajectory(0.1), self.params, hover_bias=1.0)

    def test_error_states_are_downsampled(self):

        log = closed_loop(controller_for(900), HoverTrajectory(0.2), self.params)

        self.assertEqual(log.get_no_samples(), 100)

        state_log = log_error_states(log, rate=20.0)

        self.assertEqual(len(state_log), 4)
        self.assertEqual(state_log.dim, 12)

        with self.assertRaises(ValueError):
            log_error_states(log, rate=1000.0)

    def test_divergence_keeps_partial_log(self):

        with self.assertRaises(SimDiverged) as context:
            closed_loop(controller_for(900), HoverTrajectory(0.2), self.params, position_bound=1e-3)

        self.assertEqual(context.exception.log.get_no_samples(), 1)

if __name__ == '__main__':
    unittest.main()
