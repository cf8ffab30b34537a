import unittest
import json
import logging
import os
import shutil
import sys
import tempfile
import numpy as np

from mpccert.mpc_bench_cli import main
from mpccert.mpc_bench_manager import BenchConfig, MpcBenchManager, MpcRunReport, MpcRunStatus
from mpccert.mpc_pca_region import StateLog
from mpccert.mpc_result_hdf5 import MpcHdf5ResultHandler

logger = logging.getLogger('mpc_test')

logging.basicConfig(
    format = '%(asctime)s %(module)s %(levelname)s: %(message)s',
    level = logging.INFO,
    stream = sys.stdout)

class TestConfig(object):

    CONFIG_DIRECTORY = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'configs')
    DOUBLE_INTEGRATOR = os.path.join(CONFIG_DIRECTORY, 'double_integrator.json')
    QUADROTOR_R100 = os.path.join(CONFIG_DIRECTORY, 'quadrotor_r100.json')

class MpcBenchManagerTest(unittest.TestCase):

    def setUp(self):

        self.config = TestConfig()
        self.tmp_dir = tempfile.mkdtemp()
        self.out_dir = os.path.join(self.tmp_dir, 'results')

    def tearDown(self):

        shutil.rmtree(self.tmp_dir)

    def write_config(
        self,
        name: str,
        values: dict
    ) -> str:

        path = os.path.join(self.tmp_dir, name)
        with open(path, 'w') as file:
            json.dump(values, file)

        return path

    def manager(
        self,
        command: str,
        **kwargs
    ) -> MpcBenchManager:

        kwargs.setdefault('config_path', self.config.DOUBLE_INTEGRATOR)
        kwargs.setdefault('workers', 1)

        return MpcBenchManager(BenchConfig(command, out_dir=self.out_dir, **kwargs))

    def test_certify(self):

        manager = self.manager('certify', deadline=1e9)

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)

        for name in ['partition.jsonl', 'tau_certify_daqp.csv', 'report_certify.json', 'results.h5']:
            self.assertTrue(os.path.isfile(os.path.join(self.out_dir, name)), name)

        report = MpcRunReport.load_json(os.path.join(self.out_dir, 'report_certify.json'))
        self.assertEqual(report.get_value('run_status'), MpcRunStatus.COMPLETE)
        self.assertGreater(report.get_value('partition_regions'), 1)
        self.assertTrue(report.get_value('deadline_ok'))
        self.assertEqual(report.get_value('wcet_unit'), 'flops')
        self.assertEqual(report.get_value('run_config_hash'), manager.config_hash)

        meta_data = MpcHdf5ResultHandler.read_meta_data_from_hdf5(manager.hdf5_path)
        self.assertEqual(meta_data['run_command'], 'certify')

        partition = MpcHdf5ResultHandler.read_partition_from_hdf5(manager.hdf5_path)
        self.assertEqual(len(partition), report.get_value('partition_regions'))

    def test_certify_with_budget_is_partial(self):

        manager = self.manager('certify', budget=1)

        self.assertEqual(manager.run(), MpcRunStatus.PARTIAL)
        self.assertTrue(manager.report.get_value('run_error').startswith('RegionBudgetExceeded'))

    def test_unconstrained_problem_has_no_splits(self):

        path = self.write_config('custom.json', {
            'model': 'custom',
            'horizon': 2,
            'f': [[1.0, 0.1], [0.0, 1.0]],
            'g': [[0.005], [0.1]],
            'q': [[1.0, 0.0], [0.0, 1.0]],
            'r': [[1.0]],
            'theta_box': [5.0, 5.0]
        })
        manager = self.manager('certify', config_path=path)

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)
        self.assertEqual(manager.report.get_value('note'), 'no splits')
        self.assertEqual(manager.report.get_value('partition_max_iterations'), 0)

    def test_quadrotor_altitude_slice_splits(self):

        manager = self.manager('certify', config_path=self.config.QUADROTOR_R100, theta='box_b', theta_slice=(2, 8), budget=500)

        self.assertIn(manager.run(), [MpcRunStatus.COMPLETE, MpcRunStatus.PARTIAL])
        self.assertGreater(manager.report.get_value('partition_regions'), 1)
        self.assertGreater(manager.report.get_value('partition_max_iterations'), 0)
        self.assertNotEqual(manager.report.get_value('note'), 'no splits')

    def test_bench_both_solvers(self):

        manager = self.manager('bench', seed=3)

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)

        for name in ['tau_certified_daqp.csv', 'tau_uniform_admm.csv', 'difference_certified.csv',
                     'cdf_uniform_a.csv', 'cdf_daqp_certified_vs_uniform_b.csv']:
            self.assertTrue(os.path.isfile(os.path.join(self.out_dir, name)), name)

        report = manager.report.get_document()
        self.assertGreaterEqual(report['fraction_daqp_lower_certified'], 0.9)
        self.assertLessEqual(report['fraction_daqp_lower_certified'], 1.0)
        self.assertLessEqual(report['daqp_uniform_max_iterations'], report['daqp_certified_max_iterations'])
        self.assertLessEqual(report['wcet_daqp_uniform'], report['wcet_daqp_certified'])
        self.assertEqual(report['run_seed'], 3)

    def test_bench_compares_stored_measurements(self):

        self.assertEqual(self.manager('certify').run(), MpcRunStatus.COMPLETE)
        tau_path = os.path.join(self.out_dir, 'tau_certify_daqp.csv')

        manager = self.manager('bench', tau_files=(tau_path, tau_path))

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)
        self.assertFalse(manager.report.get_value('files_all_positive'))
        self.assertTrue(os.path.isfile(os.path.join(self.out_dir, 'difference_files.csv')))

    def test_pca(self):

        rng = np.random.default_rng(4)
        t = rng.uniform(-1.0, 1.0, size=200)
        log_path = os.path.join(self.tmp_dir, 'state_log.csv')
        StateLog(np.column_stack([t, 2.0 * t + rng.normal(scale=0.1, size=200)]), source='flight').save_csv(log_path)

        manager = self.manager('pca', log_path=log_path, delta=0.0)

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)
        self.assertEqual(manager.report.get_value('pca_samples_inside'), 200)
        self.assertLess(manager.report.get_value('volume_ratio_data_box'), 1.0)
        self.assertTrue(os.path.isfile(os.path.join(self.out_dir, 'pca_box.json')))

        # the written box is a valid parameter set
        certify_manager = self.manager('certify', theta=f'pca:{os.path.join(self.out_dir, "pca_box.json")}')
        self.assertEqual(certify_manager.run(), MpcRunStatus.COMPLETE)

    def test_sim_hover(self):

        path = self.write_config('quadrotor.json', {
            'model': 'quadrotor',
            'horizon': 5,
            'step_hold': 0.2
        })
        manager = self.manager('sim', config_path=path, trajectory='hover')

        self.assertEqual(manager.run(), MpcRunStatus.COMPLETE)
        self.assertEqual(manager.report.get_value('daqp_r900_samples'), 200)
        self.assertLess(manager.report.get_value('daqp_r900_rms_z'), 1e-6)

        for name in ['sim_daqp_r900_hover.csv', 'state_log_daqp_r900_hover.csv']:
            self.assertTrue(os.path.isfile(os.path.join(self.out_dir, name)), name)

        log = MpcHdf5ResultHandler.read_sim_log_from_hdf5(manager.hdf5_path, 'daqp_r900')
        self.assertEqual(log.get_no_samples(), 200)

    def test_sim_needs_quadrotor(self):

        self.assertEqual(self.manager('sim').run(), MpcRunStatus.FAILED)

    def test_invalid_arguments(self):

        with self.assertRaises(ValueError):
            self.manager('certify', theta='sphere')

        with self.assertRaises(ValueError):
            self.manager('bench', sampling='uniform:0')

        with self.assertRaises(ValueError):
            self.manager('pca')

        with self.assertRaises(ValueError):
            self.manager('certify', config_path=os.path.join(self.tmp_dir, 'missing.json'))

    def test_command_line(self):

        code = main(['certify', '--config', self.config.DOUBLE_INTEGRATOR, '--out', self.out_dir, '--workers', '1'])
        self.assertEqual(code, 0)

        code = main(['certify', '--config', self.config.DOUBLE_INTEGRATOR, '--out', self.out_dir, '--budget', '1'])
        self.assertEqual(code, 2)

        code = main(['certify', '--theta', 'sphere', '--out', self.out_dir])
        self.assertEqual(code, 1)

if __name__ == '__main__':
    unittest.main()
