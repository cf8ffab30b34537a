import json
import logging
import os
import numpy as np
import pandas as pd

from datetime import datetime
from typing import Callable, Dict, List, Optional, Tuple

from .mpc_admm_baseline import admm_program, admm_solve, build_admm_cache_from_config
from .mpc_cert import MpcMeasurementVector, MpcPartition
from .mpc_cert import cdf_and_histogram, certify, daqp_program, measure, measure_samples
from .mpc_cert import realtime_verdict, sample_uniform, save_partition, wcet
from .mpc_condense import MpcOcpSpec, MpcParametricQP, condense, ocp_from_config
from .mpc_config import MpcConfig
from .mpc_errors import DegenerateData, SimDiverged
from .mpc_pca_region import StateLog, build_pca_box, box_to_polyhedron, contains
from .mpc_pca_region import data_bounds, estimate_volume_ratio, load_pca_box, save_pca_box, volume_ratio
from .mpc_polyhedron import MpcPolyhedron
from .mpc_qp_core import MpcSolverConfig
from .mpc_quad_sim import MpcAdmmController, MpcDaqpController, QuadParams
from .mpc_quad_sim import closed_loop, log_error_states, quadrotor_ocp, trajectory_from_config
from .mpc_result_hdf5 import MpcHdf5ResultHandler

logger = logging.getLogger('mpc_app')

COMMANDS = ['certify', 'bench', 'sim', 'pca']
SOLVERS = ['daqp', 'admm']
TRAJECTORIES = ['hover', 'step', 'figure8']
HISTOGRAM_BINS = 20

class MpcRunStatus:
    COMPLETE = 'Complete'
    PARTIAL = 'Partial'
    FAILED = 'Failed'

class MpcRunReport:
    '''
    Flat document describing one command run, written as JSON next to the
    data files and as attributes of the HDF5 meta_data group.
    '''

    def __init__(
        self,
        document: Optional[dict] = None
    ) -> None:

        self.document = {} if document is None else document

    def get_document(
        self
    ) -> dict:

        return self.document.copy()

    def extend_document(
        self,
        add_document: dict
    ) -> None:

        temp = self.document.copy()
        temp.update(add_document)

        self.document = temp

    def set_run_values(
        self,
        run_command: str,
        run_date: str,
        run_status: str,
        run_config_hash: str,
        run_out: str
    ) -> None:

        self.document['run_command'] = run_command
        self.document['run_date'] = run_date
        self.document['run_status'] = run_status
        self.document['run_config_hash'] = run_config_hash
        self.document['run_out'] = run_out

    def set_value(
        self,
        key: str,
        value
    ) -> None:

        self.document[key] = value

    def get_value(
        self,
        key: str
    ):

        return self.document[key]

    def delete_key(
        self,
        key: str
    ) -> bool:

        is_in = False
        if key in self.document:
            is_in = True
            del self.document[key]

        return is_in

    def save_json(
        self,
        path: str
    ) -> None:

        with open(path, 'w') as file:
            json.dump(self.document, file, indent=2, sort_keys=True, default=str)

        logger.info(f'Wrote run report to {path}')

    @staticmethod
    def load_json(
        path: str
    ) -> 'MpcRunReport':

        with open(path, 'r') as file:
            return MpcRunReport(json.load(file))

class BenchConfig:
    '''
    Everything one command needs besides the OCP config file. theta is one of
    'box' (config theta_box), 'box_b', 'pca:<file>[:<delta>]' (PCA box JSON or
    state log CSV) or 'poly:<file>' (polyhedron JSON). sampling is 'both',
    'certified' or 'uniform[:<M>[:<seed>]]'.
    '''

    def __init__(
        self,
        command: str,
        config_path: Optional[str] = None,
        theta: str = 'box',
        sampling: str = 'both',
        solver: Optional[str] = None,
        mode: str = 'flops',
        out_dir: str = 'results',
        budget: Optional[int] = None,
        seed: Optional[int] = None,
        workers: Optional[int] = None,
        deadline: Optional[float] = None,
        r_presets: Optional[List[int]] = None,
        theta_slice: Optional[Tuple[int, ...]] = None,
        hover_bias: float = 0.0,
        trajectory: str = 'step',
        delta: Optional[float] = None,
        log_path: Optional[str] = None,
        tau_files: Optional[Tuple[str, str]] = None
    ) -> None:

        self._command = command
        self._config_path = config_path
        self._theta = theta
        self._sampling = sampling
        self._solver = solver
        self._mode = mode
        self._out_dir = out_dir
        self._budget = budget
        self._seed = seed
        self._workers = workers
        self._deadline = deadline
        self._r_presets = r_presets
        self._theta_slice = None if theta_slice is None else tuple(int(index) for index in theta_slice)
        self._hover_bias = float(hover_bias)
        self._trajectory = trajectory
        self._delta = delta
        self._log_path = log_path
        self._tau_files = tau_files

    @property
    def command(self):
        return self._command

    @property
    def config_path(self):
        return self._config_path

    @property
    def theta(self):
        return self._theta

    @property
    def sampling(self):
        return self._sampling

    @property
    def solver(self):
        if self._solver is not None:
            return self._solver
        return 'both' if self._command == 'bench' else 'daqp'

    @property
    def solvers(self):
        return SOLVERS if self.solver == 'both' else [self.solver]

    @property
    def mode(self):
        return self._mode

    @property
    def out_dir(self):
        return self._out_dir

    @property
    def budget(self):
        return self._budget

    @property
    def seed(self):
        return self._seed

    @property
    def workers(self):
        if self._workers is not None:
            return self._workers
        return 1 if self._mode == 'wallclock' else (os.cpu_count() or 1)

    @property
    def deadline(self):
        return self._deadline

    @property
    def r_presets(self):
        return self._r_presets

    @property
    def theta_slice(self):
        return self._theta_slice

    @property
    def hover_bias(self):
        return self._hover_bias

    @property
    def trajectory(self):
        return self._trajectory

    @property
    def delta(self):
        return self._delta

    @property
    def log_path(self):
        return self._log_path

    @property
    def tau_files(self):
        return self._tau_files

    def theta_source(
        self
    ) -> Tuple[str, Optional[str], Optional[float]]:
        '''
        Splits theta into (kind, path, delta).
        '''

        parts = self._theta.split(':')
        kind = parts[0]

        if kind in ('box', 'box_b'):
            if len(parts) != 1:
                raise ValueError(f'Parameter set {self._theta} takes no arguments')
            return kind, None, None

        if kind == 'pca':
            if len(parts) not in (2, 3):
                raise ValueError(f'Expected pca:<file>[:<delta>], got {self._theta}')
            return kind, parts[1], float(parts[2]) if len(parts) == 3 else None

        if kind == 'poly':
            if len(parts) != 2:
                raise ValueError(f'Expected poly:<file>, got {self._theta}')
            return kind, parts[1], None

        raise ValueError(f'Unknown parameter set {self._theta}')

    def sampling_plan(
        self
    ) -> Tuple[bool, bool, Optional[int], Optional[int]]:
        '''
        (certified, uniform, uniform sample count, uniform seed); a missing
        count means one sample per certified region.
        '''

        parts = self._sampling.split(':')

        if parts[0] == 'both' and len(parts) == 1:
            return True, True, None, None
        if parts[0] == 'certified' and len(parts) == 1:
            return True, False, None, None
        if parts[0] == 'uniform' and len(parts) <= 3:
            count = int(parts[1]) if len(parts) >= 2 else None
            seed = int(parts[2]) if len(parts) == 3 else None
            if count is not None and count < 1:
                raise ValueError(f'Uniform sample count must be positive, got {count}')
            return False, True, count, seed

        raise ValueError(f'Unknown sampling {self._sampling}')

    def validate(
        self
    ) -> None:

        if self._command not in COMMANDS:
            raise ValueError(f'Unknown command {self._command}')
        if self.solver not in SOLVERS + ['both']:
            raise ValueError(f'Unknown solver {self.solver}')
        if self._mode not in ('flops', 'wallclock'):
            raise ValueError(f'Unknown measurement mode {self._mode}')
        if self._trajectory not in TRAJECTORIES:
            raise ValueError(f'Unknown trajectory {self._trajectory}')
        if self._budget is not None and self._budget < 1:
            raise ValueError(f'Region budget must be positive, got {self._budget}')
        if self._workers is not None and self._workers < 1:
            raise ValueError(f'Worker count must be positive, got {self._workers}')
        if not 0.0 <= self._hover_bias < 1.0:
            raise ValueError(f'hover_bias must lie in [0, 1), got {self._hover_bias}')

        self.sampling_plan()
        _, theta_path, _ = self.theta_source()

        paths = [self._config_path, theta_path]
        if self._command == 'pca':
            if self._log_path is None:
                raise ValueError('pca needs a state log')
            paths.append(self._log_path)
        if self._tau_files is not None:
            if len(self._tau_files) != 2:
                raise ValueError(f'Expected two measurement files, got {self._tau_files}')
            paths.extend(self._tau_files)

        for path in paths:
            if path is not None and not os.path.isfile(path):
                raise ValueError(f'File {path} does not exist')

class MpcBenchManager:

    def __init__(
        self,
        bench_config: BenchConfig
    ) -> None:

        bench_config.validate()
        self.bench = bench_config

        self.config = MpcConfig() if bench_config.config_path is None else MpcConfig.from_json(bench_config.config_path)
        if bench_config.r_presets:
            self.config.R_PRESET = bench_config.r_presets[0]
        if bench_config.seed is not None:
            self.config.SEED = bench_config.seed
        if bench_config.budget is not None:
            self.config.REGION_BUDGET = bench_config.budget

        self.config_hash = self.config.config_hash()
        self.solver_config = MpcSolverConfig.from_config(self.config)
        self.report = MpcRunReport()

        if not os.path.isdir(bench_config.out_dir):
            os.makedirs(bench_config.out_dir)

    def out_path(
        self,
        name: str
    ) -> str:

        return os.path.join(self.bench.out_dir, name)

    @property
    def hdf5_path(self):
        return self.out_path('results.h5')

    def run(
        self
    ) -> str:

        commands = {
            'certify': self.cmd_certify,
            'bench': self.cmd_bench,
            'sim': self.cmd_sim,
            'pca': self.cmd_pca
        }

        return commands[self.bench.command]()

    def _start_report(
        self,
        command: str
    ) -> MpcRunReport:

        report = MpcRunReport()
        report.set_run_values(
            run_command=command,
            run_date=datetime.now().strftime('%m/%d/%Y, %H:%M:%S'),
            run_status=MpcRunStatus.FAILED,
            run_config_hash=self.config_hash,
            run_out=self.bench.out_dir
        )
        report.set_value('run_seed', self.config.SEED)

        return report

    def _finish_report(
        self,
        report: MpcRunReport,
        status: str
    ) -> str:

        report.set_value('run_status', status)
        self.report = report

        try:
            report.save_json(self.out_path(f'report_{report.get_value("run_command")}.json'))
            MpcHdf5ResultHandler.write_meta_data_to_hdf5(self.hdf5_path, report.get_document())
        except Exception as exception:
            logger.error(f'Error when writing the run report occured: {exception}')
            status = MpcRunStatus.FAILED

        logger.info(f'Finished {report.get_value("run_command")} with status {status}')

        return status

    def write_frame(
        self,
        frame: pd.DataFrame,
        name: str,
        comment: str
    ) -> str:

        path = self.out_path(name)
        with open(path, 'w') as file:
            file.write(f'# {comment} config={self.config_hash}\n')
            frame.to_csv(file, index=False)

        logger.info(f'Wrote {len(frame)} rows to {path}')

        return path

    def theta_bounds(
        self,
        dim: int,
        kind: str
    ) -> Tuple[np.ndarray, np.ndarray]:

        if kind == 'box_b' or (self.config.THETA_BOX is None and dim == len(self.config.THETA_BOX_B)):
            upper = np.array(self.config.THETA_BOX_B, dtype=float)
        elif self.config.THETA_BOX is not None:
            upper = np.array(self.config.THETA_BOX, dtype=float)
        else:
            raise ValueError(f'No parameter box configured for dimension {dim}')

        if upper.shape != (dim,):
            raise ValueError(f'Parameter box has dimension {len(upper)}, problem has {dim}')

        return -upper, upper

    def theta_set(
        self,
        dim: int
    ) -> MpcPolyhedron:

        kind, path, delta = self.bench.theta_source()

        if kind in ('box', 'box_b'):
            return MpcPolyhedron.from_box(*self.theta_bounds(dim, kind))

        if kind == 'poly':
            with open(path, 'r') as file:
                return MpcPolyhedron.from_dict(json.load(file))

        if path.endswith('.json'):
            box = load_pca_box(path)
        else:
            delta = self.config.PCA_DELTA if delta is None else delta
            box = build_pca_box(StateLog.load_csv(path, self.config.PCA_RATE), delta)

        return box_to_polyhedron(box)

    def slice_basis(
        self,
        dim: int
    ) -> Optional[np.ndarray]:

        if self.bench.theta_slice is None:
            return None

        indices = list(self.bench.theta_slice)
        if len(set(indices)) != len(indices) or min(indices) < 0 or max(indices) >= dim:
            raise ValueError(f'Invalid slice {indices} for dimension {dim}')

        return np.eye(dim)[:, indices]

    def setup_problem(
        self
    ) -> Tuple[MpcOcpSpec, MpcParametricQP, MpcPolyhedron, Optional[np.ndarray]]:
        '''
        OCP, condensed QP and parameter set, both restricted to the slice
        theta = basis s when one is configured.
        '''

        ocp = ocp_from_config(self.config)
        pqp = condense(ocp)
        theta_set = self.theta_set(pqp.theta_dim)

        if theta_set.dim != pqp.theta_dim:
            raise ValueError(f'Parameter set has dimension {theta_set.dim}, problem has {pqp.theta_dim}')

        basis = self.slice_basis(pqp.theta_dim)
        if basis is not None:
            pqp = pqp.restrict(basis)
            theta_set = MpcPolyhedron(theta_set.A @ basis, theta_set.b).reduce()
            logger.info(f'Restricted problem to the slice {self.bench.theta_slice}')

        return ocp, pqp, theta_set, basis

    def certify_partition(
        self,
        pqp: MpcParametricQP,
        theta_set: MpcPolyhedron
    ) -> MpcPartition:

        return certify(
            pqp,
            theta_set,
            self.solver_config,
            budget=self.config.REGION_BUDGET,
            row_prune_cap=self.config.ROW_PRUNE_CAP,
            min_radius=self.config.CHEBYSHEV_MIN_RADIUS
        )

    def programs(
        self,
        ocp: MpcOcpSpec,
        pqp: MpcParametricQP,
        basis: Optional[np.ndarray]
    ) -> Dict[str, Callable]:

        programs = {}

        if 'daqp' in self.bench.solvers:
            programs['daqp'] = daqp_program(pqp, self.solver_config)

        if 'admm' in self.bench.solvers:

            cache = build_admm_cache_from_config(ocp, self.config)

            if basis is None:
                programs['admm'] = admm_program(cache)
            else:
                programs['admm'] = lambda s: admm_solve(cache, basis @ s)

        return programs

    def sample_theta(
        self,
        theta_set: MpcPolyhedron,
        count: int,
        seed: int
    ) -> np.ndarray:
        '''
        count uniform samples of theta_set, drawn from its bounding box by
        rejection.
        '''

        lower, upper = theta_set.bounding_box()
        accepted = []
        total = 0
        draw = 0

        while total < count:

            points = sample_uniform(lower, upper, count, seed + draw)
            points = points[theta_set.contains_many(points)]
            accepted.append(points)
            total += len(points)
            draw += 1

            if draw > 1000:
                raise DegenerateData(f'Rejection sampling accepted only {total} of {count} points')

        return np.vstack(accepted)[:count]

    def cmd_certify(
        self
    ) -> str:

        report = self._start_report('certify')
        status = MpcRunStatus.FAILED

        try:

            _, pqp, theta_set, _ = self.setup_problem()
            partition = self.certify_partition(pqp, theta_set)

            save_partition(partition, self.out_path('partition.jsonl'))
            MpcHdf5ResultHandler.write_partition_into_hdf5(self.hdf5_path, partition)

            report.extend_document({f'partition_{key}': value for key, value in partition.summary().items()})
            report.set_value('note', 'no splits' if len(partition) == 1 else '')

            tau = measure(partition, daqp_program(pqp, self.solver_config), self.bench.mode, self.bench.workers, label='daqp_certified')
            tau.save_csv(self.out_path('tau_certify_daqp.csv'), self.config_hash)

            if len(tau) > 0:

                value, region = wcet(tau)
                report.set_value('wcet', value)
                report.set_value('wcet_region', region)
                report.set_value('wcet_unit', 'us' if self.bench.mode == 'wallclock' else 'flops')

                if self.bench.deadline is not None:
                    verdict = realtime_verdict(tau, self.bench.deadline)
                    report.set_value('deadline', verdict.budget)
                    report.set_value('deadline_ok', verdict.ok)
                    report.set_value('deadline_violating_regions', verdict.violating_regions)

            else:

                logger.warning('No full-dimensional region to measure')

            if partition.budget_exceeded:
                report.set_value('run_error', f'RegionBudgetExceeded: budget {self.config.REGION_BUDGET} reached')

            status = MpcRunStatus.PARTIAL if partition.budget_exceeded or partition.capped_regions else MpcRunStatus.COMPLETE

        except Exception as exception:

            logger.error(f'Error during certification occured: {exception}')
            report.set_value('run_error', f'{type(exception).__name__}: {exception}')

        return self._finish_report(report, status)

    def compare_files(
        self,
        report: MpcRunReport
    ) -> None:

        path_a, path_b = self.bench.tau_files
        tau_a = MpcMeasurementVector.load_csv(path_a, self.bench.mode, 'a')
        tau_b = MpcMeasurementVector.load_csv(path_b, self.bench.mode, 'b')

        self.write_records(cdf_and_histogram(tau_a, tau_b, HISTOGRAM_BINS), 'files', report)

    def write_records(
        self,
        records: dict,
        name: str,
        report: MpcRunReport
    ) -> None:

        unit = 'us' if self.bench.mode == 'wallclock' else 'flops'

        self.write_frame(records['cdf_a'], f'cdf_{name}_a.csv', f'cdf {name} a unit={unit}')
        self.write_frame(records['cdf_b'], f'cdf_{name}_b.csv', f'cdf {name} b unit={unit}')

        if 'difference' in records:

            self.write_frame(records['difference'], f'difference_{name}.csv', f'histogram of b - a {name} unit={unit}')

            report.set_value(f'{name}_all_positive', records['all_positive'])

        logger.info(f'Wrote CDF and histogram records for {name}')

    def cmd_bench(
        self
    ) -> str:

        report = self._start_report('bench')
        status = MpcRunStatus.FAILED

        try:

            if self.bench.tau_files is not None:

                self.compare_files(report)
                return self._finish_report(report, MpcRunStatus.COMPLETE)

            ocp, pqp, theta_set, basis = self.setup_problem()
            partition = self.certify_partition(pqp, theta_set)
            save_partition(partition, self.out_path('partition.jsonl'))

            report.extend_document({f'partition_{key}': value for key, value in partition.summary().items()})

            use_certified, use_uniform, count, seed = self.bench.sampling_plan()
            programs = self.programs(ocp, pqp, basis)
            vectors = {}

            if use_certified:
                for solver, program in programs.items():
                    vectors[(solver, 'certified')] = measure(partition, program, self.bench.mode, self._workers_for(solver), label=f'{solver}_certified')

            if use_uniform:

                count = len(partition.full_dimensional()) if count is None else count
                seed = self.config.SEED if seed is None else seed
                thetas = self.sample_theta(theta_set, max(count, 1), seed)

                for solver, program in programs.items():
                    vectors[(solver, 'uniform')] = measure_samples(thetas, program, self.bench.mode, self._workers_for(solver), label=f'{solver}_uniform')

                if 'daqp' in programs:
                    iterations = [programs['daqp'](theta).iterations for theta in thetas]
                    report.set_value('daqp_uniform_max_iterations', int(max(iterations)))
                    report.set_value('daqp_certified_max_iterations', partition.max_iterations())

            for (solver, sampling), tau in vectors.items():
                tau.save_csv(self.out_path(f'tau_{sampling}_{solver}.csv'), self.config_hash)
                if len(tau) > 0:
                    value, _ = wcet(tau)
                    report.set_value(f'wcet_{solver}_{sampling}', value)

            for sampling in ('certified', 'uniform'):
                if ('daqp', sampling) in vectors and ('admm', sampling) in vectors:

                    tau_daqp = vectors[('daqp', sampling)]
                    tau_admm = vectors[('admm', sampling)]
                    self.write_records(cdf_and_histogram(tau_daqp, tau_admm, HISTOGRAM_BINS), sampling, report)

                    fraction = float(np.mean(tau_daqp.tau < tau_admm.tau)) if len(tau_daqp) > 0 else 0.0
                    report.set_value(f'fraction_daqp_lower_{sampling}', fraction)
                    print(f'{sampling}: DAQP cheaper than ADMM in {100.0 * fraction:.1f}% of {len(tau_daqp)} samples')

            for solver in programs:
                if (solver, 'certified') in vectors and (solver, 'uniform') in vectors:
                    records = cdf_and_histogram(vectors[(solver, 'certified')], vectors[(solver, 'uniform')], difference=False)
                    self.write_records(records, f'{solver}_certified_vs_uniform', report)

            status = MpcRunStatus.PARTIAL if partition.budget_exceeded or partition.capped_regions else MpcRunStatus.COMPLETE

        except Exception as exception:

            logger.error(f'Error during benchmark occured: {exception}')
            report.set_value('run_error', f'{type(exception).__name__}: {exception}')

        return self._finish_report(report, status)

    def _workers_for(
        self,
        solver: str
    ) -> int:

        # warm-started ADMM keeps state between solves
        if solver == 'admm' and self.config.ADMM_WARM_START:
            return 1

        return self.bench.workers

    def cmd_sim(
        self
    ) -> str:

        report = self._start_report('sim')
        status = MpcRunStatus.FAILED

        try:

            if self.config.MODEL != 'quadrotor':
                raise ValueError(f'Closed-loop simulation needs the quadrotor model, got {self.config.MODEL}')

            params = QuadParams()
            trajectory = trajectory_from_config(self.config, self.bench.trajectory)
            presets = self.bench.r_presets or [self.config.R_PRESET]
            diverged = False

            report.set_value('trajectory', self.bench.trajectory)
            report.set_value('deadline', self.bench.deadline)
            report.set_value('hover_bias', self.bench.hover_bias)

            for preset in presets:

                config = self.config.copy()
                config.R_PRESET = preset
                ocp = quadrotor_ocp(config, params)

                for solver in self.bench.solvers:

                    name = f'{solver}_r{preset}'
                    if solver == 'daqp':
                        controller = MpcDaqpController(condense(ocp), MpcSolverConfig.from_config(config), name)
                    else:
                        controller = MpcAdmmController(build_admm_cache_from_config(ocp, config), name)

                    try:
                        log = closed_loop(
                            controller,
                            trajectory,
                            params,
                            controller_rate=config.CONTROLLER_RATE,
                            deadline=self.bench.deadline,
                            simulation_rate=config.SIMULATION_RATE,
                            hover_bias=self.bench.hover_bias,
                            position_bound=config.SIM_POSITION_BOUND
                        )
                    except SimDiverged as exception:
                        logger.error(f'Simulation {name} diverged: {exception}')
                        report.set_value(f'{name}_error', str(exception))
                        log = exception.log
                        diverged = True

                    if log is None:
                        continue

                    log.save_csv(self.out_path(f'sim_{name}_{self.bench.trajectory}.csv'), self.config_hash)
                    MpcHdf5ResultHandler.write_sim_log_into_hdf5(self.hdf5_path, log)

                    if log.get_no_samples() >= 2 * config.CONTROLLER_RATE / config.PCA_RATE:
                        state_log = log_error_states(log, config.PCA_RATE)
                        state_log.save_csv(self.out_path(f'state_log_{name}_{self.bench.trajectory}.csv'), self.config_hash)

                    summary = log.summary()
                    report.extend_document({f'{name}_{key}': value for key, value in summary.items()})
                    print(f'{name}: rms x/y/z {summary["rms_x"]:.4f}/{summary["rms_y"]:.4f}/{summary["rms_z"]:.4f} m, '
                          f'max u_m {summary["max_u_m"]:.3f}, deadline violations {summary["deadline_violations"]}')

            status = MpcRunStatus.FAILED if diverged else MpcRunStatus.COMPLETE

        except Exception as exception:

            logger.error(f'Error during simulation occured: {exception}')
            report.set_value('run_error', f'{type(exception).__name__}: {exception}')

        return self._finish_report(report, status)

    def cmd_pca(
        self
    ) -> str:

        report = self._start_report('pca')
        status = MpcRunStatus.FAILED

        try:

            delta = self.config.PCA_DELTA if self.bench.delta is None else self.bench.delta
            log = StateLog.load_csv(self.bench.log_path, self.config.PCA_RATE)
            box = build_pca_box(log, delta)
            save_pca_box(box, self.out_path('pca_box.json'))

            inside = sum(contains(box, z) for z in log.samples)
            report.set_value('pca_samples', len(log))
            report.set_value('pca_samples_inside', int(inside))
            report.set_value('pca_delta', delta)
            report.set_value('pca_volume', box.volume())

            lower, upper = data_bounds(log, delta)
            references = {'data_box': (lower, upper)}
            if log.dim == len(self.config.THETA_BOX_B):
                references['box_b'] = self.theta_bounds(log.dim, 'box_b')

            for name, (reference_lower, reference_upper) in references.items():
                ratio, sampled = None, None
                try:
                    ratio = volume_ratio(box, reference_lower, reference_upper)
                    sampled = estimate_volume_ratio(box, reference_lower, reference_upper, self.config.VOLUME_SAMPLES, self.config.SEED)
                except DegenerateData as exception:
                    logger.warning(f'Volume ratio against {name} incomplete: {exception}')
                report.set_value(f'volume_ratio_{name}', ratio)
                report.set_value(f'volume_ratio_{name}_sampled', sampled)
                print(f'volume(PCA box) / volume({name}) = {ratio} (sampled {sampled})')

            status = MpcRunStatus.COMPLETE

        except Exception as exception:

            logger.error(f'Error during PCA construction occured: {exception}')
            report.set_value('run_error', f'{type(exception).__name__}: {exception}')

        return self._finish_report(report, status)
