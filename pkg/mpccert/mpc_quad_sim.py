import logging
import math
import numpy as np
import pandas as pd
import scipy.linalg

from typing import Any, List, Optional, Tuple

from .mpc_admm_baseline import MpcAdmmCache, admm_solve
from .mpc_condense import MpcOcpSpec, MpcParametricQP, box_input_constraints, mpc_step
from .mpc_errors import NearSingularAttitude, SimDiverged
from .mpc_pca_region import StateLog
from .mpc_qp_core import MpcSolverConfig

logger = logging.getLogger('mpc_app')

class QuadParams:
    '''
    Crazyflie-class nominal parameters. Thrust and torque are affine in the
    normalized motor commands u_m in [0, 1].
    '''

    def __init__(
        self,
        mass: float = 0.029,
        inertia: Tuple[float, float, float] = (16.57e-6, 16.66e-6, 29.26e-6),
        arm_length: float = 0.046,
        thrust_coefficient: float = 2.245365e-6 * 65535,
        torque_ratio: float = 0.005964552,
        gravity: float = 9.81
    ) -> None:

        self.mass = float(mass)
        self.inertia = np.asarray(inertia, dtype=float)
        self.arm_length = float(arm_length)
        self.kt = float(thrust_coefficient)
        self.km = self.kt * float(torque_ratio)
        self.gravity = float(gravity)

        if self.mass <= 0.0 or np.any(self.inertia <= 0.0) or self.arm_length <= 0.0 or self.kt <= 0.0 or self.gravity <= 0.0:
            raise ValueError('Quadrotor parameters must be positive')

        # hover command balancing gravity
        self.u0 = np.full(4, self.mass * self.gravity / (4.0 * self.kt))

        el = self.kt * self.arm_length / math.sqrt(2.0)
        self.torque_map = np.array([
            [-el, -el, el, el],
            [-el, el, el, -el],
            [-self.km, self.km, -self.km, self.km]
        ])

    @property
    def J(self):
        return np.diag(self.inertia)

class QuadState:

    def __init__(
        self,
        p: np.ndarray,
        V: np.ndarray,
        q: np.ndarray,
        omega: np.ndarray
    ) -> None:

        self.p = np.asarray(p, dtype=float).reshape(3)
        self.V = np.asarray(V, dtype=float).reshape(3)
        self.q = np.asarray(q, dtype=float).reshape(4)
        self.omega = np.asarray(omega, dtype=float).reshape(3)

    @staticmethod
    def hover(
        altitude: float = 1.0
    ) -> 'QuadState':

        return QuadState([0.0, 0.0, altitude], np.zeros(3), [1.0, 0.0, 0.0, 0.0], np.zeros(3))

    @staticmethod
    def from_error(
        z: np.ndarray,
        origin: Optional[np.ndarray] = None
    ) -> 'QuadState':
        '''
        State at the 12-vector [p, r, v, omega] (Rodrigues attitude), shifted by origin.
        '''

        z = np.asarray(z, dtype=float).reshape(12)
        origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)

        return QuadState(origin + z[0:3], z[6:9], rodrigues_to_quaternion(z[3:6]), z[9:12])

    def to_vector(
        self
    ) -> np.ndarray:

        return np.concatenate([self.p, self.q, self.V, self.omega])

    @staticmethod
    def from_vector(
        x: np.ndarray
    ) -> 'QuadState':

        return QuadState(x[0:3], x[7:10], x[3:7], x[10:13])

    def to_reduced(
        self
    ) -> np.ndarray:

        return np.concatenate([self.p, quaternion_to_rodrigues(self.q), self.V, self.omega])

    def copy(
        self
    ) -> 'QuadState':

        return QuadState(self.p.copy(), self.V.copy(), self.q.copy(), self.omega.copy())

def quaternion_to_rodrigues(
    q: np.ndarray
) -> np.ndarray:

    q = np.asarray(q, dtype=float).reshape(4)
    if abs(q[0]) < 1e-6:
        raise NearSingularAttitude(f'Quaternion {q} is close to a half turn')

    return q[1:] / q[0]

def rodrigues_to_quaternion(
    r: np.ndarray
) -> np.ndarray:

    r = np.asarray(r, dtype=float).reshape(3)

    return np.concatenate([[1.0], r]) / math.sqrt(1.0 + r @ r)

def quaternion_to_matrix(
    q: np.ndarray
) -> np.ndarray:
    '''
    Body-to-world rotation of the unit quaternion (w, x, y, z).
    '''

    w, x, y, z = q

    return np.array([
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)]
    ])

def motor_map(
    u: np.ndarray,
    u0: np.ndarray
) -> Tuple[np.ndarray, bool]:

    raw = np.asarray(u0, dtype=float) + np.asarray(u, dtype=float)
    u_m = np.clip(raw, 0.0, 1.0)

    return u_m, bool(np.any(u_m != raw))

def _derivative(
    x: np.ndarray,
    u_m: np.ndarray,
    params: QuadParams
) -> np.ndarray:

    q = x[3:7]
    V = x[7:10]
    omega = x[10:13]

    w, qx, qy, qz = q
    ox, oy, oz = omega
    q_dot = 0.5 * np.array([
        -qx * ox - qy * oy - qz * oz,
        w * ox + qy * oz - qz * oy,
        w * oy + qz * ox - qx * oz,
        w * oz + qx * oy - qy * ox
    ])

    thrust = params.kt * np.sum(u_m)
    V_dot = np.array([0.0, 0.0, -params.gravity]) + quaternion_to_matrix(q) @ np.array([0.0, 0.0, thrust]) / params.mass

    torque = params.torque_map @ u_m
    omega_dot = (torque - np.cross(omega, params.inertia * omega)) / params.inertia

    return np.concatenate([V, q_dot, V_dot, omega_dot])

def dynamics_step(
    state: QuadState,
    u_m: np.ndarray,
    params: QuadParams,
    dt: float
) -> QuadState:
    '''
    One RK4 step of the rigid-body model; the quaternion is renormalized.
    '''

    if not 0.0 < dt <= 0.01:
        raise ValueError(f'Step size must lie in (0, 0.01], got {dt}')

    u_m = np.asarray(u_m, dtype=float)
    clamped = np.clip(u_m, 0.0, 1.0)
    if np.any(clamped != u_m):
        logger.debug(f'Motor command {u_m} clamped')

    x = state.to_vector()
    k1 = _derivative(x, clamped, params)
    k2 = _derivative(x + 0.5 * dt * k1, clamped, params)
    k3 = _derivative(x + 0.5 * dt * k2, clamped, params)
    k4 = _derivative(x + dt * k3, clamped, params)

    x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    x[3:7] /= np.linalg.norm(x[3:7])

    return QuadState.from_vector(x)

def linearize_hover(
    params: QuadParams,
    dt: float
) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Zero-order-hold discretization of the hover linearization in the
    reduced state [p, r, v, omega] with Rodrigues attitude r and input
    u = u_m - u0.
    '''

    g = params.gravity

    A = np.zeros((12, 12))
    A[0:3, 6:9] = np.eye(3)
    A[3:6, 9:12] = 0.5 * np.eye(3)
    # small tilt 2r rotates the thrust vector
    A[6, 4] = 2.0 * g
    A[7, 3] = -2.0 * g

    B = np.zeros((12, 4))
    B[8, :] = params.kt / params.mass
    B[9:12, :] = params.torque_map / params.inertia.reshape(3, 1)

    block = np.zeros((16, 16))
    block[:12, :12] = A * dt
    block[:12, 12:] = B * dt
    discrete = scipy.linalg.expm(block)

    return discrete[:12, :12], discrete[:12, 12:]

def quadrotor_ocp(
    config,
    params: Optional[QuadParams] = None
) -> MpcOcpSpec:

    params = QuadParams() if params is None else params
    F, G = linearize_hover(params, config.get_dt())

    Q = np.diag(config.QUAD_Q_DIAG) if config.Q is None else np.array(config.Q, dtype=float)
    R = config.R_PRESET * np.eye(4) if config.R is None else np.array(config.R, dtype=float)

    u_min = -params.u0 if config.U_MIN is None else np.array(config.U_MIN, dtype=float)
    u_max = 1.0 - params.u0 if config.U_MAX is None else np.array(config.U_MAX, dtype=float)
    A_z, A_u, b_u = box_input_constraints(u_min, u_max, 12)

    return MpcOcpSpec(
        F=F,
        G=G,
        Q=Q,
        R=R,
        N=config.HORIZON,
        A_z=A_z,
        A_u=A_u,
        b_u=b_u,
        name=f'quadrotor_r{config.R_PRESET}'
    )

class Trajectory:

    def __init__(
        self,
        duration: float,
        altitude: float = 1.0
    ) -> None:

        self.duration = float(duration)
        self.altitude = float(altitude)

    def position(
        self,
        t: float
    ) -> np.ndarray:

        return np.zeros(3)

    def reference(
        self,
        t: float
    ) -> np.ndarray:
        '''
        Reduced reference state; only the position is nonzero.
        '''

        z_r = np.zeros(12)
        z_r[0:3] = self.position(t)

        return z_r

    @property
    def origin(self):
        return np.array([0.0, 0.0, self.altitude])

class HoverTrajectory(Trajectory):
    pass

def _smoothstep(
    s: float
) -> float:

    s = min(max(s, 0.0), 1.0)
    return s * s * (3.0 - 2.0 * s)

class StepSequence(Trajectory):
    '''
    Holds the origin, then steps through the waypoints (relative to the
    hover point), holding each one.
    '''

    def __init__(
        self,
        waypoints: List[List[float]],
        hold: float = 4.0,
        transition: float = 0.05,
        altitude: float = 1.0
    ) -> None:

        super().__init__((len(waypoints) + 1) * hold, altitude)

        if hold <= 0.0 or transition < 0.0 or transition > hold:
            raise ValueError(f'Invalid hold {hold} or transition {transition}')

        self.targets = [np.zeros(3)] + [np.asarray(waypoint, dtype=float).reshape(3) for waypoint in waypoints]
        self.hold = float(hold)
        self.transition = float(transition)

    def position(
        self,
        t: float
    ) -> np.ndarray:

        segment = min(int(max(t, 0.0) // self.hold), len(self.targets) - 1)
        if segment == 0:
            return self.targets[0].copy()

        elapsed = t - segment * self.hold
        blend = 1.0 if self.transition == 0.0 else _smoothstep(elapsed / self.transition)

        return (1.0 - blend) * self.targets[segment - 1] + blend * self.targets[segment]

class FigureEight(Trajectory):

    def __init__(
        self,
        amplitude: float = 0.5,
        period: float = 7.0,
        altitude: float = 1.0,
        ramp: float = 1.0,
        laps: int = 2
    ) -> None:

        super().__init__(ramp + laps * period, altitude)

        if amplitude <= 0.0 or period <= 0.0 or ramp < 0.0:
            raise ValueError(f'Invalid figure-eight amplitude {amplitude}, period {period} or ramp {ramp}')

        self.amplitude = float(amplitude)
        self.period = float(period)
        self.ramp = float(ramp)

    def position(
        self,
        t: float
    ) -> np.ndarray:

        scale = 1.0 if self.ramp == 0.0 else _smoothstep(t / self.ramp)
        phase = 2.0 * math.pi * t / self.period

        return scale * self.amplitude * np.array([math.sin(phase), 0.5 * math.sin(2.0 * phase), 0.0])

class SimLog:
    '''
    Time series of a closed-loop run, sampled at the controller rate.
    '''

    VARIABLES = {
        'time': 1,
        'state': 13,
        'reference': 12,
        'error': 12,
        'u_m': 4,
        'iterations': 1,
        'flops': 1,
        'violation': 1,
        'clamped': 1
    }

    def __init__(
        self,
        name: str,
        samples: int,
        rate: float
    ) -> None:

        self.name = name
        self.samples = samples
        self.rate = float(rate)
        self.data = {}
        for variable, width in self.VARIABLES.items():
            self.data[variable] = np.zeros((samples, width))

    def get_data(
        self
    ) -> Any:

        return self.data

    def get_data_for_variable(
        self,
        variable: str
    ) -> np.ndarray:

        return self.data[variable]

    def get_variables(
        self
    ) -> List[str]:

        return list(self.VARIABLES.keys())

    def get_no_samples(
        self
    ) -> int:

        return self.samples

    def get_name(
        self
    ) -> str:

        return self.name

    def insert_data_point(
        self,
        variable: str,
        sample: int,
        value: Any
    ) -> None:

        self.data[variable][sample] = value

    def truncate(
        self,
        samples: int
    ) -> None:

        self.samples = samples
        for variable in self.data:
            self.data[variable] = self.data[variable][:samples]

    def violations(
        self
    ) -> int:

        return int(np.sum(self.data['violation']))

    def summary(
        self
    ) -> dict:

        error = self.data['error']
        rms = np.sqrt(np.mean(error[:, 0:3] ** 2, axis=0)) if self.samples > 0 else np.zeros(3)

        return {
            'samples': self.samples,
            'rms_x': float(rms[0]),
            'rms_y': float(rms[1]),
            'rms_z': float(rms[2]),
            'max_u_m': float(np.max(self.data['u_m'], initial=0.0)),
            'deadline_violations': self.violations(),
            'clamped': int(np.sum(self.data['clamped'])),
            'max_iterations': int(np.max(self.data['iterations'], initial=0))
        }

    def to_frame(
        self
    ) -> pd.DataFrame:

        columns = {'time [s]': self.data['time'][:, 0]}

        state_names = ['px [m]', 'py [m]', 'pz [m]', 'qw [-]', 'qx [-]', 'qy [-]', 'qz [-]',
                       'vx [m/s]', 'vy [m/s]', 'vz [m/s]', 'wx [rad/s]', 'wy [rad/s]', 'wz [rad/s]']
        reduced_names = ['x [m]', 'y [m]', 'z [m]', 'rx [-]', 'ry [-]', 'rz [-]',
                         'vx [m/s]', 'vy [m/s]', 'vz [m/s]', 'wx [rad/s]', 'wy [rad/s]', 'wz [rad/s]']

        for i, name in enumerate(state_names):
            columns[f'state {name}'] = self.data['state'][:, i]
        for i, name in enumerate(reduced_names):
            columns[f'ref {name}'] = self.data['reference'][:, i]
        for i, name in enumerate(reduced_names):
            columns[f'err {name}'] = self.data['error'][:, i]
        for i in range(4):
            columns[f'u_m{i} [-]'] = self.data['u_m'][:, i]

        columns['iterations [-]'] = self.data['iterations'][:, 0].astype(int)
        columns['flops [-]'] = self.data['flops'][:, 0]
        columns['violation [-]'] = self.data['violation'][:, 0].astype(int)
        columns['clamped [-]'] = self.data['clamped'][:, 0].astype(int)

        return pd.DataFrame(columns)

    def save_csv(
        self,
        path: str,
        config_hash: str = ''
    ) -> None:

        with open(path, 'w') as file:
            file.write(f'# sim {self.name} rate={self.rate} config={config_hash}\n')
            self.to_frame().to_csv(file, index=False)

        logger.info(f'Wrote simulation log {self.name} with {self.samples} samples to {path}')

class MpcDaqpController:

    def __init__(
        self,
        pqp: MpcParametricQP,
        cfg: MpcSolverConfig,
        name: str = 'daqp'
    ) -> None:

        self.pqp = pqp
        self.cfg = cfg
        self.name = name

    def solve(
        self,
        z_e: np.ndarray
    ):

        return mpc_step(self.pqp, z_e, self.cfg)

class MpcAdmmController:

    def __init__(
        self,
        cache: MpcAdmmCache,
        name: str = 'admm'
    ) -> None:

        self.cache = cache
        self.name = name

    def solve(
        self,
        z_e: np.ndarray
    ):

        trace = admm_solve(self.cache, z_e)
        return trace.first_input(), trace

def closed_loop(
    controller,
    trajectory: Trajectory,
    params: QuadParams,
    duration: Optional[float] = None,
    controller_rate: float = 500.0,
    deadline: Optional[float] = None,
    simulation_rate: float = 1000.0,
    initial_state: Optional[QuadState] = None,
    hover_bias: float = 0.0,
    position_bound: float = 20.0
) -> SimLog:
    '''
    Runs the controller at controller_rate on the RK4 model with zero-order
    hold. With a deadline (flops per tick), a solve whose cost exceeds it
    is discarded and the previous command held. hover_bias lowers the
    controller's hover command by that fraction.
    '''

    duration = trajectory.duration if duration is None else float(duration)
    ratio = simulation_rate / controller_rate
    substeps = int(round(ratio))

    if substeps < 1 or abs(ratio - substeps) > 1e-9:
        raise ValueError(f'Controller rate {controller_rate} must divide simulation rate {simulation_rate}')
    if not 0.0 <= hover_bias < 1.0:
        raise ValueError(f'hover_bias must lie in [0, 1), got {hover_bias}')

    dt = 1.0 / simulation_rate
    ticks = int(round(duration * controller_rate))
    u0 = params.u0 * (1.0 - hover_bias)

    state = QuadState.hover(trajectory.altitude) if initial_state is None else initial_state.copy()
    log = SimLog(getattr(controller, 'name', 'controller'), ticks, controller_rate)
    u_m = u0.copy()

    logger.info(f'Closed loop {log.name}: {ticks} ticks at {controller_rate} Hz, deadline {deadline}, hover bias {hover_bias}')

    for tick in range(ticks):

        t = tick / controller_rate
        z_r = trajectory.reference(t)

        try:
            reduced = state.to_reduced()
        except NearSingularAttitude as exception:
            log.truncate(tick)
            raise SimDiverged(f'Attitude singular at t={t}: {exception}', log)

        reduced[0:3] -= trajectory.origin
        z_e = reduced - z_r

        u, trace = controller.solve(z_e)

        violation = deadline is not None and trace.flop_estimate > deadline
        clamped = False
        if not violation:
            u_m, clamped = motor_map(u, u0)

        log.insert_data_point('time', tick, t)
        log.insert_data_point('state', tick, state.to_vector())
        log.insert_data_point('reference', tick, z_r)
        log.insert_data_point('error', tick, z_e)
        log.insert_data_point('u_m', tick, u_m)
        log.insert_data_point('iterations', tick, trace.iterations)
        log.insert_data_point('flops', tick, trace.flop_estimate)
        log.insert_data_point('violation', tick, float(violation))
        log.insert_data_point('clamped', tick, float(clamped))

        for _ in range(substeps):
            state = dynamics_step(state, u_m, params, dt)

        if not np.all(np.isfinite(state.to_vector())) or np.linalg.norm(state.p) > position_bound:
            log.truncate(tick + 1)
            logger.error(f'Simulation {log.name} diverged at t={t}')
            raise SimDiverged(f'Position {state.p} left the bound {position_bound} at t={t}', log)

    if log.violations() > 0:
        logger.warning(f'{log.violations()} deadline violations in {log.name}')

    return log

def log_error_states(
    sim: SimLog,
    rate: float = 20.0
) -> StateLog:

    if rate > sim.rate:
        raise ValueError(f'Log rate {rate} exceeds controller rate {sim.rate}')

    stride = max(int(round(sim.rate / rate)), 1)
    samples = sim.get_data_for_variable('error')[::stride]

    return StateLog(samples, rate, 'simulation')

def trajectory_from_config(
    config,
    name: str
) -> Trajectory:

    if name == 'hover':
        return HoverTrajectory(2.0 * config.STEP_HOLD, config.HOVER_ALTITUDE)

    if name == 'step':
        return StepSequence(config.STEP_WAYPOINTS, config.STEP_HOLD, config.STEP_TRANSITION, config.HOVER_ALTITUDE)

    if name == 'figure8':
        return FigureEight(config.FIGURE_EIGHT_AMPLITUDE, config.FIGURE_EIGHT_PERIOD, config.HOVER_ALTITUDE, config.FIGURE_EIGHT_RAMP)

    raise ValueError(f'Unknown trajectory {name}')
