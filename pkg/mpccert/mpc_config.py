import copy
import hashlib
import json
import logging

from typing import Any, Dict

logger = logging.getLogger('mpc_app')

class MpcConfig(object):
    '''
    Defaults of every tunable of the package. An OCP config file
    (JSON, lowercase keys) overrides single attributes, see from_json.
    '''

    # dual active-set solver
    EPS_PRIMAL = 1e-4
    EPS_DUAL = 1e-4
    MAX_ITER = 100

    # OCP
    MODEL = 'quadrotor'
    HORIZON = 15
    CONTROLLER_RATE = 500.0
    DT = None
    R_PRESET = 900
    R_PRESETS = [900, 100, 50]
    # state order: position, Rodrigues parameters, velocity, angular velocity
    QUAD_Q_DIAG = [100.0, 100.0, 400.0, 4.0, 4.0, 400.0, 4.0, 4.0, 4.0, 2.0, 2.0, 4.0]
    F = None
    G = None
    Q = None
    R = None
    A_Z = None
    A_U = None
    B_U = None
    U_MIN = None
    U_MAX = None
    THETA_BOX = None

    # ADMM baseline
    RHO = 1.0
    ADMM_TOL_PRIMAL = 1e-4
    ADMM_TOL_DUAL = 1e-4
    ADMM_MAX_ITER = 100
    ADMM_WARM_START = False

    # certification
    REGION_BUDGET = 1000000
    ROW_PRUNE_CAP = 24
    CHEBYSHEV_MIN_RADIUS = 1e-9
    THETA_BOX_B = [0.6, 1.0, 0.6, 0.5, 0.4, 0.25, 1.6, 3.0, 0.2, 7.0, 5.0, 0.45]

    # PCA parameter sets
    PCA_RATE = 20.0
    PCA_DELTA = 2.0
    VOLUME_SAMPLES = 100000

    # simulation
    SIMULATION_RATE = 1000.0
    SIM_POSITION_BOUND = 20.0
    HOVER_ALTITUDE = 1.0
    STEP_WAYPOINTS = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.0, 0.0]]
    STEP_HOLD = 4.0
    STEP_TRANSITION = 0.05
    FIGURE_EIGHT_AMPLITUDE = 0.5
    FIGURE_EIGHT_PERIOD = 7.0
    FIGURE_EIGHT_RAMP = 1.0

    SEED = 0

    def to_dict(
        self
    ) -> Dict[str, Any]:

        keys = [key for key in dir(self) if key.isupper()]
        return {key: getattr(self, key) for key in keys}

    def config_hash(
        self
    ) -> str:

        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def copy(
        self
    ) -> 'MpcConfig':

        return copy.deepcopy(self)

    def update(
        self,
        values: Dict[str, Any]
    ) -> 'MpcConfig':

        for key, value in values.items():

            attribute = key.upper()
            if not attribute.isupper() or not hasattr(MpcConfig, attribute):
                raise ValueError(f'Unknown config key {key}')

            setattr(self, attribute, value)

        return self

    def get_dt(
        self
    ) -> float:

        if self.DT is not None:
            return float(self.DT)

        return 1.0 / float(self.CONTROLLER_RATE)

    @staticmethod
    def from_json(
        path: str
    ) -> 'MpcConfig':

        with open(path, 'r') as file:
            values = json.load(file)

        logger.info(f'Read config {path} with keys {sorted(values.keys())}')

        return MpcConfig().update(values)
