import json
import logging
import numpy as np
import pandas as pd

from typing import List, Optional, Tuple

from .mpc_errors import DegenerateData
from .mpc_polyhedron import MpcPolyhedron

logger = logging.getLogger('mpc_app')

# error state columns of the quadrotor, with units
ERROR_STATE_COLUMNS = [
    'x [m]', 'y [m]', 'z [m]',
    'rx [-]', 'ry [-]', 'rz [-]',
    'vx [m/s]', 'vy [m/s]', 'vz [m/s]',
    'wx [rad/s]', 'wy [rad/s]', 'wz [rad/s]'
]

CONTAINS_TOLERANCE = 1e-12

class StateLog:
    '''
    Logged error states, one row per sample.
    '''

    def __init__(
        self,
        samples: np.ndarray,
        rate: float = 20.0,
        source: str = 'simulation',
        columns: Optional[List[str]] = None
    ) -> None:

        self.samples = np.atleast_2d(np.asarray(samples, dtype=float))
        self.rate = float(rate)
        self.source = source

        if self.samples.shape[0] < 2:
            raise ValueError(f'State log needs at least 2 samples, got {self.samples.shape[0]}')
        if not np.all(np.isfinite(self.samples)):
            raise ValueError('State log has non-finite entries')

        if columns is None:
            n = self.samples.shape[1]
            columns = ERROR_STATE_COLUMNS if n == len(ERROR_STATE_COLUMNS) else [f'z{i}' for i in range(n)]
        if len(columns) != self.samples.shape[1]:
            raise ValueError(f'{len(columns)} column names for {self.samples.shape[1]} columns')

        self.columns = list(columns)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    def save_csv(
        self,
        path: str,
        config_hash: str = ''
    ) -> None:

        frame = pd.DataFrame(self.samples, columns=self.columns)
        with open(path, 'w') as file:
            file.write(f'# state_log source={self.source} rate={self.rate} config={config_hash}\n')
            frame.to_csv(file, index=False)

        logger.info(f'Wrote state log with {len(self)} samples ({self.source}, {self.rate} Hz) to {path}')

    @staticmethod
    def load_csv(
        path: str,
        rate: float = 20.0,
        source: str = 'flight'
    ) -> 'StateLog':

        frame = pd.read_csv(path, comment='#')

        return StateLog(frame.to_numpy(dtype=float), rate, source, list(frame.columns))

class MpcPcaBox:
    '''
    Rotated hyper-rectangle {z : z_lo <= U'(z - mu) <= z_hi} in the form
    A_p z <= b_p with A_p = [U'; -U'].
    '''

    def __init__(
        self,
        U: np.ndarray,
        mu: np.ndarray,
        z_lo: np.ndarray,
        z_hi: np.ndarray,
        delta: float
    ) -> None:

        self.U = np.asarray(U, dtype=float)
        self.mu = np.asarray(mu, dtype=float).reshape(-1)
        self.z_lo = np.asarray(z_lo, dtype=float).reshape(-1)
        self.z_hi = np.asarray(z_hi, dtype=float).reshape(-1)
        self.delta = float(delta)

        shift = self.U.T @ self.mu
        self.A_p = np.vstack([self.U.T, -self.U.T])
        self.b_p = np.concatenate([self.z_hi + shift, -(self.z_lo + shift)])

    @property
    def dim(self):
        return self.U.shape[0]

    def volume(
        self
    ) -> float:

        return float(np.prod(self.z_hi - self.z_lo))

    def bounding_box(
        self
    ) -> Tuple[np.ndarray, np.ndarray]:

        center = self.mu + self.U @ (0.5 * (self.z_lo + self.z_hi))
        half = np.abs(self.U) @ (0.5 * (self.z_hi - self.z_lo))

        return center - half, center + half

    def to_dict(
        self
    ) -> dict:

        return {
            'U': self.U.tolist(),
            'mu': self.mu.tolist(),
            'z_lo': self.z_lo.tolist(),
            'z_hi': self.z_hi.tolist(),
            'delta': self.delta
        }

    @staticmethod
    def from_dict(
        document: dict
    ) -> 'MpcPcaBox':

        return MpcPcaBox(
            U=np.array(document['U'], dtype=float),
            mu=np.array(document['mu'], dtype=float),
            z_lo=np.array(document['z_lo'], dtype=float),
            z_hi=np.array(document['z_hi'], dtype=float),
            delta=document['delta']
        )

def _fix_signs(
    U: np.ndarray
) -> np.ndarray:
    '''
    Flips columns so that the largest-magnitude entry of each is positive.
    '''

    U = U.copy()
    for j in range(U.shape[1]):
        i = int(np.argmax(np.abs(U[:, j])))
        if U[i, j] < 0.0:
            U[:, j] = -U[:, j]

    return U

def build_pca_box(
    log: StateLog,
    delta: float = 2.0,
    strict: bool = False
) -> MpcPcaBox:

    if delta < 0.0:
        raise ValueError(f'delta must be nonnegative, got {delta}')

    Z = log.samples
    mu = np.mean(Z, axis=0)
    centered = (Z - mu).T

    if np.max(np.abs(centered), initial=0.0) == 0.0:
        message = f'All {len(log)} samples are identical'
        if strict:
            raise DegenerateData(message)
        logger.warning(f'{message}, using the identity basis')
        U = np.eye(log.dim)
    else:
        U, _, _ = np.linalg.svd(centered, full_matrices=True)
        U = _fix_signs(U)

    rotated = (Z - mu) @ U
    lower = np.min(rotated, axis=0)
    upper = np.max(rotated, axis=0)
    width = upper - lower

    box = MpcPcaBox(U, mu, lower - delta * width, upper + delta * width, delta)

    logger.info(f'Built PCA box from {len(log)} samples with delta={delta}, volume {box.volume():.3e}')

    return box

def contains(
    box: MpcPcaBox,
    z: np.ndarray,
    tol: float = CONTAINS_TOLERANCE
) -> bool:

    z = np.asarray(z, dtype=float).reshape(-1)

    return bool(np.all(box.A_p @ z <= box.b_p + tol))

def box_to_polyhedron(
    box: MpcPcaBox
) -> MpcPolyhedron:

    return MpcPolyhedron(box.A_p, box.b_p)

def data_bounds(
    log: StateLog,
    delta: float = 0.0
) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Axis-aligned box of the samples, inflated like the PCA box.
    '''

    lower = np.min(log.samples, axis=0)
    upper = np.max(log.samples, axis=0)
    width = upper - lower

    return lower - delta * width, upper + delta * width

def volume_ratio(
    box: MpcPcaBox,
    lower: np.ndarray,
    upper: np.ndarray
) -> float:
    '''
    vol(PCA box) / vol([lower, upper]). Both sets are boxes and the
    rotation keeps volume, so the ratio is a ratio of width products,
    taken in log space for 12-d boxes with small widths.
    '''

    widths = np.asarray(upper, dtype=float) - np.asarray(lower, dtype=float)
    box_widths = box.z_hi - box.z_lo

    if widths.shape != box_widths.shape:
        raise ValueError(f'Reference box has dimension {widths.shape}, PCA box {box_widths.shape}')
    if np.min(widths) <= 0.0:
        raise DegenerateData(f'Reference box has zero width in coordinates {np.flatnonzero(widths <= 0.0).tolist()}')
    if np.min(box_widths) <= 0.0:
        return 0.0

    return float(np.exp(np.sum(np.log(box_widths)) - np.sum(np.log(widths))))

def sample_pca_box(
    box: MpcPcaBox,
    count: int,
    rng: np.random.Generator
) -> np.ndarray:

    rotated = rng.uniform(box.z_lo, box.z_hi, size=(count, box.dim))

    return box.mu + rotated @ box.U.T

def estimate_volume_ratio(
    box: MpcPcaBox,
    lower: np.ndarray,
    upper: np.ndarray,
    count: int = 100000,
    seed: int = 0
) -> float:
    '''
    Monte-Carlo cross-check of volume_ratio: with I the intersection,
    P(reference sample in box) / P(box sample in reference)
    = (vol(I) / vol(ref)) / (vol(I) / vol(box)).
    '''

    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = np.random.default_rng(seed)

    reference = MpcPolyhedron.from_box(lower, upper)
    reference_in_box = np.mean(box_to_polyhedron(box).contains_many(rng.uniform(lower, upper, size=(count, len(lower))), tol=CONTAINS_TOLERANCE))
    box_in_reference = np.mean(reference.contains_many(sample_pca_box(box, count, rng), tol=CONTAINS_TOLERANCE))

    if box_in_reference == 0.0:
        raise DegenerateData(f'No sample of the PCA box fell inside the reference box in {count} draws')

    return float(reference_in_box / box_in_reference)

def save_pca_box(
    box: MpcPcaBox,
    path: str
) -> None:

    with open(path, 'w') as file:
        json.dump(box.to_dict(), file, indent=2)

    logger.info(f'Wrote PCA box to {path}')

def load_pca_box(
    path: str
) -> MpcPcaBox:

    with open(path, 'r') as file:
        return MpcPcaBox.from_dict(json.load(file))
