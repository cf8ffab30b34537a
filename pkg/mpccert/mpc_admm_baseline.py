import hashlib
import logging
import numpy as np
import scipy.linalg

from typing import Callable, Dict, Optional, Union

from .mpc_condense import MpcOcpSpec, lqr_gain, problem_checksum
from .mpc_errors import MismatchedProblem, NumericalFailure
from .mpc_qp_core import MpcSolveTrace

logger = logging.getLogger('mpc_app')

class MpcAdmmStatus:
    CONVERGED = 'Converged'
    ITERATION_CAP = 'IterationCapReached'

def admm_iteration_flops(
    N: int,
    n_z: int,
    n_u: int
) -> int:
    '''
    Backward pass, forward rollout, projection, dual update and residuals
    of one iteration.
    '''

    backward = 2 * n_z * n_u + 2 * n_u * n_u + 2 * n_z * n_z + 2 * n_z * n_u
    forward = 2 * n_u * n_z + n_u + 2 * n_z * n_z + 2 * n_z * n_u
    update = 6 * n_u

    return N * (backward + forward + update)

class MpcAdmmCache:
    '''
    Time-varying Riccati gains of the input-box constrained LQR problem with
    input weight R + rho I. Everything theta-independent lives here so a
    solve performs no factorization.
    '''

    def __init__(
        self,
        ocp: MpcOcpSpec,
        rho: float,
        K: np.ndarray,
        C1: np.ndarray,
        A_cl: np.ndarray,
        u_min: np.ndarray,
        u_max: np.ndarray,
        tol_primal: float = 1e-4,
        tol_dual: float = 1e-4,
        max_iter: int = 100,
        warm_start: bool = False
    ) -> None:

        self.F = ocp.F
        self.G = ocp.G
        self.N = ocp.N
        self.rho = float(rho)
        self.K = K
        self.C1 = C1
        self.A_cl = A_cl
        self.u_min = u_min
        self.u_max = u_max
        self.tol_primal = tol_primal
        self.tol_dual = tol_dual
        self.max_iter = max_iter
        self.warm_start = warm_start
        self.source_checksum = ocp.checksum()

        self._w = None
        self._y = None

    @property
    def n_z(self):
        return self.F.shape[0]

    @property
    def n_u(self):
        return self.G.shape[1]

    def checksum(
        self
    ) -> str:

        digest = hashlib.sha256(self.source_checksum.encode('utf-8'))
        for array in [self.K, self.C1, self.A_cl, np.array([self.rho])]:
            digest.update(np.ascontiguousarray(array).tobytes())

        return digest.hexdigest()[:16]

    def reset(
        self
    ) -> None:

        self._w = None
        self._y = None

def build_admm_cache(
    ocp: MpcOcpSpec,
    rho: float = 1.0,
    tol_primal: float = 1e-4,
    tol_dual: float = 1e-4,
    max_iter: int = 100,
    warm_start: bool = False
) -> MpcAdmmCache:

    if rho <= 0.0:
        raise ValueError(f'rho must be positive, got {rho}')
    if tol_primal <= 0.0 or tol_dual <= 0.0:
        raise ValueError(f'Tolerances must be positive, got {tol_primal}, {tol_dual}')

    F, G, N = ocp.F, ocp.G, ocp.N
    n_z, n_u = ocp.n_z, ocp.n_u

    # closed loop of the infinite-horizon law must be stable
    K_inf = lqr_gain(F, G, ocp.R, ocp.P)
    spectral_radius = np.max(np.abs(np.linalg.eigvals(F - G @ K_inf)))
    if not np.isfinite(spectral_radius) or spectral_radius >= 1.0:
        raise NumericalFailure(f'(F, G) not stabilizable: closed-loop spectral radius {spectral_radius}')

    u_min, u_max = ocp.input_bounds()
    R_rho = ocp.R + rho * np.eye(n_u)

    K = np.zeros((N, n_u, n_z))
    C1 = np.zeros((N, n_u, n_u))
    A_cl = np.zeros((N, n_z, n_z))

    P = ocp.P
    for k in reversed(range(N)):

        S = R_rho + G.T @ P @ G
        try:
            factor = scipy.linalg.cho_factor(S)
        except np.linalg.LinAlgError as exception:
            raise NumericalFailure(f'Riccati step {k} not positive definite: {exception}')

        C1[k] = scipy.linalg.cho_solve(factor, np.eye(n_u))
        K[k] = C1[k] @ G.T @ P @ F
        A_cl[k] = F - G @ K[k]
        P = ocp.Q + F.T @ P @ A_cl[k]
        P = 0.5 * (P + P.T)

    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(A_cl))):
        raise NumericalFailure('Non-finite ADMM gains')

    cache = MpcAdmmCache(
        ocp=ocp,
        rho=rho,
        K=K,
        C1=C1,
        A_cl=A_cl,
        u_min=np.tile(u_min, (N, 1)),
        u_max=np.tile(u_max, (N, 1)),
        tol_primal=tol_primal,
        tol_dual=tol_dual,
        max_iter=max_iter,
        warm_start=warm_start
    )

    logger.info(f'Built ADMM cache for {ocp.name}: N={N}, rho={rho}, checksum {cache.checksum()}')

    return cache

def build_admm_cache_from_config(
    ocp: MpcOcpSpec,
    config
) -> MpcAdmmCache:

    return build_admm_cache(
        ocp,
        rho=config.RHO,
        tol_primal=config.ADMM_TOL_PRIMAL,
        tol_dual=config.ADMM_TOL_DUAL,
        max_iter=config.ADMM_MAX_ITER,
        warm_start=config.ADMM_WARM_START
    )

class MpcAdmmTrace:

    def __init__(
        self,
        u_sequence: np.ndarray,
        iterations: int,
        primal_residual: float,
        dual_residual: float,
        status: str,
        flop_estimate: float = 0.0,
        problem_checksum: Optional[str] = None
    ) -> None:

        self.u_sequence = u_sequence
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        self.status = status
        self.flop_estimate = flop_estimate
        self.problem_checksum = problem_checksum

    def is_converged(
        self
    ) -> bool:

        return self.status == MpcAdmmStatus.CONVERGED

    def first_input(
        self
    ) -> np.ndarray:

        return self.u_sequence[0].copy()

def _backward_pass(
    cache: MpcAdmmCache,
    r: np.ndarray
) -> np.ndarray:

    N, n_u = cache.N, cache.n_u
    d = np.zeros((N, n_u))
    p = np.zeros(cache.n_z)

    for k in reversed(range(N)):
        d[k] = cache.C1[k] @ (cache.G.T @ p + r[k])
        p = cache.A_cl[k].T @ p - cache.K[k].T @ r[k]

    return d

def _forward_pass(
    cache: MpcAdmmCache,
    theta: np.ndarray,
    d: np.ndarray
) -> np.ndarray:

    u = np.zeros((cache.N, cache.n_u))
    z = theta.copy()

    for k in range(cache.N):
        u[k] = -cache.K[k] @ z - d[k]
        z = cache.F @ z + cache.G @ u[k]

    return u

def admm_solve(
    cache: MpcAdmmCache,
    theta: np.ndarray,
    max_iter: Optional[int] = None
) -> MpcAdmmTrace:
    '''
    ADMM on the input-box constrained problem: Riccati equality solve,
    projection of u + y onto the box, scaled dual update.
    '''

    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape != (cache.n_z,):
        raise ValueError(f'theta must have length {cache.n_z}, got {theta.shape}')

    max_iter = cache.max_iter if max_iter is None else max_iter
    rho = cache.rho

    if cache.warm_start and cache._w is not None:
        w, y = cache._w.copy(), cache._y.copy()
    else:
        w = np.clip(np.zeros((cache.N, cache.n_u)), cache.u_min, cache.u_max)
        y = np.zeros((cache.N, cache.n_u))

    status = MpcAdmmStatus.ITERATION_CAP
    primal_residual = dual_residual = np.inf
    iterations = 0

    while iterations < max_iter:

        iterations += 1

        r = -rho * (w - y)
        u = _forward_pass(cache, theta, _backward_pass(cache, r))

        w_prev = w
        w = np.clip(u + y, cache.u_min, cache.u_max)
        y = y + u - w

        primal_residual = float(np.max(np.abs(u - w)))
        dual_residual = float(rho * np.max(np.abs(w - w_prev)))

        if primal_residual <= cache.tol_primal and dual_residual <= cache.tol_dual:
            status = MpcAdmmStatus.CONVERGED
            break

    if cache.warm_start:
        cache._w, cache._y = w.copy(), y.copy()

    if status != MpcAdmmStatus.CONVERGED:
        logger.debug(f'ADMM stopped at the iteration cap {max_iter} with residuals {primal_residual}, {dual_residual}')

    return MpcAdmmTrace(
        u_sequence=w,
        iterations=iterations,
        primal_residual=primal_residual,
        dual_residual=dual_residual,
        status=status,
        flop_estimate=float(iterations * admm_iteration_flops(cache.N, cache.n_z, cache.n_u)),
        problem_checksum=problem_checksum(cache.source_checksum, theta)
    )

def admm_program(
    cache: MpcAdmmCache
) -> Callable:

    def program(theta):
        return admm_solve(cache, theta)

    return program

def compare_traces(
    a: Union[MpcSolveTrace, MpcAdmmTrace],
    b: Union[MpcSolveTrace, MpcAdmmTrace]
) -> Dict[str, float]:
    '''
    Differences b - a of flop estimate and iteration count, and the
    infinity-norm distance of the first inputs.
    '''

    if a.problem_checksum != b.problem_checksum:
        raise MismatchedProblem(f'Traces solve different problems: {a.problem_checksum} and {b.problem_checksum}')

    return {
        'flop_difference': float(b.flop_estimate - a.flop_estimate),
        'iteration_difference': int(b.iterations - a.iterations),
        'input_difference': float(np.max(np.abs(b.first_input() - a.first_input()), initial=0.0))
    }
