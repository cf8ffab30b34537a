import hashlib
import logging
import numpy as np
import scipy.linalg

from typing import Optional, Tuple

from .mpc_errors import DimensionMismatch, NoConvergence
from .mpc_qp_core import MpcDenseQP, MpcDualQP, MpcSolverConfig, MpcSolveTrace
from .mpc_qp_core import cholesky_factor, dual_active_set_solve

logger = logging.getLogger('mpc_app')

def _symmetric(
    matrix: np.ndarray
) -> np.ndarray:

    return 0.5 * (matrix + matrix.T)

def riccati_terminal(
    F: np.ndarray,
    G: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray
) -> np.ndarray:
    '''
    Stabilizing solution of the discrete algebraic Riccati equation,
    used as terminal cost.
    '''

    F = np.atleast_2d(np.asarray(F, dtype=float))
    G = np.asarray(G, dtype=float).reshape(F.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))

    try:
        P = _symmetric(scipy.linalg.solve_discrete_are(F, G, Q, R))
    except (np.linalg.LinAlgError, ValueError) as exception:
        raise NoConvergence(f'Riccati equation has no stabilizing solution: {exception}')

    residual = np.max(np.abs(P - riccati_map(P, F, G, Q, R)))
    scale = max(1.0, np.max(np.abs(P)))

    if not np.all(np.isfinite(P)) or residual > 1e-9 * scale:
        raise NoConvergence(f'Riccati fixed-point residual {residual} too large')

    logger.debug(f'Riccati terminal cost with residual {residual}')

    return P

def riccati_map(
    P: np.ndarray,
    F: np.ndarray,
    G: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray
) -> np.ndarray:

    S = R + G.T @ P @ G
    return _symmetric(Q + F.T @ P @ F - F.T @ P @ G @ np.linalg.solve(S, G.T @ P @ F))

def lqr_gain(
    F: np.ndarray,
    G: np.ndarray,
    R: np.ndarray,
    P: np.ndarray
) -> np.ndarray:

    return np.linalg.solve(R + G.T @ P @ G, G.T @ P @ F)

class MpcOcpSpec:
    '''
    min 0.5 z_N'P z_N + 0.5 sum_k (z_k'Q z_k + u_k'R u_k)
    s.t. z_{k+1} = F z_k + G u_k,  A_z z_k + A_u u_k <= b_u,  (A_f z_N <= b_f)
    '''

    def __init__(
        self,
        F: np.ndarray,
        G: np.ndarray,
        Q: np.ndarray,
        R: np.ndarray,
        N: int,
        A_z: Optional[np.ndarray] = None,
        A_u: Optional[np.ndarray] = None,
        b_u: Optional[np.ndarray] = None,
        P: Optional[np.ndarray] = None,
        A_f: Optional[np.ndarray] = None,
        b_f: Optional[np.ndarray] = None,
        name: str = 'ocp'
    ) -> None:

        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        n_z = self.F.shape[0]
        self.G = np.asarray(G, dtype=float).reshape(n_z, -1)
        n_u = self.G.shape[1]
        self.Q = _symmetric(np.atleast_2d(np.asarray(Q, dtype=float)))
        self.R = _symmetric(np.atleast_2d(np.asarray(R, dtype=float)))
        self.N = int(N)
        self.name = name

        if self.F.shape != (n_z, n_z):
            raise DimensionMismatch(f'F must be square, got {self.F.shape}')
        if self.Q.shape != (n_z, n_z) or self.R.shape != (n_u, n_u):
            raise DimensionMismatch(f'Q {self.Q.shape} or R {self.R.shape} inconsistent with n_z={n_z}, n_u={n_u}')
        if self.N < 1:
            raise ValueError(f'Horizon must be at least 1, got {self.N}')
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-12:
            raise ValueError('Q must be positive semidefinite')
        if np.min(np.linalg.eigvalsh(self.R)) <= 0.0:
            raise ValueError('R must be positive definite')

        if A_u is None:
            A_u = np.zeros((0, n_u))
        self.A_u = np.asarray(A_u, dtype=float).reshape(-1, n_u)
        n_c = self.A_u.shape[0]
        self.A_z = np.zeros((n_c, n_z)) if A_z is None else np.asarray(A_z, dtype=float).reshape(-1, n_z)
        self.b_u = np.zeros(n_c) if b_u is None else np.asarray(b_u, dtype=float).reshape(-1)

        if self.A_z.shape[0] != n_c or self.b_u.shape != (n_c,):
            raise DimensionMismatch(f'A_z {self.A_z.shape}, A_u {self.A_u.shape}, b_u {self.b_u.shape} disagree')

        self.P = riccati_terminal(self.F, self.G, self.Q, self.R) if P is None else _symmetric(np.asarray(P, dtype=float))
        if self.P.shape != (n_z, n_z):
            raise DimensionMismatch(f'P must be {n_z}x{n_z}, got {self.P.shape}')
        if np.min(np.linalg.eigvalsh(self.P)) < -1e-9 * max(1.0, np.max(np.abs(self.P))):
            raise ValueError('P must be positive semidefinite')

        if (A_f is None) != (b_f is None):
            raise DimensionMismatch('Terminal set needs both A_f and b_f')
        self.A_f = None if A_f is None else np.asarray(A_f, dtype=float).reshape(-1, n_z)
        self.b_f = None if b_f is None else np.asarray(b_f, dtype=float).reshape(-1)
        if self.A_f is not None and self.b_f.shape != (self.A_f.shape[0],):
            raise DimensionMismatch(f'A_f {self.A_f.shape} and b_f {self.b_f.shape} disagree')

    @property
    def n_z(self):
        return self.F.shape[0]

    @property
    def n_u(self):
        return self.G.shape[1]

    @property
    def n_c(self):
        return self.A_u.shape[0]

    def checksum(
        self
    ) -> str:

        digest = hashlib.sha256()
        arrays = [self.F, self.G, self.Q, self.R, self.P, self.A_z, self.A_u, self.b_u, np.array([self.N], dtype=float)]
        if self.A_f is not None:
            arrays.extend([self.A_f, self.b_f])
        for array in arrays:
            digest.update(np.ascontiguousarray(array).tobytes())

        return digest.hexdigest()[:16]

    def input_bounds(
        self
    ) -> Tuple[np.ndarray, np.ndarray]:
        '''
        Box u_min <= u <= u_max when the constraint rows are pure input
        bounds (rows of +-identity, no state coupling).
        '''

        if np.any(self.A_z != 0.0) or self.A_f is not None:
            raise ValueError(f'OCP {self.name} has state constraints, not an input box')

        lower = np.full(self.n_u, -np.inf)
        upper = np.full(self.n_u, np.inf)

        for row, bound in zip(self.A_u, self.b_u):

            nonzero = np.flatnonzero(row)
            if len(nonzero) != 1:
                raise ValueError(f'Constraint row {row} is not a single input bound')

            i = nonzero[0]
            if row[i] > 0:
                upper[i] = min(upper[i], bound / row[i])
            else:
                lower[i] = max(lower[i], bound / row[i])

        return lower, upper

def box_input_constraints(
    u_min: np.ndarray,
    u_max: np.ndarray,
    n_z: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:

    u_min = np.asarray(u_min, dtype=float).reshape(-1)
    u_max = np.asarray(u_max, dtype=float).reshape(-1)
    n_u = len(u_min)

    A_u = np.vstack([np.eye(n_u), -np.eye(n_u)])
    A_z = np.zeros((2 * n_u, n_z))
    b_u = np.concatenate([u_max, -u_min])

    return A_z, A_u, b_u

class MpcParametricQP:
    '''
    Dense QP family with f(theta) = f_bar + F_theta theta and
    b(theta) = b_bar + W_theta theta. The Cholesky factor of H and the dual
    data are theta-independent and computed once.
    '''

    def __init__(
        self,
        H: np.ndarray,
        A: np.ndarray,
        f_bar: np.ndarray,
        F_theta: np.ndarray,
        b_bar: np.ndarray,
        W_theta: np.ndarray,
        input_dim: Optional[int] = None,
        source_checksum: str = ''
    ) -> None:

        self.H = _symmetric(np.asarray(H, dtype=float))
        n = self.H.shape[0]
        self.A = np.asarray(A, dtype=float).reshape(-1, n)
        self.f_bar = np.asarray(f_bar, dtype=float).reshape(n)
        self.F_theta = np.asarray(F_theta, dtype=float).reshape(n, -1)
        m = self.A.shape[0]
        self.b_bar = np.asarray(b_bar, dtype=float).reshape(m)
        self.W_theta = np.asarray(W_theta, dtype=float).reshape(m, -1 if m > 0 else self.F_theta.shape[1])
        self.input_dim = input_dim
        self.source_checksum = source_checksum

        if self.W_theta.shape[1] != self.F_theta.shape[1]:
            raise DimensionMismatch(f'F_theta {self.F_theta.shape} and W_theta {self.W_theta.shape} disagree on theta dimension')

        self.L = cholesky_factor(self.H)
        if m == 0:
            self.Mfac = np.zeros((0, n))
        else:
            self.Mfac = scipy.linalg.solve_triangular(self.L, self.A.T, lower=True).T
        self.gram = self.Mfac @ self.Mfac.T

        # v(theta) = V theta + v0, d(theta) = D theta + d0
        self.V = scipy.linalg.solve_triangular(self.L, self.F_theta, lower=True)
        self.v0 = scipy.linalg.solve_triangular(self.L, self.f_bar, lower=True)
        self.D = self.W_theta + self.Mfac @ self.V
        self.d0 = self.b_bar + self.Mfac @ self.v0

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def theta_dim(self):
        return self.F_theta.shape[1]

    def checksum(
        self
    ) -> str:

        digest = hashlib.sha256(self.source_checksum.encode('utf-8'))
        for array in [self.H, self.A, self.f_bar, self.F_theta, self.b_bar, self.W_theta]:
            digest.update(np.ascontiguousarray(array).tobytes())

        return digest.hexdigest()[:16]

    def _check_theta(
        self,
        theta: np.ndarray
    ) -> np.ndarray:

        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.theta_dim,):
            raise DimensionMismatch(f'theta must have length {self.theta_dim}, got {theta.shape}')
        if not np.all(np.isfinite(theta)):
            raise ValueError('theta has non-finite entries')

        return theta

    def instantiate(
        self,
        theta: np.ndarray
    ) -> MpcDenseQP:

        theta = self._check_theta(theta)

        return MpcDenseQP(
            H=self.H,
            f=self.f_bar + self.F_theta @ theta,
            A=self.A,
            b=self.b_bar + self.W_theta @ theta
        )

    def dual_at(
        self,
        theta: np.ndarray
    ) -> MpcDualQP:

        qp = self.instantiate(theta)
        theta = self._check_theta(theta)

        return MpcDualQP(
            qp=qp,
            L=self.L,
            Mfac=self.Mfac,
            v=self.V @ theta + self.v0,
            d=self.D @ theta + self.d0,
            gram=self.gram
        )

    def restrict(
        self,
        basis: np.ndarray,
        offset: Optional[np.ndarray] = None
    ) -> 'MpcParametricQP':
        '''
        Family in s with theta = basis s + offset.
        '''

        basis = np.asarray(basis, dtype=float).reshape(self.theta_dim, -1)
        offset = np.zeros(self.theta_dim) if offset is None else np.asarray(offset, dtype=float).reshape(self.theta_dim)

        return MpcParametricQP(
            H=self.H,
            A=self.A,
            f_bar=self.f_bar + self.F_theta @ offset,
            F_theta=self.F_theta @ basis,
            b_bar=self.b_bar + self.W_theta @ offset,
            W_theta=self.W_theta @ basis,
            input_dim=self.input_dim,
            source_checksum=self.checksum()
        )

def prediction_matrices(
    F: np.ndarray,
    G: np.ndarray,
    N: int
) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Stacked states [z_0; ...; z_N] = S_z z_0 + S_u [u_0; ...; u_{N-1}].
    '''

    n_z, n_u = G.shape
    S_z = np.zeros(((N + 1) * n_z, n_z))
    S_u = np.zeros(((N + 1) * n_z, N * n_u))

    power = np.eye(n_z)
    for k in range(N + 1):
        S_z[k * n_z:(k + 1) * n_z] = power
        power = F @ power

    for k in range(1, N + 1):
        S_u[k * n_z:(k + 1) * n_z] = F @ S_u[(k - 1) * n_z:k * n_z]
        S_u[k * n_z:(k + 1) * n_z, (k - 1) * n_u:k * n_u] = G

    return S_z, S_u

def condense(
    ocp: MpcOcpSpec
) -> MpcParametricQP:

    n_z, n_u, N = ocp.n_z, ocp.n_u, ocp.N

    S_z, S_u = prediction_matrices(ocp.F, ocp.G, N)
    Q_bar = scipy.linalg.block_diag(*([ocp.Q] * N + [ocp.P]))
    R_bar = scipy.linalg.block_diag(*([ocp.R] * N))

    H = _symmetric(S_u.T @ Q_bar @ S_u + R_bar)
    F_theta = S_u.T @ Q_bar @ S_z

    A_rows, W_rows, b_rows = [], [], []

    for k in range(N):
        block_z = slice(k * n_z, (k + 1) * n_z)
        selector = np.zeros((n_u, N * n_u))
        selector[:, k * n_u:(k + 1) * n_u] = np.eye(n_u)

        A_rows.append(ocp.A_z @ S_u[block_z] + ocp.A_u @ selector)
        W_rows.append(-ocp.A_z @ S_z[block_z])
        b_rows.append(ocp.b_u)

    if ocp.A_f is not None:
        block_z = slice(N * n_z, (N + 1) * n_z)
        A_rows.append(ocp.A_f @ S_u[block_z])
        W_rows.append(-ocp.A_f @ S_z[block_z])
        b_rows.append(ocp.b_f)

    A = np.vstack(A_rows)
    W_theta = np.vstack(W_rows)
    b_bar = np.concatenate(b_rows)

    logger.info(f'Condensed OCP {ocp.name}: n={N * n_u}, m={A.shape[0]}, theta_dim={n_z}')

    return MpcParametricQP(
        H=H,
        A=A,
        f_bar=np.zeros(N * n_u),
        F_theta=F_theta,
        b_bar=b_bar,
        W_theta=W_theta,
        input_dim=n_u,
        source_checksum=ocp.checksum()
    )

def instantiate(
    pqp: MpcParametricQP,
    theta: np.ndarray
) -> MpcDenseQP:

    return pqp.instantiate(theta)

def problem_checksum(
    source_checksum: str,
    theta: np.ndarray
) -> str:

    digest = hashlib.sha256(source_checksum.encode('utf-8'))
    digest.update(np.ascontiguousarray(np.asarray(theta, dtype=float)).tobytes())

    return digest.hexdigest()[:16]

def mpc_step(
    pqp: MpcParametricQP,
    theta: np.ndarray,
    cfg: MpcSolverConfig
) -> Tuple[np.ndarray, MpcSolveTrace]:

    dual = pqp.dual_at(theta)
    trace = dual_active_set_solve(dual.qp, cfg, dual)
    trace.input_dim = pqp.input_dim
    trace.problem_checksum = problem_checksum(pqp.source_checksum, theta)

    return trace.first_input(), trace

def double_integrator_ocp(
    dt: float = 0.1,
    N: int = 2,
    Q: Optional[np.ndarray] = None,
    R: Optional[np.ndarray] = None,
    u_min: float = -1.0,
    u_max: float = 1.0
) -> MpcOcpSpec:

    F = np.array([[1.0, dt], [0.0, 1.0]])
    G = np.array([[0.5 * dt * dt], [dt]])
    A_z, A_u, b_u = box_input_constraints([u_min], [u_max], 2)

    return MpcOcpSpec(
        F=F,
        G=G,
        Q=np.eye(2) if Q is None else Q,
        R=np.eye(1) if R is None else R,
        N=N,
        A_z=A_z,
        A_u=A_u,
        b_u=b_u,
        name='double_integrator'
    )

def ocp_from_config(
    config
) -> MpcOcpSpec:

    model = config.MODEL

    if model == 'double_integrator':

        dt = config.DT if config.DT is not None else 0.1
        u_min = config.U_MIN[0] if config.U_MIN is not None else -1.0
        u_max = config.U_MAX[0] if config.U_MAX is not None else 1.0

        return double_integrator_ocp(
            dt=dt,
            N=config.HORIZON,
            Q=None if config.Q is None else np.array(config.Q, dtype=float),
            R=None if config.R is None else np.array(config.R, dtype=float),
            u_min=u_min,
            u_max=u_max
        )

    if model == 'quadrotor':

        from .mpc_quad_sim import quadrotor_ocp
        return quadrotor_ocp(config)

    if model == 'custom':

        F = np.array(config.F, dtype=float)
        n_z = F.shape[0]
        A_z, A_u, b_u = config.A_Z, config.A_U, config.B_U
        if A_u is None and config.U_MIN is not None:
            A_z, A_u, b_u = box_input_constraints(config.U_MIN, config.U_MAX, n_z)

        return MpcOcpSpec(
            F=F,
            G=np.array(config.G, dtype=float),
            Q=np.array(config.Q, dtype=float),
            R=np.array(config.R, dtype=float),
            N=config.HORIZON,
            A_z=A_z,
            A_u=A_u,
            b_u=b_u,
            name='custom'
        )

    raise ValueError(f'Unknown OCP model {model}')
