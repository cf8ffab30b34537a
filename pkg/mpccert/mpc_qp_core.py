import hashlib
import itertools
import json
import logging
import math
import numpy as np
import scipy.linalg

from typing import Iterable, List, Optional, Tuple

from .mpc_errors import EnumerationTooLarge, NoKktPoint, NumericalFailure, SingularKKT

logger = logging.getLogger('mpc_app')

# relative pivot below which a working-set row counts as linearly dependent
PIVOT_TOLERANCE = 1e-12
# violations / ratios closer than this are ties, resolved by lowest index
TIE_TOLERANCE = 1e-12
ENUMERATION_LIMIT = 1000000

class MpcSolveStatus:
    OPTIMAL = 'Optimal'
    ITERATION_CAP = 'IterationCapReached'
    INFEASIBLE = 'InfeasibleDetected'
    NUMERICAL_FAILURE = 'NumericalFailure'

class MpcDenseQP:
    '''
    min 0.5 x'Hx + f'x  s.t.  Ax <= b
    '''

    def __init__(
        self,
        H: np.ndarray,
        f: np.ndarray,
        A: np.ndarray,
        b: np.ndarray
    ) -> None:

        self.H = np.atleast_2d(np.asarray(H, dtype=float))
        self.f = np.asarray(f, dtype=float).reshape(-1)
        n = self.H.shape[0]
        self.A = np.asarray(A, dtype=float).reshape(-1, n)
        self.b = np.asarray(b, dtype=float).reshape(-1)

        if self.H.shape != (n, n):
            raise ValueError(f'H must be square, got {self.H.shape}')
        if self.f.shape != (n,):
            raise ValueError(f'f must have length {n}, got {self.f.shape}')
        if self.b.shape != (self.A.shape[0],):
            raise ValueError(f'b must have length {self.A.shape[0]}, got {self.b.shape}')

        for name, array in [('H', self.H), ('f', self.f), ('A', self.A), ('b', self.b)]:
            if not np.all(np.isfinite(array)):
                raise ValueError(f'{name} has non-finite entries')

    @property
    def n(self):
        return self.H.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    def checksum(
        self
    ) -> str:

        digest = hashlib.sha256()
        for array in [self.H, self.f, self.A, self.b]:
            digest.update(np.ascontiguousarray(array).tobytes())

        return digest.hexdigest()[:16]

class MpcDualQP:
    '''
    Dual data of a MpcDenseQP: with H = LL', Mfac = A L^-T, v = L^-1 f and
    d = b + A H^-1 f = b + Mfac v. The Gram matrix Mfac Mfac' is kept so that
    working-set rows are lookups.
    '''

    def __init__(
        self,
        qp: MpcDenseQP,
        L: np.ndarray,
        Mfac: np.ndarray,
        v: np.ndarray,
        d: np.ndarray,
        gram: np.ndarray
    ) -> None:

        self.qp = qp
        self.L = L
        self.Mfac = Mfac
        self.v = v
        self.d = d
        self.gram = gram

    def recover_primal(
        self,
        indices: List[int],
        lam_w: np.ndarray
    ) -> np.ndarray:

        rhs = self.v + self.Mfac[indices].T @ lam_w if len(indices) > 0 else self.v.copy()
        return -scipy.linalg.solve_triangular(self.L, rhs, lower=True, trans='T')

def cholesky_factor(
    H: np.ndarray
) -> np.ndarray:

    try:
        return scipy.linalg.cholesky(H, lower=True)
    except np.linalg.LinAlgError as exception:
        raise NumericalFailure(f'Hessian is not positive definite: {exception}')

def to_dual(
    qp: MpcDenseQP,
    L: Optional[np.ndarray] = None
) -> MpcDualQP:

    if L is None:
        L = cholesky_factor(qp.H)

    if qp.m == 0:
        Mfac = np.zeros((0, qp.n))
    else:
        Mfac = scipy.linalg.solve_triangular(L, qp.A.T, lower=True).T
    v = scipy.linalg.solve_triangular(L, qp.f, lower=True)
    d = qp.b + Mfac @ v

    return MpcDualQP(qp, L, Mfac, v, d, Mfac @ Mfac.T)

class MpcWorkingSet:
    '''
    Ordered set of distinct constraint indices (0-based), insertion order kept.
    '''

    def __init__(
        self,
        indices: Iterable[int] = (),
        m: Optional[int] = None
    ) -> None:

        self.indices = tuple(int(index) for index in indices)

        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f'Working set has duplicates {self.indices}')
        if m is not None and any(index < 0 or index >= m for index in self.indices):
            raise ValueError(f'Working set {self.indices} out of range for m={m}')

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, index):
        return index in self.indices

    def __eq__(self, other):
        if isinstance(other, MpcWorkingSet):
            return self.indices == other.indices
        return self.indices == tuple(other)

    def __hash__(self):
        return hash(self.indices)

    def __repr__(self):
        return f'MpcWorkingSet({list(self.indices)})'

    def to_list(
        self
    ) -> List[int]:

        return list(self.indices)

class MpcSolverConfig:

    def __init__(
        self,
        eps_primal: float = 1e-4,
        eps_dual: float = 1e-4,
        max_iter: int = 100,
        initial_ws: Iterable[int] = ()
    ) -> None:

        if eps_primal <= 0 or eps_dual <= 0:
            raise ValueError(f'Tolerances must be positive, got {eps_primal}, {eps_dual}')
        if max_iter < 1:
            raise ValueError(f'max_iter must be at least 1, got {max_iter}')

        self.eps_primal = float(eps_primal)
        self.eps_dual = float(eps_dual)
        self.max_iter = int(max_iter)
        self.initial_ws = MpcWorkingSet(initial_ws)

    @staticmethod
    def from_config(
        config
    ) -> 'MpcSolverConfig':

        return MpcSolverConfig(
            eps_primal=config.EPS_PRIMAL,
            eps_dual=config.EPS_DUAL,
            max_iter=config.MAX_ITER
        )

class MpcSolveTrace:

    def __init__(
        self,
        x_star: np.ndarray,
        lambda_star: np.ndarray,
        ws_sequence: List[MpcWorkingSet],
        status: str,
        flop_estimate: float = 0.0,
        problem_checksum: Optional[str] = None,
        input_dim: Optional[int] = None
    ) -> None:

        self.x_star = x_star
        self.lambda_star = lambda_star
        self.ws_sequence = ws_sequence
        self.status = status
        self.flop_estimate = flop_estimate
        self.problem_checksum = problem_checksum
        self.input_dim = input_dim

    @property
    def iterations(self):
        return len(self.ws_sequence) - 1

    @property
    def active_set(self):
        return self.ws_sequence[-1]

    def is_optimal(
        self
    ) -> bool:

        return self.status == MpcSolveStatus.OPTIMAL

    def first_input(
        self
    ) -> np.ndarray:

        if self.input_dim is None:
            return self.x_star.copy()

        return self.x_star[:self.input_dim].copy()

def cholesky_rank_one_update(
    L: np.ndarray,
    x: np.ndarray
) -> np.ndarray:
    '''
    Returns the lower factor of L L' + x x'.
    '''

    L = L.copy()
    x = x.copy()
    size = L.shape[0]

    for k in range(size):
        r = math.hypot(L[k, k], x[k])
        c = r / L[k, k]
        s = x[k] / L[k, k]
        L[k, k] = r
        if k + 1 < size:
            L[k + 1:, k] = (L[k + 1:, k] + s * x[k + 1:]) / c
            x[k + 1:] = c * x[k + 1:] - s * L[k + 1:, k]

    return L

class MpcWorkingSetFactor:
    '''
    Cholesky factor of the working-set block of the dual Gram matrix,
    updated when a row is appended and downdated when one is removed.
    '''

    def __init__(
        self,
        gram: np.ndarray
    ) -> None:

        self.gram = gram
        self.indices: List[int] = []
        self.L = np.zeros((0, 0))

    def copy(
        self
    ) -> 'MpcWorkingSetFactor':

        factor = MpcWorkingSetFactor(self.gram)
        factor.indices = list(self.indices)
        factor.L = self.L.copy()

        return factor

    def _candidate(
        self,
        index: int
    ) -> Tuple[np.ndarray, float]:

        if len(self.indices) == 0:
            return np.zeros(0), self.gram[index, index]

        column = self.gram[self.indices, index]
        row = scipy.linalg.solve_triangular(self.L, column, lower=True)

        return row, self.gram[index, index] - row @ row

    def is_addable(
        self,
        index: int
    ) -> bool:

        _, pivot = self._candidate(index)
        return pivot > PIVOT_TOLERANCE * max(1.0, self.gram[index, index])

    def add(
        self,
        index: int
    ) -> None:

        if index in self.indices:
            raise ValueError(f'Index {index} already in working set')

        row, pivot = self._candidate(index)
        if pivot <= PIVOT_TOLERANCE * max(1.0, self.gram[index, index]):
            raise SingularKKT(f'Constraint {index} is linearly dependent on {self.indices}')

        size = len(self.indices)
        L = np.zeros((size + 1, size + 1))
        L[:size, :size] = self.L
        L[size, :size] = row
        L[size, size] = math.sqrt(pivot)

        self.L = L
        self.indices.append(index)

    def remove(
        self,
        index: int
    ) -> None:

        k = self.indices.index(index)
        L = self.L
        size = L.shape[0]

        keep = [position for position in range(size) if position != k]
        reduced = L[np.ix_(keep, keep)].copy()

        if k + 1 < size:
            reduced[k:, k:] = cholesky_rank_one_update(L[k + 1:, k + 1:], L[k + 1:, k])

        self.L = reduced
        del self.indices[k]

    def solve(
        self,
        rhs: np.ndarray
    ) -> np.ndarray:

        if len(self.indices) == 0:
            return np.zeros(0)

        y = scipy.linalg.solve_triangular(self.L, rhs, lower=True)
        return scipy.linalg.solve_triangular(self.L, y, lower=True, trans='T')

def rank_descending(
    values: np.ndarray,
    candidates: Iterable[int]
) -> List[int]:
    '''
    Candidates by decreasing value; values within TIE_TOLERANCE of the
    current maximum are taken lowest index first.
    '''

    remaining = sorted(int(index) for index in candidates)
    ranked = []

    while remaining:
        top = max(values[index] for index in remaining)
        group = [index for index in remaining if values[index] >= top - TIE_TOLERANCE]
        ranked.extend(group)
        remaining = [index for index in remaining if index not in group]

    return ranked

def argmin_lowest_index(
    ratios: np.ndarray,
    indices: List[int]
) -> int:

    best = np.min(ratios)
    tied = [indices[position] for position in range(len(indices)) if ratios[position] <= best + TIE_TOLERANCE]

    return min(tied)

def solve_kkt(
    qp: MpcDenseQP,
    W: Iterable[int],
    dual: Optional[MpcDualQP] = None
) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Solves H x + A_W' lam_W = -f, A_W x = b_W through the dual Schur
    complement. Multipliers are nonnegative at an optimum.
    '''

    if dual is None:
        dual = to_dual(qp)

    indices = list(MpcWorkingSet(W, qp.m))
    factor = MpcWorkingSetFactor(dual.gram)
    for index in indices:
        factor.add(index)

    lam_w = -factor.solve(dual.d[indices])
    x = dual.recover_primal(indices, lam_w)

    return x, lam_w

def check_kkt(
    qp: MpcDenseQP,
    x: np.ndarray,
    lam: np.ndarray,
    eps_p: float,
    eps_d: float
) -> bool:

    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)

    if x.shape != (qp.n,) or lam.shape != (qp.m,):
        raise ValueError(f'Dimension mismatch x {x.shape}, lambda {lam.shape} for n={qp.n}, m={qp.m}')

    stationarity = np.max(np.abs(qp.H @ x + qp.A.T @ lam + qp.f), initial=0.0)
    residual = qp.A @ x - qp.b
    primal = np.max(residual, initial=-np.inf)
    dual = np.min(lam, initial=np.inf)
    complementarity = np.max(np.abs(lam * residual), initial=0.0)
    b_scale = 1.0 + np.max(np.abs(qp.b), initial=0.0)

    return bool(stationarity <= eps_d
                and primal <= eps_p
                and dual >= -eps_d
                and complementarity <= eps_p * b_scale)

def dual_active_set_solve(
    qp: MpcDenseQP,
    cfg: MpcSolverConfig,
    dual: Optional[MpcDualQP] = None
) -> MpcSolveTrace:
    '''
    Dual active-set method. The working set grows by the most violated
    independent constraint while the dual candidate is nonnegative and
    shrinks by the ratio-test blocking index otherwise. A violated
    constraint that is dependent on the working set is handled by a pure
    dual step that drops the blocking index; it enters on the next iteration.
    '''

    m = qp.m

    if dual is None:
        try:
            dual = to_dual(qp)
        except NumericalFailure as exception:
            logger.error(f'Dual transform failed: {exception}')
            return MpcSolveTrace(np.full(qp.n, np.nan), np.zeros(m), [cfg.initial_ws], MpcSolveStatus.NUMERICAL_FAILURE)

    d = dual.d
    gram = dual.gram

    factor = MpcWorkingSetFactor(gram)
    lam = np.zeros(m)
    pending = None
    status = None
    sequence = [MpcWorkingSet(cfg.initial_ws, m)]

    try:

        for index in cfg.initial_ws:
            factor.add(index)

        k = 0
        while status is None:

            if pending is not None:

                if k >= cfg.max_iter:
                    status = MpcSolveStatus.ITERATION_CAP
                    break

                factor.add(pending)
                pending = None
                k += 1
                sequence.append(MpcWorkingSet(factor.indices))
                continue

            W = list(factor.indices)
            lam_star = -factor.solve(d[W])

            if len(W) == 0 or np.min(lam_star) >= -cfg.eps_dual:

                lam[:] = 0.0
                lam[W] = lam_star

                slack = -d - gram[:, W] @ lam_star if len(W) > 0 else -d.copy()
                slack[W] = -np.inf
                violated = np.flatnonzero(slack > cfg.eps_primal)

                if len(violated) == 0:
                    status = MpcSolveStatus.OPTIMAL
                    break

                if k >= cfg.max_iter:
                    status = MpcSolveStatus.ITERATION_CAP
                    break

                ranked = rank_descending(slack, violated)
                chosen = next((index for index in ranked if factor.is_addable(index)), None)

                if chosen is not None:

                    factor.add(chosen)

                else:

                    index = ranked[0]
                    c = factor.solve(gram[W, index])
                    positions = [position for position in range(len(W)) if c[position] > PIVOT_TOLERANCE]

                    if len(positions) == 0:
                        status = MpcSolveStatus.INFEASIBLE
                        break

                    ratios = np.array([lam[W[position]] / c[position] for position in positions])
                    blocking = argmin_lowest_index(ratios, [W[position] for position in positions])
                    step = lam[blocking] / c[W.index(blocking)]

                    lam[W] -= step * c
                    lam[blocking] = 0.0
                    lam[index] = step
                    factor.remove(blocking)
                    pending = index

            else:

                if k >= cfg.max_iter:
                    status = MpcSolveStatus.ITERATION_CAP
                    break

                p = lam_star - lam[W]
                negative = [position for position in range(len(W)) if lam_star[position] < -cfg.eps_dual]
                ratios = np.array([lam[W[position]] / -p[position] for position in negative])
                blocking = argmin_lowest_index(ratios, [W[position] for position in negative])
                alpha = lam[blocking] / -p[W.index(blocking)]

                lam[W] += alpha * p
                lam[blocking] = 0.0
                factor.remove(blocking)

            k += 1
            sequence.append(MpcWorkingSet(factor.indices))

    except (SingularKKT, np.linalg.LinAlgError, ValueError) as exception:

        logger.error(f'Numerical failure in dual active-set iteration: {exception}')
        status = MpcSolveStatus.NUMERICAL_FAILURE

    W = list(factor.indices)
    x = dual.recover_primal(W, lam[W])

    trace = MpcSolveTrace(
        x_star=x,
        lambda_star=lam.copy(),
        ws_sequence=sequence,
        status=status
    )
    trace.flop_estimate = cost_model(trace, qp.n, m)

    logger.debug(f'Dual active-set solve finished with {status} after {trace.iterations} iterations')

    return trace

def brute_force_solve(
    qp: MpcDenseQP,
    tol: float = 1e-9
) -> Tuple[np.ndarray, np.ndarray, MpcWorkingSet]:
    '''
    Testing oracle: enumerates every working set of size <= n.
    '''

    n, m = qp.n, qp.m
    count = sum(math.comb(m, size) for size in range(min(n, m) + 1))
    if count > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(f'{count} candidate working sets for n={n}, m={m}')

    dual = to_dual(qp)
    b_scale = 1.0 + np.max(np.abs(qp.b), initial=0.0)

    for size in range(min(n, m) + 1):
        for subset in itertools.combinations(range(m), size):

            indices = list(subset)

            if size > 0:
                block = dual.gram[np.ix_(indices, indices)]
                eigenvalues = np.linalg.eigvalsh(block)
                if eigenvalues[0] <= PIVOT_TOLERANCE * max(1.0, eigenvalues[-1]):
                    continue
                lam_w = -np.linalg.solve(block, dual.d[indices])
                if np.min(lam_w) < -tol:
                    continue
                slack = -dual.d - dual.gram[:, indices] @ lam_w
            else:
                lam_w = np.zeros(0)
                slack = -dual.d

            if np.max(slack, initial=-np.inf) > tol * b_scale:
                continue

            lam = np.zeros(m)
            lam[indices] = lam_w
            x = dual.recover_primal(indices, lam_w)

            return x, lam, MpcWorkingSet(indices)

    raise NoKktPoint(f'No KKT point among {count} working sets')

def setup_flops(
    n: int,
    m: int
) -> float:

    # v = L^-1 f, d = b + Mfac v, initial scan, primal recovery
    return float(n * n + 2 * m * n + m + n * n)

def iteration_flops(
    n: int,
    m: int,
    w: int
) -> float:

    # new Gram row, factor update, two triangular solves, slack update and scan
    return float(2 * n * w + w * w + 2 * w * w + 2 * m * w + m)

def cost_model(
    trace: MpcSolveTrace,
    n: int,
    m: int
) -> float:
    '''
    Hardware-independent cost of a dual active-set solve:
    setup_flops(n, m) + sum over iterations j >= 1 of iteration_flops(n, m, |W_j|).
    '''

    total = setup_flops(n, m)
    for working_set in trace.ws_sequence[1:]:
        total += iteration_flops(n, m, len(working_set))

    return total

def save_qp(
    qp: MpcDenseQP,
    path: str
) -> None:
    '''
    JSON file with n, m and row-major H, f, A, b. Floats are written with
    shortest round-trip formatting, so a load returns the identical problem.
    '''

    document = {
        'format': 'mpccert-qp',
        'n': qp.n,
        'm': qp.m,
        'H': [float(value) for value in qp.H.reshape(-1)],
        'f': [float(value) for value in qp.f],
        'A': [float(value) for value in qp.A.reshape(-1)],
        'b': [float(value) for value in qp.b],
    }

    with open(path, 'w') as file:
        json.dump(document, file, indent=1)

    logger.info(f'Wrote QP with n={qp.n}, m={qp.m} to {path}')

def load_qp(
    path: str
) -> MpcDenseQP:

    with open(path, 'r') as file:
        document = json.load(file)

    n, m = int(document['n']), int(document['m'])

    return MpcDenseQP(
        H=np.array(document['H'], dtype=float).reshape(n, n),
        f=np.array(document['f'], dtype=float),
        A=np.array(document['A'], dtype=float).reshape(m, n),
        b=np.array(document['b'], dtype=float)
    )
