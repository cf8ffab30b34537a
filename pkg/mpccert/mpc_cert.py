import json
import logging
import time
import numpy as np
import pandas as pd

from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union

from .mpc_condense import MpcParametricQP, mpc_step
from .mpc_errors import EmptyMeasurement, LengthMismatch, NumericalFailure, RegionBudgetExceeded, SingularKKT, WitnessMissing
from .mpc_polyhedron import MpcPolyhedron
from .mpc_qp_core import PIVOT_TOLERANCE, MpcSolverConfig, MpcSolveStatus, MpcWorkingSet, MpcWorkingSetFactor

logger = logging.getLogger('mpc_app')

REGION_BUDGET = 1000000
ROW_PRUNE_CAP = 24
CHEBYSHEV_MIN_RADIUS = 1e-9
# affine functions with coefficients below this are compared as constants
FLAT_TOLERANCE = 1e-12

class MpcRegionStatus:
    OPTIMAL = MpcSolveStatus.OPTIMAL
    ITERATION_CAP = MpcSolveStatus.ITERATION_CAP
    INFEASIBLE = MpcSolveStatus.INFEASIBLE
    NUMERICAL_FAILURE = MpcSolveStatus.NUMERICAL_FAILURE
    LOWER_DIMENSIONAL = 'LowerDimensional'

class MpcRegion:

    def __init__(
        self,
        poly: MpcPolyhedron,
        ws_sequence: List[MpcWorkingSet],
        iterations: int,
        witness: Optional[np.ndarray] = None,
        status: str = MpcRegionStatus.OPTIMAL,
        path: str = '',
        region_id: int = 0
    ) -> None:

        self.poly = poly
        self.ws_sequence = ws_sequence
        self.iterations = int(iterations)
        self.witness = None if witness is None else np.asarray(witness, dtype=float)
        self.status = status
        self.path = path
        self.region_id = region_id

    def is_capped(
        self
    ) -> bool:

        return self.status == MpcRegionStatus.ITERATION_CAP

    def to_dict(
        self
    ) -> dict:

        document = self.poly.to_dict()
        document.update({
            'id': self.region_id,
            'path': self.path,
            'ws_sequence': [ws.to_list() for ws in self.ws_sequence],
            'iterations': self.iterations,
            'witness': None if self.witness is None else [float(value) for value in self.witness],
            'status': self.status
        })

        return document

    @staticmethod
    def from_dict(
        document: dict
    ) -> 'MpcRegion':

        return MpcRegion(
            poly=MpcPolyhedron.from_dict(document),
            ws_sequence=[MpcWorkingSet(ws) for ws in document['ws_sequence']],
            iterations=document['iterations'],
            witness=document.get('witness'),
            status=document.get('status', MpcRegionStatus.OPTIMAL),
            path=document.get('path', ''),
            region_id=document.get('id', 0)
        )

class MpcPartition:

    def __init__(
        self,
        regions: List[MpcRegion],
        theta_set: MpcPolyhedron,
        pqp_checksum: str,
        budget_exceeded: bool = False
    ) -> None:

        self.regions = regions
        self.theta_set = theta_set
        self.pqp_checksum = pqp_checksum
        self.budget_exceeded = budget_exceeded

    def __len__(self):
        return len(self.regions)

    @property
    def complete(self):
        return not self.budget_exceeded

    @property
    def capped_regions(self):
        return [region.region_id for region in self.regions if region.is_capped()]

    def full_dimensional(
        self
    ) -> List[MpcRegion]:

        return [region for region in self.regions if region.witness is not None]

    def max_iterations(
        self
    ) -> int:

        return max((region.iterations for region in self.full_dimensional()), default=0)

    def locate(
        self,
        theta: np.ndarray,
        tol: float = CHEBYSHEV_MIN_RADIUS
    ) -> List[int]:

        return [region.region_id for region in self.regions if region.poly.contains(theta, tol)]

    def summary(
        self
    ) -> Dict[str, Union[int, bool, str]]:

        return {
            'regions': len(self.regions),
            'full_dimensional': len(self.full_dimensional()),
            'lower_dimensional': sum(1 for region in self.regions if region.status == MpcRegionStatus.LOWER_DIMENSIONAL),
            'iteration_capped': len(self.capped_regions),
            'infeasible': sum(1 for region in self.regions if region.status == MpcRegionStatus.INFEASIBLE),
            'max_iterations': self.max_iterations(),
            'complete': self.complete,
            'pqp_checksum': self.pqp_checksum
        }

class MpcMeasurementVector:
    '''
    One cost per region (or per sample), flops or microseconds.
    '''

    def __init__(
        self,
        tau: np.ndarray,
        region_ids: Optional[List[int]] = None,
        thetas: Optional[np.ndarray] = None,
        mode: str = 'flops',
        label: str = ''
    ) -> None:

        self.tau = np.asarray(tau, dtype=float).reshape(-1)
        self.region_ids = list(range(len(self.tau))) if region_ids is None else [int(index) for index in region_ids]
        self.thetas = thetas
        self.mode = mode
        self.label = label

        if len(self.region_ids) != len(self.tau):
            raise LengthMismatch(f'{len(self.tau)} costs but {len(self.region_ids)} region ids')

    def __len__(self):
        return len(self.tau)

    def to_frame(
        self
    ) -> pd.DataFrame:

        frame = pd.DataFrame({'region_id': self.region_ids, 'tau': self.tau})
        if self.thetas is not None and len(self.thetas) == len(self.tau):
            for i in range(np.asarray(self.thetas).shape[1]):
                frame[f'theta_{i}'] = np.asarray(self.thetas)[:, i]

        return frame

    def save_csv(
        self,
        path: str,
        config_hash: str = ''
    ) -> None:

        unit = 'us' if self.mode == 'wallclock' else 'flops'
        with open(path, 'w') as file:
            file.write(f'# tau {self.label} mode={self.mode} unit={unit} config={config_hash}\n')
            self.to_frame().to_csv(file, index=False)

        logger.info(f'Wrote {len(self)} {self.mode} measurements to {path}')

    @staticmethod
    def load_csv(
        path: str,
        mode: str = 'flops',
        label: str = ''
    ) -> 'MpcMeasurementVector':

        frame = pd.read_csv(path, comment='#')
        columns = sorted([column for column in frame.columns if column.startswith('theta_')], key=lambda name: int(name.split('_')[1]))
        thetas = frame[columns].to_numpy() if columns else None

        return MpcMeasurementVector(frame['tau'].to_numpy(), frame['region_id'].tolist(), thetas, mode, label)

class MpcRealtimeVerdict:

    def __init__(
        self,
        wcet: float,
        wcet_region: int,
        budget: float,
        violating_regions: List[int]
    ) -> None:

        self.wcet = wcet
        self.wcet_region = wcet_region
        self.budget = budget
        self.violating_regions = violating_regions

    @property
    def ok(self):
        return self.wcet <= self.budget

class _SymbolicState:
    '''
    Solver state along one branch of the exploration: the working set is
    fixed, the multipliers are affine in theta (lam_C theta + lam_c).
    '''

    def __init__(
        self,
        poly: MpcPolyhedron,
        factor: MpcWorkingSetFactor,
        lam_C: np.ndarray,
        lam_c: np.ndarray,
        sequence: List[MpcWorkingSet],
        k: int = 0,
        entering: Optional[int] = None,
        pending: Optional[int] = None,
        path: Tuple[int, ...] = ()
    ) -> None:

        self.poly = poly
        self.factor = factor
        self.lam_C = lam_C
        self.lam_c = lam_c
        self.sequence = sequence
        self.k = k
        self.entering = entering
        self.pending = pending
        self.path = path

    def child(
        self,
        poly: MpcPolyhedron,
        branch: int
    ) -> '_SymbolicState':

        return _SymbolicState(
            poly=poly,
            factor=self.factor.copy(),
            lam_C=self.lam_C.copy(),
            lam_c=self.lam_c.copy(),
            sequence=list(self.sequence),
            k=self.k,
            entering=self.entering,
            pending=self.pending,
            path=self.path + (branch,)
        )

    def advance(
        self
    ) -> None:

        self.k += 1
        self.sequence.append(MpcWorkingSet(self.factor.indices))

def _restrict(
    poly: MpcPolyhedron,
    constraints: Iterable[Tuple[np.ndarray, float, bool]]
) -> Optional[MpcPolyhedron]:
    '''
    Intersects poly with {g(theta) <= 0} (or < 0 when strict) for affine
    g = coef theta + const. Returns None when the result is empty.
    '''

    rows, rhs = [], []

    for coef, const, strict in constraints:

        if np.max(np.abs(coef), initial=0.0) <= FLAT_TOLERANCE:
            holds = const < -FLAT_TOLERANCE if strict else const <= FLAT_TOLERANCE
            if holds:
                continue
            return None

        rows.append(coef)
        rhs.append(-const)

    if not rows:
        return poly

    child = poly.intersect(np.array(rows), np.array(rhs))
    radius, _ = child.chebyshev_ball()

    return None if radius < 0.0 else child

def _argmin_splits(
    poly: MpcPolyhedron,
    candidates: List[int],
    numer_C: np.ndarray,
    numer_c: np.ndarray,
    denom: np.ndarray,
    strict_below: Callable[[int, int], bool]
) -> List[Tuple[int, MpcPolyhedron]]:
    '''
    Pieces of poly on which candidate j minimizes numer_j / denom_j (denom > 0).
    '''

    pieces = []

    for j in candidates:

        constraints = []
        for i in candidates:
            if i == j:
                continue
            # numer_j / denom_j <= numer_i / denom_i
            coef = denom[i] * numer_C[j] - denom[j] * numer_C[i]
            const = denom[i] * numer_c[j] - denom[j] * numer_c[i]
            constraints.append((coef, const, strict_below(i, j)))

        child = _restrict(poly, constraints)
        if child is not None:
            pieces.append((j, child))

    return pieces

def _sign_patterns(
    poly: MpcPolyhedron,
    C: np.ndarray,
    c: np.ndarray,
    eps: float,
    position: int = 0,
    negative: Tuple[int, ...] = ()
) -> List[Tuple[Tuple[int, ...], MpcPolyhedron]]:
    '''
    Splits poly by which entries of the affine vector C theta + c are below -eps.
    '''

    if position == len(c):
        return [(negative, poly)]

    patterns = []

    # entry >= -eps
    nonnegative = _restrict(poly, [(-C[position], -c[position] - eps, False)])
    if nonnegative is not None:
        patterns.extend(_sign_patterns(nonnegative, C, c, eps, position + 1, negative))

    # entry < -eps
    below = _restrict(poly, [(C[position], c[position] + eps, True)])
    if below is not None:
        patterns.extend(_sign_patterns(below, C, c, eps, position + 1, negative + (position,)))

    return patterns

class _Explorer:

    def __init__(
        self,
        pqp: MpcParametricQP,
        cfg: MpcSolverConfig,
        row_prune_cap: int,
        min_radius: float
    ) -> None:

        self.pqp = pqp
        self.cfg = cfg
        self.row_prune_cap = row_prune_cap
        self.min_radius = min_radius
        self.gram = pqp.gram
        self.D = pqp.D
        self.d0 = pqp.d0

    def finish(
        self,
        poly: MpcPolyhedron
    ) -> MpcPolyhedron:

        if len(poly) > self.row_prune_cap:
            return poly.reduce()

        return poly

    def leaf(
        self,
        state: _SymbolicState,
        status: str
    ) -> MpcRegion:

        poly = self.finish(state.poly)
        radius, center = poly.chebyshev_ball()

        return MpcRegion(
            poly=poly,
            ws_sequence=list(state.sequence),
            iterations=state.k,
            witness=center if radius >= self.min_radius else None,
            status=status if radius >= self.min_radius else MpcRegionStatus.LOWER_DIMENSIONAL,
            path='.'.join(str(branch) for branch in state.path)
        )

    def step(
        self,
        state: _SymbolicState
    ) -> Tuple[List[_SymbolicState], List[MpcRegion]]:
        '''
        One iteration of the dual active-set method over state.poly. Returns
        the continuing child states and the finished regions.
        '''

        cfg = self.cfg

        if state.pending is not None:

            if state.k >= cfg.max_iter:
                return [], [self.leaf(state, MpcRegionStatus.ITERATION_CAP)]

            state.factor.add(state.pending)
            state.entering = state.pending
            state.pending = None
            state.advance()

            return [state], []

        W = list(state.factor.indices)

        if len(W) == 0:
            patterns = [((), state.poly)]
            star_C = np.zeros((0, self.pqp.theta_dim))
            star_c = np.zeros(0)
        else:
            star_C = -state.factor.solve(self.D[W])
            star_c = -state.factor.solve(self.d0[W])
            patterns = _sign_patterns(state.poly, star_C, star_c, cfg.eps_dual)

        children, leaves = [], []

        for branch, (negative, poly) in enumerate(patterns):

            if len(negative) == 0:
                more_children, more_leaves = self.accept(state, poly, W, star_C, star_c, branch)
            else:
                more_children, more_leaves = self.remove(state, poly, W, star_C, star_c, negative, branch)

            children.extend(more_children)
            leaves.extend(more_leaves)

        return children, leaves

    def accept(
        self,
        state: _SymbolicState,
        poly: MpcPolyhedron,
        W: List[int],
        star_C: np.ndarray,
        star_c: np.ndarray,
        branch: int
    ) -> Tuple[List[_SymbolicState], List[MpcRegion]]:

        cfg = self.cfg
        base = state.child(poly, branch)

        base.lam_C[:] = 0.0
        base.lam_c[:] = 0.0
        base.lam_C[W] = star_C
        base.lam_c[W] = star_c

        # slack(theta) = -d(theta) - gram[:, W] lam_W(theta)
        slack_C = -self.D - self.gram[:, W] @ star_C
        slack_c = -self.d0 - self.gram[:, W] @ star_c

        outside = [index for index in range(self.pqp.m) if index not in W]
        addable = [index for index in outside if base.factor.is_addable(index)]
        dependent = [index for index in outside if index not in addable]

        children, leaves = [], []

        optimal = _restrict(poly, [(slack_C[index], slack_c[index] - cfg.eps_primal, False) for index in outside])
        if optimal is not None:
            leaves.append(self.leaf(base.child(optimal, 0), MpcRegionStatus.OPTIMAL))

        for e in addable:

            # e is violated and has the largest slack among addable constraints
            constraints = [(-slack_C[e], -slack_c[e] + cfg.eps_primal, True)]
            for i in addable:
                if i != e:
                    constraints.append((slack_C[i] - slack_C[e], slack_c[i] - slack_c[e], i < e))

            piece = _restrict(poly, constraints)
            if piece is None:
                continue

            child = base.child(piece, 1 + e)
            if child.k >= cfg.max_iter:
                leaves.append(self.leaf(child, MpcRegionStatus.ITERATION_CAP))
                continue

            child.factor.add(e)
            child.entering = e
            child.advance()
            child.poly = self.finish(child.poly)
            children.append(child)

        if len(dependent) == 0:
            return children, leaves

        no_addable = [(slack_C[i], slack_c[i] - cfg.eps_primal, False) for i in addable]

        for e in dependent:

            constraints = list(no_addable)
            constraints.append((-slack_C[e], -slack_c[e] + cfg.eps_primal, True))
            for i in dependent:
                if i != e:
                    constraints.append((slack_C[i] - slack_C[e], slack_c[i] - slack_c[e], i < e))

            piece = _restrict(poly, constraints)
            if piece is None:
                continue

            child = base.child(piece, 1 + self.pqp.m + e)
            if child.k >= cfg.max_iter:
                leaves.append(self.leaf(child, MpcRegionStatus.ITERATION_CAP))
                continue

            more_children, more_leaves = self.dual_step(child, W, e)
            children.extend(more_children)
            leaves.extend(more_leaves)

        return children, leaves

    def dual_step(
        self,
        state: _SymbolicState,
        W: List[int],
        entering: int
    ) -> Tuple[List[_SymbolicState], List[MpcRegion]]:
        '''
        Violated constraint dependent on the working set: move the
        multipliers along -G_W^-1 gram[W, entering] until one reaches zero.
        '''

        c = state.factor.solve(self.gram[W, entering])
        positions = [position for position in range(len(W)) if c[position] > PIVOT_TOLERANCE]

        if len(positions) == 0:
            return [], [self.leaf(state, MpcRegionStatus.INFEASIBLE)]

        numer_C = state.lam_C[W]
        numer_c = state.lam_c[W]
        pieces = _argmin_splits(state.poly, positions, numer_C, numer_c, c, lambda i, j: W[i] < W[j])

        children = []
        for position, piece in pieces:

            child = state.child(piece, position)
            blocking = W[position]
            step_C = numer_C[position] / c[position]
            step_c = numer_c[position] / c[position]

            child.lam_C[W] -= np.outer(c, step_C)
            child.lam_c[W] -= step_c * c
            child.lam_C[blocking] = 0.0
            child.lam_c[blocking] = 0.0
            child.lam_C[entering] = step_C
            child.lam_c[entering] = step_c

            child.factor.remove(blocking)
            child.pending = entering
            child.advance()
            child.poly = self.finish(child.poly)
            children.append(child)

        return children, []

    def remove(
        self,
        state: _SymbolicState,
        poly: MpcPolyhedron,
        W: List[int],
        star_C: np.ndarray,
        star_c: np.ndarray,
        negative: Tuple[int, ...],
        branch: int
    ) -> Tuple[List[_SymbolicState], List[MpcRegion]]:
        '''
        Candidate multipliers not dual feasible: step towards them and drop the
        blocking constraint. The step direction lam_star - lam is a theta
        dependent multiple of the constant vector r with r[entering] = 1.
        '''

        base = state.child(poly, branch)

        if base.k >= self.cfg.max_iter:
            return [], [self.leaf(base, MpcRegionStatus.ITERATION_CAP)]

        if base.entering is None or base.entering not in W:
            raise NumericalFailure(f'Removal step without an entering constraint in working set {W}')

        position_e = W.index(base.entering)
        unit = np.zeros(len(W))
        unit[position_e] = 1.0
        column = base.factor.solve(unit)
        r = column / column[position_e]

        # ratio lam_i / -p_i orders like lam_i / -r_i since p = tau r with tau > 0
        denom = -r
        candidates = [position for position in negative if denom[position] > PIVOT_TOLERANCE]

        if len(candidates) == 0:
            logger.warning(f'No blocking constraint on branch {base.path} with working set {W}')
            return [], [self.leaf(base, MpcRegionStatus.NUMERICAL_FAILURE)]

        numer_C = base.lam_C[W]
        numer_c = base.lam_c[W]
        pieces = _argmin_splits(poly, candidates, numer_C, numer_c, denom, lambda i, j: W[i] < W[j])

        children = []
        for position, piece in pieces:

            child = base.child(piece, position)
            blocking = W[position]
            sigma_C = numer_C[position] / denom[position]
            sigma_c = numer_c[position] / denom[position]

            child.lam_C[W] += np.outer(r, sigma_C)
            child.lam_c[W] += sigma_c * r
            child.lam_C[blocking] = 0.0
            child.lam_c[blocking] = 0.0

            child.factor.remove(blocking)
            child.advance()
            child.poly = self.finish(child.poly)
            children.append(child)

        return children, []

def certify(
    pqp: MpcParametricQP,
    theta_set: MpcPolyhedron,
    cfg: MpcSolverConfig,
    budget: int = REGION_BUDGET,
    row_prune_cap: int = ROW_PRUNE_CAP,
    min_radius: float = CHEBYSHEV_MIN_RADIUS,
    strict_budget: bool = False
) -> MpcPartition:
    '''
    Partitions theta_set into regions on which the dual active-set method
    (cold started) runs the same working-set sequence. Exploration is
    depth first; regions are numbered in visiting order. Reaching the
    region budget returns a partial partition, or raises when strict_budget.
    '''

    if len(cfg.initial_ws) > 0:
        raise ValueError(f'Certification covers cold starts only, got initial working set {cfg.initial_ws}')
    if theta_set.dim != pqp.theta_dim:
        raise ValueError(f'Parameter set has dimension {theta_set.dim}, problem has {pqp.theta_dim}')

    radius, _ = theta_set.chebyshev_ball()
    if radius < 0.0:
        raise ValueError('Parameter set is empty')

    started = datetime.now()
    explorer = _Explorer(pqp, cfg, row_prune_cap, min_radius)

    root = _SymbolicState(
        poly=theta_set,
        factor=MpcWorkingSetFactor(pqp.gram),
        lam_C=np.zeros((pqp.m, pqp.theta_dim)),
        lam_c=np.zeros(pqp.m),
        sequence=[MpcWorkingSet()]
    )

    stack = [root]
    regions = []
    budget_exceeded = False

    while stack:

        if len(regions) >= budget:
            budget_exceeded = True
            break

        state = stack.pop()
        radius, _ = state.poly.chebyshev_ball()

        try:
            if radius < min_radius:
                # slivers are kept for coverage but not explored further
                children, leaves = [], [explorer.leaf(state, MpcRegionStatus.LOWER_DIMENSIONAL)]
            else:
                children, leaves = explorer.step(state)
        except (SingularKKT, np.linalg.LinAlgError) as exception:
            logger.error(f'Numerical failure on branch {state.path}: {exception}')
            children, leaves = [], [explorer.leaf(state, MpcRegionStatus.NUMERICAL_FAILURE)]

        for region in leaves:
            region.region_id = len(regions)
            regions.append(region)
            logger.debug(f'Region {region.region_id} ({region.status}) with {region.iterations} iterations, path {region.path}')

        stack.extend(reversed(children))

    if budget_exceeded:
        message = f'Region budget {budget} exhausted with {len(stack)} open branches'
        if strict_budget:
            raise RegionBudgetExceeded(message)
        logger.warning(message)

    partition = MpcPartition(regions, theta_set, pqp.checksum(), budget_exceeded)

    if partition.capped_regions:
        logger.warning(f'{len(partition.capped_regions)} regions reached the iteration cap {cfg.max_iter}')

    logger.info(f'Certified {len(regions)} regions in {datetime.now() - started}, max iterations {partition.max_iterations()}')

    return partition

def daqp_program(
    pqp: MpcParametricQP,
    cfg: MpcSolverConfig
) -> Callable:

    def program(theta):
        _, trace = mpc_step(pqp, theta, cfg)
        return trace

    return program

def verify_partition(
    partition: MpcPartition,
    pqp: MpcParametricQP,
    cfg: MpcSolverConfig,
    samples_per_region: int = 10,
    seed: int = 0
) -> List[int]:
    '''
    Ids of full-dimensional regions where the solver run at the witness or at
    random interior points deviates from the stored working-set sequence.
    '''

    rng = np.random.default_rng(seed)
    mismatches = []

    for region in partition.full_dimensional():

        radius, center = region.poly.chebyshev_ball()
        points = [region.witness]

        for _ in range(samples_per_region - 1):
            direction = rng.normal(size=len(center))
            direction /= max(np.linalg.norm(direction), 1e-300)
            points.append(center + 0.9 * radius * rng.uniform() * direction)

        for theta in points:
            _, trace = mpc_step(pqp, theta, cfg)
            if trace.ws_sequence != region.ws_sequence:
                logger.warning(f'Region {region.region_id} sequence mismatch at {theta}')
                mismatches.append(region.region_id)
                break

    return mismatches

def coverage(
    partition: MpcPartition,
    thetas: np.ndarray,
    tol: float = CHEBYSHEV_MIN_RADIUS
) -> Tuple[int, int]:
    '''
    Number of samples in no region and number of samples strictly inside
    two or more regions.
    '''

    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    covered = np.zeros(len(thetas), dtype=int)
    interior = np.zeros(len(thetas), dtype=int)

    for region in partition.regions:

        A, b = region.poly.A, region.poly.b
        norms = np.linalg.norm(A, axis=1)
        norms[norms == 0.0] = 1.0
        margins = (b - thetas @ A.T) / norms

        covered += np.all(margins >= -tol, axis=1)
        interior += np.all(margins > tol, axis=1)

    return int(np.sum(covered == 0)), int(np.sum(interior >= 2))

def _run_costs(
    thetas: List[np.ndarray],
    program: Callable,
    mode: str,
    workers: int
) -> np.ndarray:

    if mode not in ('flops', 'wallclock'):
        raise ValueError(f'Unknown measurement mode {mode}')

    if mode == 'wallclock':

        if workers > 1:
            logger.warning('Wall-clock measurement runs serially')

        tau = []
        for theta in thetas:
            start = time.perf_counter()
            program(theta)
            tau.append((time.perf_counter() - start) * 1e6)

        return np.array(tau)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            traces = list(executor.map(program, thetas))
    else:
        traces = [program(theta) for theta in thetas]

    return np.array([trace.flop_estimate for trace in traces], dtype=float)

def measure(
    partition: MpcPartition,
    program: Callable,
    mode: str = 'flops',
    workers: int = 1,
    label: str = '',
    strict: bool = False
) -> MpcMeasurementVector:
    '''
    Runs program at the witness of every region and records its cost.
    Regions without witness are skipped, or raise when strict.
    '''

    thetas, region_ids = [], []

    for region in partition.regions:

        if region.witness is None:
            if strict:
                raise WitnessMissing(f'Region {region.region_id} is lower dimensional')
            continue

        thetas.append(region.witness)
        region_ids.append(region.region_id)

    skipped = len(partition.regions) - len(thetas)
    if skipped > 0:
        logger.warning(f'{skipped} regions without witness skipped in measurement')

    tau = _run_costs(thetas, program, mode, workers)
    logger.info(f'Measured {len(tau)} regions in {mode} mode')

    return MpcMeasurementVector(tau, region_ids, np.array(thetas), mode, label)

def measure_samples(
    thetas: np.ndarray,
    program: Callable,
    mode: str = 'flops',
    workers: int = 1,
    label: str = ''
) -> MpcMeasurementVector:

    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    tau = _run_costs(list(thetas), program, mode, workers)

    return MpcMeasurementVector(tau, list(range(len(tau))), thetas, mode, label)

def wcet(
    tau: MpcMeasurementVector
) -> Tuple[float, int]:

    if len(tau) == 0:
        raise EmptyMeasurement('Cannot take the worst case of an empty measurement')

    position = int(np.argmax(tau.tau))

    return float(tau.tau[position]), tau.region_ids[position]

def realtime_verdict(
    tau: MpcMeasurementVector,
    budget: float
) -> MpcRealtimeVerdict:

    worst, region = wcet(tau)
    violating = [region_id for region_id, value in zip(tau.region_ids, tau.tau) if value > budget]

    verdict = MpcRealtimeVerdict(worst, region, float(budget), violating)
    if not verdict.ok:
        logger.warning(f'WCET {worst} exceeds budget {budget} in {len(violating)} regions')

    return verdict

def sample_uniform(
    lower: np.ndarray,
    upper: np.ndarray,
    count: int,
    seed: int = 0
) -> np.ndarray:

    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)

    if lower.shape != upper.shape or np.any(lower > upper):
        raise ValueError(f'Invalid sampling box {lower}, {upper}')
    if count < 1:
        raise ValueError(f'Sample count must be positive, got {count}')

    rng = np.random.default_rng(seed)

    return rng.uniform(lower, upper, size=(count, len(lower)))

def _as_array(
    tau: Union[MpcMeasurementVector, np.ndarray]
) -> np.ndarray:

    if isinstance(tau, MpcMeasurementVector):
        return tau.tau

    return np.asarray(tau, dtype=float).reshape(-1)

def empirical_cdf(
    tau: Union[MpcMeasurementVector, np.ndarray]
) -> pd.DataFrame:

    values = np.sort(_as_array(tau))

    return pd.DataFrame({
        'value': values,
        'probability': np.arange(1, len(values) + 1) / max(len(values), 1)
    })

def cdf_and_histogram(
    tau_a: Union[MpcMeasurementVector, np.ndarray],
    tau_b: Union[MpcMeasurementVector, np.ndarray],
    bins: int = 20,
    difference: bool = True
) -> Dict[str, Union[pd.DataFrame, bool]]:
    '''
    Plot-ready records: histogram of tau_b - tau_a (sample-wise) and the
    empirical CDF of each vector.
    '''

    a = _as_array(tau_a)
    b = _as_array(tau_b)

    records = {
        'cdf_a': empirical_cdf(a),
        'cdf_b': empirical_cdf(b)
    }

    if difference:

        if len(a) != len(b):
            raise LengthMismatch(f'Difference needs equal lengths, got {len(a)} and {len(b)}')

        delta = b - a
        counts, edges = np.histogram(delta, bins=bins)

        records['difference'] = pd.DataFrame({
            'bin_left': edges[:-1],
            'bin_right': edges[1:],
            'count': counts,
            'fraction': counts / max(len(delta), 1)
        })
        records['all_positive'] = bool(len(delta) > 0 and np.all(delta > 0))

    return records

def save_partition(
    partition: MpcPartition,
    path: str
) -> None:
    '''
    JSON lines: a header line, then one region per line.
    '''

    header = {
        'type': 'header',
        'theta_set': partition.theta_set.to_dict(),
        'pqp_checksum': partition.pqp_checksum,
        'budget_exceeded': partition.budget_exceeded,
        'regions': len(partition.regions)
    }

    with open(path, 'w') as file:
        file.write(json.dumps(header) + '\n')
        for region in partition.regions:
            file.write(json.dumps(region.to_dict()) + '\n')

    logger.info(f'Wrote partition with {len(partition)} regions to {path}')

def load_partition(
    path: str
) -> MpcPartition:

    with open(path, 'r') as file:
        lines = [line for line in file if line.strip()]

    header = json.loads(lines[0])
    if header.get('type') != 'header':
        raise ValueError(f'{path} does not start with a partition header')

    regions = [MpcRegion.from_dict(json.loads(line)) for line in lines[1:]]

    return MpcPartition(
        regions=regions,
        theta_set=MpcPolyhedron.from_dict(header['theta_set']),
        pqp_checksum=header['pqp_checksum'],
        budget_exceeded=header.get('budget_exceeded', False)
    )
