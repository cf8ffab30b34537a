import logging
import numpy as np

from scipy.optimize import linprog
from typing import Optional, Tuple

from .mpc_errors import LPFailure

logger = logging.getLogger('mpc_app')

ABS_TOL = 1e-9
RADIUS_CAP = 1e6

class MpcPolyhedron:
    '''
    H-polyhedron {theta : A theta <= b}.
    '''

    def __init__(
        self,
        A: np.ndarray,
        b: np.ndarray
    ) -> None:

        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)

        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError(f'A has {self.A.shape[0]} rows but b has {self.b.shape[0]} entries')
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError('Polyhedron has non-finite entries')

        self._cheby = None

    @property
    def dim(self):
        return self.A.shape[1]

    def __len__(self):
        return self.A.shape[0]

    @staticmethod
    def from_box(
        lower: np.ndarray,
        upper: np.ndarray
    ) -> 'MpcPolyhedron':

        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)

        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError(f'Invalid box bounds {lower}, {upper}')

        n = len(lower)
        return MpcPolyhedron(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    def contains(
        self,
        theta: np.ndarray,
        tol: float = ABS_TOL
    ) -> bool:

        theta = np.asarray(theta, dtype=float).reshape(-1)
        return bool(np.all(self.A @ theta <= self.b + tol))

    def contains_many(
        self,
        points: np.ndarray,
        tol: float = ABS_TOL
    ) -> np.ndarray:

        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all(points @ self.A.T <= self.b + tol, axis=1)

    def interior_margin(
        self,
        theta: np.ndarray
    ) -> float:
        '''
        Smallest normalized distance of theta to a facet (negative outside).
        '''

        norms = np.linalg.norm(self.A, axis=1)
        norms[norms == 0.0] = 1.0
        return float(np.min((self.b - self.A @ np.asarray(theta, dtype=float)) / norms, initial=np.inf))

    def intersect(
        self,
        A: np.ndarray,
        b: np.ndarray
    ) -> 'MpcPolyhedron':

        A = np.atleast_2d(np.asarray(A, dtype=float)).reshape(-1, self.dim)
        b = np.asarray(b, dtype=float).reshape(-1)

        return MpcPolyhedron(np.vstack([self.A, A]), np.concatenate([self.b, b]))

    def chebyshev_ball(
        self
    ) -> Tuple[float, Optional[np.ndarray]]:
        '''
        Radius and center of the largest inscribed ball; radius -1 and no
        center when the polyhedron is empty.
        '''

        if self._cheby is not None:
            return self._cheby

        n = self.dim
        norms = np.linalg.norm(self.A, axis=1)

        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, norms.reshape(-1, 1)])
        bounds = [(None, None)] * n + [(None, RADIUS_CAP)]

        result = linprog(c, A_ub=A_ub, b_ub=self.b, bounds=bounds, method='highs')

        if result.status == 2:
            self._cheby = (-1.0, None)
        elif result.status != 0:
            raise LPFailure(f'Chebyshev LP failed with status {result.status}: {result.message}')
        else:
            self._cheby = (float(result.x[-1]), result.x[:n].copy())

        return self._cheby

    def is_empty(
        self,
        tol: float = 0.0
    ) -> bool:

        radius, _ = self.chebyshev_ball()
        return radius <= tol if tol > 0.0 else radius < 0.0

    def reduce(
        self,
        abs_tol: float = ABS_TOL
    ) -> 'MpcPolyhedron':
        '''
        Drops zero rows, duplicate rows and rows implied by the others, one LP per row.
        '''

        norms = np.linalg.norm(self.A, axis=1)
        keep = []

        for i in range(len(self)):
            if norms[i] <= abs_tol:
                if self.b[i] < -abs_tol:
                    return MpcPolyhedron(np.vstack([self.A[i], -self.A[i]]), np.array([self.b[i], self.b[i]]))
                continue
            keep.append(i)

        A = self.A[keep] / norms[keep].reshape(-1, 1)
        b = self.b[keep] / norms[keep]

        unique = []
        for i in range(len(b)):
            duplicate = False
            for j in unique:
                if np.allclose(A[i], A[j], atol=abs_tol):
                    duplicate = True
                    if b[i] < b[j]:
                        unique[unique.index(j)] = i
                    break
            if not duplicate:
                unique.append(i)

        A = A[unique]
        b = b[unique]

        redundant = np.zeros(len(b), dtype=bool)
        for i in range(len(b)):

            active = ~redundant
            active[i] = False
            if not np.any(active):
                continue

            # row i relaxed by one keeps the LP bounded
            A_ub = np.vstack([A[active], A[i]])
            b_ub = np.concatenate([b[active], [b[i] + 1.0]])
            result = linprog(-A[i], A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * self.dim, method='highs')

            if result.status == 0 and -result.fun <= b[i] + abs_tol:
                redundant[i] = True

        reduced = MpcPolyhedron(A[~redundant], b[~redundant])
        logger.debug(f'Reduced polyhedron from {len(self)} to {len(reduced)} rows')

        return reduced

    def bounding_box(
        self
    ) -> Tuple[np.ndarray, np.ndarray]:

        lower = np.zeros(self.dim)
        upper = np.zeros(self.dim)

        for i in range(self.dim):
            for sign, target in [(1.0, lower), (-1.0, upper)]:

                c = np.zeros(self.dim)
                c[i] = sign
                result = linprog(c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * self.dim, method='highs')
                if result.status != 0:
                    raise LPFailure(f'Bounding box LP failed with status {result.status}: {result.message}')
                target[i] = sign * result.fun

        return lower, upper

    def to_dict(
        self
    ) -> dict:

        return {
            'A': [[float(value) for value in row] for row in self.A],
            'b': [float(value) for value in self.b]
        }

    @staticmethod
    def from_dict(
        document: dict
    ) -> 'MpcPolyhedron':

        return MpcPolyhedron(np.array(document['A'], dtype=float), np.array(document['b'], dtype=float))
