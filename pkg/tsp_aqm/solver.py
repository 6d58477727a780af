"""
Stationary distribution solvers

The default backend is GTH state reduction: a subtraction-free Gaussian
elimination on the off-diagonal rates, run on the band of the generator (row-
major indexing keeps all transitions within H+1 of the diagonal, and
elimination never fills outside that band). The iterative backend is a
uniformized power iteration used to cross-check the direct solve.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order

from . import config
from .exceptions import DimensionMismatch, NotConverged, ReducibleChain
from .generator import RateMatrix


logger = logging.getLogger(__name__)

METHOD_DIRECT = 'direct-elimination'
METHOD_ITERATIVE = 'uniformization-power'
METHOD_DENSE = 'dense-null-space'

# Step count over which the contraction rate is averaged
_RATE_WINDOW = 50
# Step differences this small relative to the largest mass are rounding noise
_ROUNDING_FLOOR = 1e-14


@dataclass(frozen=True)
class StationaryDistribution:
    """Equilibrium probabilities over E with solve diagnostics"""

    probabilities: np.ndarray
    residual_inf: float
    method: str
    iterations: int = 0

    def __len__(self) -> int:
        return len(self.probabilities)

    def as_grid(self, rt_levels: int, nrt_levels: int) -> np.ndarray:
        """View as an (R+1) x (H+1) array indexed by (i, j)"""
        return self.probabilities.reshape(rt_levels, nrt_levels)


def _off_diagonal_csr(gen: RateMatrix) -> sp.csr_matrix:
    matrix = sp.csr_matrix(gen.matrix, dtype=float)
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionMismatch(f"Generator is not square: {matrix.shape}")
    return gen.off_diagonal()


def reachable_states(gen: RateMatrix, start: int = 0) -> np.ndarray:
    """
    Sorted indices of the states reachable from a start state (default (0,0))

    Args:
        gen: Generator
        start: Index of the start state

    Returns:
        Sorted integer array of reachable state indices
    """
    order = breadth_first_order(_off_diagonal_csr(gen), start, directed=True, return_predecessors=False)
    return np.sort(order)


def residual_inf_norm(gen: RateMatrix, dist) -> float:
    """
    Largest absolute component of pi * Q

    Args:
        gen: Generator
        dist: StationaryDistribution or a plain vector

    Returns:
        max_s |(pi Q)(s)|

    Raises:
        DimensionMismatch: If the vector length differs from the generator
    """
    vector = np.asarray(getattr(dist, 'probabilities', dist), dtype=float)
    if vector.shape != (gen.dimension,):
        raise DimensionMismatch(f"Distribution has shape {vector.shape}, generator is {gen.dimension}")
    return float(np.max(np.abs(gen.matrix.T @ vector)))


def _bandwidth(matrix: np.ndarray) -> int:
    rows, cols = np.nonzero(matrix)
    if rows.size == 0:
        return 0
    return int(np.max(np.abs(rows - cols)))


def _gth_banded(rates: np.ndarray) -> np.ndarray:
    """
    GTH state reduction on a dense matrix of off-diagonal rates

    Args:
        rates: Square array of off-diagonal rates (diagonal ignored), modified in place

    Returns:
        Unnormalized stationary vector

    Raises:
        ReducibleChain: On a zero pivot
    """
    n = rates.shape[0]
    np.fill_diagonal(rates, 0.0)
    band = max(_bandwidth(rates), 1)
    pivots = np.zeros(n)

    for k in range(n - 1, 0, -1):
        lo = max(0, k - band)
        pivot = rates[k, lo:k].sum()
        if pivot <= 0.0:
            raise ReducibleChain(f"Zero pivot while eliminating reachable state {k}")
        pivots[k] = pivot
        column = rates[lo:k, k]
        rates[lo:k, lo:k] += np.outer(column, rates[k, lo:k] / pivot)

    unnormalized = np.zeros(n)
    unnormalized[0] = 1.0
    for k in range(1, n):
        lo = max(0, k - band)
        unnormalized[k] = unnormalized[lo:k] @ rates[lo:k, k] / pivots[k]
    return unnormalized


def _expand(gen: RateMatrix, reachable: np.ndarray, values: np.ndarray) -> np.ndarray:
    full = np.zeros(gen.dimension)
    full[reachable] = values
    return full


def solve_stationary_direct(gen: RateMatrix) -> StationaryDistribution:
    """
    Solve pi * Q = 0, sum(pi) = 1 by GTH elimination

    States not reachable from (0,0) (the j > 0 states when lambda1 = 0) are
    excluded from elimination and get probability exactly 0.

    Args:
        gen: Generator with zero row sums and non-negative off-diagonals

    Returns:
        StationaryDistribution with method 'direct-elimination'

    Raises:
        ReducibleChain: If elimination hits a zero pivot inside the reachable class
        DimensionMismatch: If the generator is not square
    """
    off = _off_diagonal_csr(gen)
    reachable = reachable_states(gen)
    rates = off[reachable][:, reachable].toarray()

    unnormalized = _gth_banded(rates)
    probabilities = _expand(gen, reachable, unnormalized / unnormalized.sum())
    residual = residual_inf_norm(gen, probabilities)
    logger.debug(
        f"Direct solve: {len(reachable)}/{gen.dimension} reachable states, residual {residual:.3e}"
    )
    return StationaryDistribution(probabilities=probabilities, residual_inf=residual, method=METHOD_DIRECT)


def _error_bound(history: Sequence[float]) -> float:
    """
    Distance to the fixed point implied by the latest step difference

    The contraction rate is the geometric mean decay over the window; the
    remaining error is bounded by the geometric tail d * rate / (1 - rate).
    """
    latest = history[-1]
    if latest == 0.0:
        return 0.0
    if len(history) < 2 or history[0] <= 0.0:
        return np.inf
    rate = (latest / history[0]) ** (1.0 / (len(history) - 1))
    if rate >= 1.0:
        return np.inf
    return latest * rate / (1.0 - rate)


def solve_stationary_iterative(gen: RateMatrix, tol: Optional[float] = None,
                               max_iter: Optional[int] = None) -> StationaryDistribution:
    """
    Uniformized power iteration pi <- pi (I + Q / Lambda)

    Args:
        gen: Generator
        tol: Stop when the estimated max-norm distance to the fixed point,
            derived from the step difference and the observed contraction
            rate, is at most tol
        max_iter: Iteration cap

    Returns:
        StationaryDistribution with method 'uniformization-power'

    Raises:
        ValueError: If tol or max_iter is not positive
        NotConverged: If max_iter is reached first; the last iterate rides on the error
    """
    tol = config.get_setting('iterative_tol') if tol is None else tol
    max_iter = config.get_setting('iterative_max_iter') if max_iter is None else max_iter
    if tol <= 0 or max_iter <= 0:
        raise ValueError(f"tol and max_iter must be positive, got tol={tol}, max_iter={max_iter}")

    reachable = reachable_states(gen)
    sub = sp.csr_matrix(gen.matrix[reachable][:, reachable])
    outflow = -sub.diagonal()
    uniformization = config.get_setting('uniformization_factor') * float(outflow.max())
    if uniformization <= 0.0:
        uniformization = 1.0
    step = (sp.identity(sub.shape[0], format='csr') + sub / uniformization).T.tocsr()

    current = np.full(sub.shape[0], 1.0 / sub.shape[0])
    difference = np.inf
    history: Deque[float] = deque(maxlen=_RATE_WINDOW + 1)
    for iteration in range(1, max_iter + 1):
        following = step @ current
        following /= following.sum()
        difference = float(np.max(np.abs(following - current)))
        current = following
        history.append(difference)
        if _error_bound(history) <= tol or difference <= _ROUNDING_FLOOR * float(current.max()):
            probabilities = _expand(gen, reachable, current)
            residual = residual_inf_norm(gen, probabilities)
            logger.debug(f"Iterative solve converged after {iteration} iterations, residual {residual:.3e}")
            return StationaryDistribution(
                probabilities=probabilities,
                residual_inf=residual,
                method=METHOD_ITERATIVE,
                iterations=iteration,
            )

    last = _expand(gen, reachable, current)
    raise NotConverged(
        f"Power iteration did not reach tol={tol} within {max_iter} iterations (difference {difference:.3e})",
        last_iterate=StationaryDistribution(
            probabilities=last,
            residual_inf=residual_inf_norm(gen, last),
            method=METHOD_ITERATIVE,
            iterations=max_iter,
        ),
        iterations=max_iter,
        difference=difference,
    )


def solve_stationary_dense(gen: RateMatrix) -> StationaryDistribution:
    """
    Reference solve via the dense null space of Q^T on the reachable class

    Only meant for small instances; used as an independent oracle.
    """
    reachable = reachable_states(gen)
    dense = gen.to_dense()[np.ix_(reachable, reachable)]
    basis = scipy.linalg.null_space(dense.T)
    if basis.shape[1] != 1:
        raise ReducibleChain(f"Null space of Q^T has dimension {basis.shape[1]}, expected 1")
    vector = basis[:, 0]
    vector = np.abs(vector / vector.sum())
    probabilities = _expand(gen, reachable, vector / vector.sum())
    return StationaryDistribution(
        probabilities=probabilities,
        residual_inf=residual_inf_norm(gen, probabilities),
        method=METHOD_DENSE,
    )
