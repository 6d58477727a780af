"""
Infinitesimal generator of the buffer Markov chain and balance-equation audit

The generator is stored as a scipy CSR matrix with an explicit diagonal. The
audit evaluates the flow balance of every state written out in the per-state
form (outflow rate times p(s) against the inflow terms of its neighbours),
grouped by equation family, independently of the matrix.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionMismatch, InvalidState
from .models import ModelParams, State, StateSpace, arrival_rate_nrt


logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12


def transitions_from(params: ModelParams, state: Tuple[int, int]) -> Dict[State, float]:
    """
    Outgoing transitions of a state, zero-rate ones omitted

    Args:
        params: Model parameters
        state: Source state (i, j)

    Returns:
        Mapping target State -> rate

    Raises:
        InvalidState: If the state is not in E
    """
    space = StateSpace(params)
    if state not in space:
        raise InvalidState(f"State {tuple(state)} not in E")
    i, j = state
    targets: Dict[State, float] = {}

    if i < params.threshold_r:
        targets[State(i + 1, j)] = params.lambda_rt
    # j < H always holds when the rate is positive, since k >= H means no NRT arrivals
    nrt_rate = arrival_rate_nrt(params, i + j)
    if nrt_rate > 0.0:
        targets[State(i, j + 1)] = nrt_rate
    if i > 0:
        targets[State(i - 1, j)] = params.mu_rt
    elif j > 0:
        targets[State(i, j - 1)] = params.mu_nrt
    return targets


@dataclass(frozen=True)
class RateMatrix:
    """Sparse generator Q over E; rows are source states, diagonal stored explicitly"""

    params: ModelParams
    matrix: sp.csr_matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def space(self) -> StateSpace:
        return StateSpace(self.params)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def outflow(self) -> np.ndarray:
        """Total outflow rate of each state (minus the diagonal)"""
        return -self.matrix.diagonal()

    def off_diagonal(self) -> sp.csr_matrix:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        off = sp.csr_matrix(off)
        off.eliminate_zeros()
        return off

    def off_diagonal_counts(self) -> np.ndarray:
        return np.diff(self.off_diagonal().indptr)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def dump_triplets(self, path: Union[str, Path]) -> Path:
        """
        Write the generator as 'row col rate' lines for external inspection

        Args:
            path: Output file

        Returns:
            Path written
        """
        path = Path(path)
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with path.open('w', encoding='utf-8') as handle:
            for n in order:
                handle.write(f"{int(coo.row[n])} {int(coo.col[n])} {float(coo.data[n])!r}\n")
        logger.info(f"Wrote {len(order)} generator entries to {path}")
        return path


def build_generator(params: ModelParams) -> RateMatrix:
    """
    Assemble the sparse generator for all (R+1)(H+1) states

    Args:
        params: Validated model parameters

    Returns:
        RateMatrix with zero row sums and at most 4 off-diagonals per row
    """
    space = StateSpace(params)
    rows: List[int] = []
    cols: List[int] = []
    rates: List[float] = []

    for source in space:
        src = space.index(source)
        outflow = 0.0
        for target, rate in transitions_from(params, source).items():
            rows.append(src)
            cols.append(space.index(target))
            rates.append(rate)
            outflow += rate
        rows.append(src)
        cols.append(src)
        rates.append(-outflow)

    matrix = sp.csr_matrix((rates, (rows, cols)), shape=(space.size, space.size))
    matrix.sort_indices()
    logger.debug(f"Built generator: {space.size} states, {len(rates) - space.size} transitions")
    return RateMatrix(params=params, matrix=matrix)


# Balance-equation families: empty state, then RT idle, RT full and interior rows by NRT position
FAMILY_EMPTY = 'empty'
FAMILY_NAMES = (
    FAMILY_EMPTY,
    'rt_idle_below_l', 'rt_idle_at_l', 'rt_idle_band', 'rt_idle_at_h',
    'rt_full_nrt_empty', 'rt_full_below_l', 'rt_full_at_l', 'rt_full_band', 'rt_full_at_h',
    'rt_full_saturated',
    'interior_nrt_empty', 'interior_below_l', 'interior_at_l', 'interior_band', 'interior_at_h',
    'interior_saturated',
)


def equation_family(params: ModelParams, state: Tuple[int, int]) -> str:
    """Name of the balance-equation family that governs a state"""
    i, j = state
    k = i + j
    L, H, R = params.threshold_l, params.threshold_h, params.threshold_r
    if i == 0:
        if j == 0:
            return FAMILY_EMPTY
        prefix = 'rt_idle'
    elif i == R:
        prefix = 'rt_full'
    else:
        prefix = 'interior'
    if j == 0:
        return f"{prefix}_nrt_empty"
    if k < L:
        return f"{prefix}_below_l"
    if k == L:
        return f"{prefix}_at_l"
    if k < H:
        return f"{prefix}_band"
    if k == H:
        return f"{prefix}_at_h"
    return f"{prefix}_saturated"


def _flow_terms(params: ModelParams, probs: np.ndarray, state: Tuple[int, int]) -> Tuple[float, float]:
    """Outflow and inflow of one state, term by term"""
    i, j = state
    R, H = params.threshold_r, params.threshold_h
    lam, mu, mu1 = params.lambda_rt, params.mu_rt, params.mu_nrt
    k = i + j

    out_rate = arrival_rate_nrt(params, k)
    if i < R:
        out_rate += lam
    if i > 0:
        out_rate += mu
    elif j > 0:
        out_rate += mu1
    outflow = out_rate * probs[i, j]

    inflow = 0.0
    if i > 0:
        inflow += lam * probs[i - 1, j]
    if j > 0:
        inflow += arrival_rate_nrt(params, k - 1) * probs[i, j - 1]
    if i < R:
        inflow += mu * probs[i + 1, j]
    if i == 0 and j < H:
        inflow += mu1 * probs[0, j + 1]
    return outflow, inflow


def _relative(outflow: float, inflow: float) -> float:
    scale = abs(outflow) + abs(inflow)
    return abs(outflow - inflow) / scale if scale > 0.0 else 0.0


@dataclass
class BalanceReport:
    """Residuals of the global balance equations at a candidate distribution"""

    max_residual: float
    worst_state: State
    family_residuals: Dict[str, float]
    family_relative_residuals: Dict[str, float]
    normalization_residual: float
    literal_first_residual: Optional[float] = None
    literal_first_relative: Optional[float] = None
    corrected_first_residual: Optional[float] = None
    corrected_first_relative: Optional[float] = None
    notes: List[str] = field(default_factory=list)

    def as_lines(self) -> List[str]:
        lines = [
            f"max_residual = {self.max_residual:.6e} at state {tuple(self.worst_state)}",
            f"normalization_residual = {self.normalization_residual:.6e}",
        ]
        for family in FAMILY_NAMES:
            if family in self.family_residuals:
                lines.append(
                    f"  {family:<20s} abs={self.family_residuals[family]:.6e} "
                    f"rel={self.family_relative_residuals[family]:.6e}"
                )
        if self.literal_first_residual is not None:
            lines.append(
                f"first equation, corrected: abs={self.corrected_first_residual:.6e} "
                f"rel={self.corrected_first_relative:.6e}"
            )
            lines.append(
                f"first equation, literal:   abs={self.literal_first_residual:.6e} "
                f"rel={self.literal_first_relative:.6e}"
            )
        lines.extend(self.notes)
        return lines


def check_balance_residual(params: ModelParams, dist, verbose: bool = False) -> BalanceReport:
    """
    Evaluate every balance equation at a candidate distribution

    The first equation is evaluated in its corrected form (NRT service mu1 out
    of (0,1), RT service mu out of (1,0)). In verbose mode the literal
    published form, with the two service rates swapped, is reported as well.

    Args:
        params: Model parameters
        dist: StationaryDistribution or a plain probability vector over E
        verbose: Also evaluate the literal published first equation

    Returns:
        BalanceReport

    Raises:
        DimensionMismatch: If the vector length differs from |E|
    """
    space = StateSpace(params)
    vector = np.asarray(getattr(dist, 'probabilities', dist), dtype=float)
    if vector.shape != (space.size,):
        raise DimensionMismatch(f"Distribution has shape {vector.shape}, expected ({space.size},)")
    probs = vector.reshape(space.rt_levels, space.nrt_levels)

    family_abs: Dict[str, float] = {}
    family_rel: Dict[str, float] = {}
    max_residual = -1.0
    worst_state = State(0, 0)

    for state in space:
        outflow, inflow = _flow_terms(params, probs, state)
        residual = abs(outflow - inflow)
        family = equation_family(params, state)
        family_abs[family] = max(family_abs.get(family, 0.0), residual)
        family_rel[family] = max(family_rel.get(family, 0.0), _relative(outflow, inflow))
        if residual > max_residual:
            max_residual = residual
            worst_state = state

    report = BalanceReport(
        max_residual=max_residual,
        worst_state=worst_state,
        family_residuals=family_abs,
        family_relative_residuals=family_rel,
        normalization_residual=abs(1.0 - float(vector.sum())),
    )

    if verbose:
        lam_total = params.lambda_rt + params.lambda_nrt
        corrected_in = params.mu_nrt * probs[0, 1] + params.mu_rt * probs[1, 0]
        literal_in = params.mu_rt * probs[0, 1] + params.mu_nrt * probs[1, 0]
        out = lam_total * probs[0, 0]
        report.corrected_first_residual = abs(out - corrected_in)
        report.corrected_first_relative = _relative(out, corrected_in)
        report.literal_first_residual = abs(out - literal_in)
        report.literal_first_relative = _relative(out, literal_in)
        report.notes.append(
            "The published first equation swaps mu and mu1 on the inflow side; "
            "the corrected form is used for max_residual."
        )

    logger.debug(f"Balance audit: max residual {max_residual:.3e} at {tuple(worst_state)}")
    return report
