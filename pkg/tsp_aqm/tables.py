"""
Result rows and CSV emission

One ResultRow per solved (policy, grid point). Columns are fixed; simulation
columns are appended when any row carries a simulation estimate.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .exceptions import EmptyResult
from .metrics import QoSReport
from .simulator import METRIC_NAMES, SimEstimate


logger = logging.getLogger(__name__)

COLUMNS = (
    'policy', 'n', 'r', 'l', 'h', 'lambda_rt', 'lambda_nrt', 'mu_rt', 'mu_nrt',
    'p_lrt', 'n_rt', 'n_nrt', 'd_rt', 'd_nrt_paper', 'd_nrt_little', 'lambda_eff', 'residual',
)

SIM_COLUMNS = tuple(column for name in METRIC_NAMES for column in (f"sim_{name}", f"sim_{name}_hw"))

INTEGER_COLUMNS = ('n', 'r', 'l', 'h')


def format_number(value: Union[int, float]) -> str:
    """17 significant digits, enough to recover any double exactly"""
    if isinstance(value, int):
        return str(value)
    return format(value, '.17g')


@dataclass(frozen=True)
class ResultRow:
    """One output line: model, analytic metrics, solver residual, optional simulation columns"""

    policy: str
    n: int
    r: int
    l: int  # noqa: E741
    h: int
    lambda_rt: float
    lambda_nrt: float
    mu_rt: float
    mu_nrt: float
    p_lrt: float
    n_rt: float
    n_nrt: float
    d_rt: float
    d_nrt_paper: float
    d_nrt_little: float
    lambda_eff: float
    residual: float
    simulation: Optional[Dict[str, Tuple[float, float]]] = field(default=None, compare=False)

    def __post_init__(self):
        for column in COLUMNS[5:]:
            value = getattr(self, column)
            if not math.isfinite(value):
                raise ValueError(f"Column {column} is not finite: {value}")

    @classmethod
    def from_report(cls, report: QoSReport, residual: float,
                    estimate: Optional[SimEstimate] = None) -> 'ResultRow':
        params = report.params.as_dict()
        simulation = None
        if estimate is not None:
            simulation = {name: tuple(estimate.metric(name)) for name in METRIC_NAMES}
        return cls(
            policy=params['policy'],
            n=params['n'],
            r=params['r'],
            l=params['l'],
            h=params['h'],
            lambda_rt=params['lambda_rt'],
            lambda_nrt=params['lambda_nrt'],
            mu_rt=params['mu_rt'],
            mu_nrt=params['mu_nrt'],
            p_lrt=report.p_lrt,
            n_rt=report.n_rt,
            n_nrt=report.n_nrt,
            d_rt=report.d_rt,
            d_nrt_paper=report.d_nrt_paper,
            d_nrt_little=report.d_nrt_little,
            lambda_eff=report.lambda_eff_nrt,
            residual=residual,
            simulation=simulation,
        )

    def cells(self, with_simulation: bool = False) -> List[str]:
        values = [self.policy] + [format_number(getattr(self, column)) for column in COLUMNS[1:]]
        if with_simulation:
            if self.simulation is None:
                values.extend([''] * len(SIM_COLUMNS))
            else:
                for name in METRIC_NAMES:
                    point, half_width = self.simulation[name]
                    values.extend([format_number(point), format_number(half_width)])
        return values


def header(with_simulation: bool = False) -> List[str]:
    return list(COLUMNS + SIM_COLUMNS) if with_simulation else list(COLUMNS)


def emit_csv(rows: Sequence[ResultRow], path: Union[str, Path]) -> Path:
    """
    Write rows as UTF-8 CSV with the fixed header

    Args:
        rows: Rows to write, in output order
        path: Destination file

    Returns:
        Path written

    Raises:
        EmptyResult: If rows is empty (no file is created)
        OSError: If the file cannot be written
    """
    if not rows:
        raise EmptyResult(f"No rows to write to {path}")
    path = Path(path)
    with_simulation = any(row.simulation is not None for row in rows)

    with path.open('w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header(with_simulation))
        for row in rows:
            writer.writerow(row.cells(with_simulation))

    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path
