"""
TSP-AQM Analysis Jobs

This module contains the jobs that turn models into results: a single solve,
a policy x grid sweep, and the figure reproductions that check the published
orderings between the linear and constant-fraction feedback policies.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from . import config
from .charts import plot_crossover_map, plot_sweep
from .exceptions import (
    ModelValidationError,
    ParamMismatch,
    ResidualTooLarge,
    SweepPointError,
    ZeroAcceptedFlow,
)
from .generator import build_generator
from .metrics import QoSReport, qos_report
from .models import ConstantFraction, FeedbackPolicy, Linear, ModelParams
from .runconfig import AXIS_LAMBDA_NRT, AXIS_THRESHOLD_R, SweepSpec, point_params, sweep_points
from .simulator import AgreementVerdict, SimConfig, SimEstimate, compare_to_analytic, simulate_run
from .solver import solve_stationary_direct
from .tables import ResultRow, emit_csv


logger = logging.getLogger(__name__)

VERDICT_CONFIRMED = 'CONFIRMED'
VERDICT_CONTRADICTED = 'CONTRADICTED'
WINNER_TIE = 'tie'


class JobRunner:
    """Base for analysis jobs: Meta carries the job metadata, run() returns a summary"""

    class Meta:
        name = ''
        description = ''

    def __init__(self):
        self.logger = logging.getLogger(f"{__name__}.{type(self).__name__}")

    def run(self, *args, **kwargs):
        raise NotImplementedError


@dataclass
class SolveOutcome:
    """Everything one solve produced; the row is what gets emitted"""

    row: ResultRow
    report: QoSReport
    estimate: Optional[SimEstimate] = None
    verdict: Optional[AgreementVerdict] = None


def solve_model(params: ModelParams, simulation: Optional[SimConfig] = None) -> SolveOutcome:
    """
    Build, solve and measure one model

    Args:
        params: Validated model parameters
        simulation: Optional simulation run of the same model for cross-check columns

    Returns:
        SolveOutcome with the solver residual recorded in its row

    Raises:
        ResidualTooLarge: If the direct solve residual exceeds direct_residual_tol
        ParamMismatch: If the simulation config describes another model
        ZeroAcceptedFlow: Forwarded from the metrics
    """
    generator = build_generator(params)
    distribution = solve_stationary_direct(generator)
    tolerance = config.get_setting('direct_residual_tol')
    if distribution.residual_inf > tolerance:
        raise ResidualTooLarge(
            f"Residual {distribution.residual_inf:.3e} above {tolerance:.0e} for {params.as_dict()}"
        )
    report = qos_report(distribution, params)

    estimate = None
    verdict = None
    if simulation is not None:
        if simulation.params != params:
            raise ParamMismatch("Simulation config describes a different model")
        estimate = simulate_run(simulation)
        verdict = compare_to_analytic(estimate, report)

    logger.debug(
        f"Solved {params.feedback.tag} R={params.threshold_r} lambda1={params.lambda_nrt}: "
        f"p_lrt={report.p_lrt:.6g}, n_nrt={report.n_nrt:.6g}, d_nrt_paper={report.d_nrt_paper:.6g}"
    )
    row = ResultRow.from_report(report, distribution.residual_inf, estimate)
    return SolveOutcome(row=row, report=report, estimate=estimate, verdict=verdict)


def run_solve(params: ModelParams, simulation: Optional[SimConfig] = None) -> ResultRow:
    """Solve one model and return its ResultRow; see solve_model"""
    return solve_model(params, simulation).row


def _solve_point(spec: SweepSpec, policy: FeedbackPolicy, value: float) -> ResultRow:
    params = point_params(spec, policy, value)
    simulation = SimConfig(params=params, seed=spec.seed) if spec.simulate else None
    return run_solve(params, simulation)


def _attempt_point(spec: SweepSpec, policy: FeedbackPolicy,
                   value: float) -> Tuple[Optional[ResultRow], Optional[Exception]]:
    """Solve one point; point-level failures come back as the second element"""
    try:
        return _solve_point(spec, policy, value), None
    except (ModelValidationError, ZeroAcceptedFlow) as e:
        return None, e


@dataclass
class SweepResult:
    """Rows in sweep order, aggregated per-point errors and monotonicity flags"""

    rows: List[ResultRow]
    errors: List[SweepPointError] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def rows_for(self, policy_tag: str) -> List[ResultRow]:
        return [row for row in self.rows if row.policy == policy_tag]


def _monotone_flags(spec: SweepSpec, rows: Sequence[ResultRow]) -> List[str]:
    """N_NRT must not fall while lambda1 rises"""
    if spec.axis != AXIS_LAMBDA_NRT:
        return []
    tolerance = config.get_setting('tie_tolerance')
    flags = []
    for policy in spec.policies:
        ordered = [row for row in rows if row.policy == policy.tag]
        for earlier, later in zip(ordered, ordered[1:]):
            if later.n_nrt < earlier.n_nrt - tolerance:
                flags.append(
                    f"{policy.tag}: n_nrt falls from {earlier.n_nrt:.9g} at lambda_nrt={earlier.lambda_nrt:g} "
                    f"to {later.n_nrt:.9g} at lambda_nrt={later.lambda_nrt:g}"
                )
    return flags


class SweepJob(JobRunner):
    """
    Job for solving every (policy, grid point) of a sweep
    """

    class Meta:
        name = "Policy Sweep"
        description = "Solve a model over a grid of lambda_nrt or R values for each feedback policy"

    def run(self, spec: SweepSpec, workers: Optional[int] = None, **kwargs) -> SweepResult:
        """
        Main sweep execution

        Args:
            spec: Sweep to run (axis, grid, policies)
            workers: Process count; 1 solves in-process (default from sweep_workers)

        Returns:
            SweepResult; invalid points are reported in errors, never skipped silently
        """
        workers = config.get_setting('sweep_workers') if workers is None else workers
        points = sweep_points(spec)
        self.logger.info(
            f"Starting sweep over {spec.axis}: {len(spec.grid)} points x {len(spec.policies)} policies"
            f" ({workers} worker{'s' if workers != 1 else ''})"
        )

        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                futures = [executor.submit(_attempt_point, spec, policy, value) for policy, value in points]
                outcomes = [future.result() for future in futures]
        else:
            outcomes = [_attempt_point(spec, policy, value) for policy, value in points]

        rows: List[ResultRow] = []
        errors: List[SweepPointError] = []
        for (policy, value), (row, error) in zip(points, outcomes):
            if error is not None:
                point_error = SweepPointError(value, policy.tag, error)
                self.logger.warning(f"Sweep point failed: {point_error}")
                errors.append(point_error)
            else:
                rows.append(row)

        flags = _monotone_flags(spec, rows)
        for flag in flags:
            self.logger.warning(f"Monotonicity check: {flag}")

        self.logger.info(
            f"Sweep completed. Points solved: {len(rows)}, Errors: {len(errors)}, Flags: {len(flags)}"
        )
        return SweepResult(rows=rows, errors=errors, flags=flags)


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> SweepResult:
    """Solve spec.policies x spec.grid; see SweepJob.run"""
    return SweepJob().run(spec, workers=workers)


def _axis_value(row: ResultRow, axis: str) -> float:
    return row.r if axis == AXIS_THRESHOLD_R else row.lambda_nrt


def compare_policies(result: SweepResult, axis: str, reference: str, challenger: str,
                     metric: str = 'd_nrt_paper') -> List[Dict[str, Any]]:
    """
    Per-grid-point comparison of two policies on one metric

    Returns:
        One dict per shared grid point with the two values, their difference
        (reference - challenger) and the winner (lower value; 'tie' within tie_tolerance)
    """
    tolerance = config.get_setting('tie_tolerance')
    challengers = {_axis_value(row, axis): row for row in result.rows_for(challenger)}
    points = []
    for row in result.rows_for(reference):
        value = _axis_value(row, axis)
        other = challengers.get(value)
        if other is None:
            continue
        difference = getattr(row, metric) - getattr(other, metric)
        if difference < -tolerance:
            winner = reference
        elif difference > tolerance:
            winner = challenger
        else:
            winner = WINNER_TIE
        points.append({
            'value': value,
            reference: getattr(row, metric),
            challenger: getattr(other, metric),
            'difference': difference,
            'winner': winner,
        })
    return points


def find_crossovers(points: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """
    Grid intervals where the winner flips, with a linearly interpolated crossing

    Ties are skipped when looking for sign changes.
    """
    decided = [point for point in points if point['winner'] != WINNER_TIE]
    crossovers = []
    for left, right in zip(decided, decided[1:]):
        if left['winner'] == right['winner']:
            continue
        d_left, d_right = left['difference'], right['difference']
        estimate = left['value'] + (right['value'] - left['value']) * d_left / (d_left - d_right)
        crossovers.append({
            'between': [left['value'], right['value']],
            'estimate': estimate,
            'from': left['winner'],
            'to': right['winner'],
        })
    return crossovers


class FigureJob(JobRunner):
    """
    Base job for reproducing one published figure as CSV + ordering summary

    Subclasses define the sweep (base model, axis, challenger policy) and the
    claim check.
    """

    figure = ''
    axis = AXIS_LAMBDA_NRT
    challenger: FeedbackPolicy = ConstantFraction(0.5)
    outputs: Tuple[str, ...] = ('d_nrt_paper', 'n_nrt')
    claim = ''

    def base_params(self) -> ModelParams:
        return ModelParams.canonical(lambda_nrt=config.get_setting('default_lambda_nrt'))

    def default_grid(self) -> Tuple[float, ...]:
        return tuple(config.get_setting('lambda_grid'))

    def build_spec(self, grid: Optional[Sequence[float]] = None) -> SweepSpec:
        return SweepSpec(
            base=self.base_params(),
            axis=self.axis,
            grid=tuple(grid) if grid is not None else self.default_grid(),
            policies=(Linear(), self.challenger),
            outputs=self.outputs,
            grid_is_default=grid is None,
        )

    def judge(self, points: Sequence[Dict[str, Any]], crossovers: Sequence[Dict[str, Any]]) -> bool:
        """True when the computed ordering matches the claim"""
        raise NotImplementedError

    def run(self, outdir: Union[str, Path], chart: bool = False,
            grid: Optional[Sequence[float]] = None, **kwargs) -> Dict[str, Any]:
        """
        Sweep, write <figure>.csv and <figure>_summary.json (and <figure>.svg with chart)

        Args:
            outdir: Existing, writable directory
            chart: Also draw an SVG line chart
            grid: Override the default grid

        Returns:
            The summary dict written to JSON
        """
        outdir = Path(outdir)
        spec = self.build_spec(grid)
        self.logger.info(f"Reproducing {self.figure} ({self.Meta.description})")

        result = SweepJob().run(spec, workers=kwargs.get('workers'))
        reference, challenger = Linear().tag, self.challenger.tag
        comparisons = {
            metric: compare_policies(result, spec.axis, reference, challenger, metric) for metric in spec.outputs
        }
        points = comparisons['d_nrt_paper']
        crossovers = find_crossovers(points)
        verdict = VERDICT_CONFIRMED if (points and self.judge(points, crossovers)) else VERDICT_CONTRADICTED

        emit_csv(result.rows, outdir / f"{self.figure}.csv")
        summary = {
            'figure': self.figure,
            'claim': self.claim,
            'axis': spec.axis,
            'grid': list(spec.grid),
            'grid_is_default': spec.grid_is_default,
            'policies': [reference, challenger],
            'metric': 'd_nrt_paper',
            'points': points,
            'winners': {metric: [point['winner'] for point in values] for metric, values in comparisons.items()},
            'crossovers': crossovers,
            'verdict': verdict,
            'errors': [str(error) for error in result.errors],
            'flags': result.flags,
        }
        summary_path = outdir / f"{self.figure}_summary.json"
        with summary_path.open('w', encoding='utf-8') as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write('\n')

        if chart:
            plot_sweep(result.rows, spec.axis, spec.outputs, outdir / f"{self.figure}.svg",
                       title=self.Meta.description)

        log = self.logger.info if verdict == VERDICT_CONFIRMED else self.logger.warning
        log(f"{self.figure}: claim {verdict} ({len(crossovers)} crossover(s)); summary in {summary_path}")
        return summary


class Figure3Job(FigureJob):
    class Meta:
        name = "Figure 3"
        description = "NRT queue and delay versus lambda_nrt, linear vs constant 0.5"

    figure = 'fig3'
    challenger = ConstantFraction(0.5)
    claim = 'linear d_nrt_paper <= constant:0.5 d_nrt_paper at every lambda_nrt'

    def judge(self, points, crossovers):
        return all(point['winner'] != self.challenger.tag for point in points)


class Figure4Job(FigureJob):
    class Meta:
        name = "Figure 4"
        description = "NRT queue and delay versus lambda_nrt, linear vs constant 0.25"

    figure = 'fig4'
    challenger = ConstantFraction(0.25)
    claim = 'constant:0.25 wins at low lambda_nrt, linear at high lambda_nrt, one crossover'

    def judge(self, points, crossovers):
        return (
            points[0]['winner'] == self.challenger.tag
            and points[-1]['winner'] == Linear().tag
            and len(crossovers) == 1
        )


class Figure5Job(FigureJob):
    class Meta:
        name = "Figure 5"
        description = "NRT delay versus R at lambda_nrt = 15, linear vs constant 0.5"

    figure = 'fig5'
    axis = AXIS_THRESHOLD_R
    challenger = ConstantFraction(0.5)
    outputs = ('d_nrt_paper',)
    claim = 'linear d_nrt_paper <= constant:0.5 d_nrt_paper for every R'

    def base_params(self) -> ModelParams:
        return ModelParams.canonical(lambda_nrt=config.get_setting('fig5_lambda_nrt'))

    def default_grid(self) -> Tuple[float, ...]:
        return tuple(config.get_setting('r_grid'))

    def judge(self, points, crossovers):
        return all(point['winner'] != self.challenger.tag for point in points)


class CrossoverMapJob(JobRunner):
    """
    Job for locating the linear vs constant 0.25 crossover for every R
    """

    class Meta:
        name = "Crossover Map"
        description = "Where linear overtakes constant 0.25 in NRT delay, per R"

    figure = 'crossover'
    challenger = ConstantFraction(0.25)

    def run(self, outdir: Union[str, Path], chart: bool = False,
            r_grid: Optional[Sequence[int]] = None, lambda_grid: Optional[Sequence[float]] = None,
            **kwargs) -> Dict[str, Any]:
        """
        Sweep lambda_nrt for each R and summarize the crossovers

        Args:
            outdir: Existing, writable directory
            chart: Also draw crossover lambda_nrt versus R as SVG
            r_grid: Override the R grid
            lambda_grid: Override the lambda_nrt grid

        Returns:
            Summary dict (also written to crossover_summary.json)
        """
        outdir = Path(outdir)
        grid_is_default = r_grid is None and lambda_grid is None
        r_values = tuple(r_grid) if r_grid is not None else tuple(config.get_setting('r_grid'))
        lambda_values = tuple(lambda_grid) if lambda_grid is not None else tuple(config.get_setting('lambda_grid'))
        reference, challenger = Linear().tag, self.challenger.tag
        self.logger.info(f"Mapping crossovers for {len(r_values)} values of R")

        rows: List[ResultRow] = []
        per_r = []
        errors: List[str] = []
        for threshold_r in r_values:
            try:
                base = ModelParams.canonical(threshold_r=threshold_r)
            except ModelValidationError as e:
                self.logger.warning(f"Skipping R={threshold_r}: {e}")
                errors.append(f"R={threshold_r}: {type(e).__name__}: {e}")
                continue
            spec = SweepSpec(
                base=base,
                axis=AXIS_LAMBDA_NRT,
                grid=lambda_values,
                policies=(Linear(), self.challenger),
                outputs=('d_nrt_paper',),
            )
            result = SweepJob().run(spec, workers=kwargs.get('workers'))
            rows.extend(result.rows)
            errors.extend(str(error) for error in result.errors)
            points = compare_policies(result, AXIS_LAMBDA_NRT, reference, challenger)
            crossovers = find_crossovers(points)
            holds = (
                bool(points)
                and points[0]['winner'] == challenger
                and points[-1]['winner'] == reference
                and len(crossovers) == 1
            )
            per_r.append({
                'r': threshold_r,
                'winners': [point['winner'] for point in points],
                'crossovers': crossovers,
                'ordering_holds': holds,
            })
            self.logger.debug(f"R={threshold_r}: {len(crossovers)} crossover(s), ordering holds: {holds}")

        verdict = VERDICT_CONFIRMED if per_r and all(item['ordering_holds'] for item in per_r) else VERDICT_CONTRADICTED
        emit_csv(rows, outdir / f"{self.figure}.csv")
        summary = {
            'figure': self.figure,
            'claim': 'constant:0.25 leads at low lambda_nrt and linear at high lambda_nrt for every R',
            'r_grid': list(r_values),
            'lambda_grid': list(lambda_values),
            'grid_is_default': grid_is_default,
            'policies': [reference, challenger],
            'metric': 'd_nrt_paper',
            'per_r': per_r,
            'verdict': verdict,
            'errors': errors,
        }
        summary_path = outdir / f"{self.figure}_summary.json"
        with summary_path.open('w', encoding='utf-8') as handle:
            json.dump(summary, handle, indent=2, sort_keys=True)
            handle.write('\n')

        if chart:
            plot_crossover_map(per_r, outdir / f"{self.figure}.svg", title=self.Meta.description)

        self.logger.info(f"Crossover map: claim {verdict}; summary in {summary_path}")
        return summary


def reproduce_fig3(outdir: Union[str, Path], chart: bool = False, grid: Optional[Sequence[float]] = None) -> Dict:
    return Figure3Job().run(outdir, chart=chart, grid=grid)


def reproduce_fig4(outdir: Union[str, Path], chart: bool = False, grid: Optional[Sequence[float]] = None) -> Dict:
    return Figure4Job().run(outdir, chart=chart, grid=grid)


def reproduce_fig5(outdir: Union[str, Path], chart: bool = False, grid: Optional[Sequence[float]] = None) -> Dict:
    return Figure5Job().run(outdir, chart=chart, grid=grid)


def reproduce_crossover_map(outdir: Union[str, Path], chart: bool = False,
                            r_grid: Optional[Sequence[int]] = None,
                            lambda_grid: Optional[Sequence[float]] = None) -> Dict:
    return CrossoverMapJob().run(outdir, chart=chart, r_grid=r_grid, lambda_grid=lambda_grid)


FIGURE_JOBS = {
    '3': reproduce_fig3,
    '4': reproduce_fig4,
    '5': reproduce_fig5,
    'crossover': reproduce_crossover_map,
}
