"""
Solve, sweep and figure reproduction job tests
"""

import json
from dataclasses import replace
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase
from unittest.mock import patch

import pytest

from tsp_aqm import config
from tsp_aqm.exceptions import ParamMismatch, ResidualTooLarge, SweepPointError, ThresholdOrderViolation
from tsp_aqm.jobs import (
    VERDICT_CONFIRMED,
    VERDICT_CONTRADICTED,
    WINNER_TIE,
    CrossoverMapJob,
    Figure3Job,
    Figure4Job,
    Figure5Job,
    SweepResult,
    _monotone_flags,
    compare_policies,
    find_crossovers,
    reproduce_fig3,
    reproduce_fig4,
    reproduce_fig5,
    run_solve,
    run_sweep,
    solve_model,
)
from tsp_aqm.models import ConstantFraction, Linear
from tsp_aqm.runconfig import AXIS_LAMBDA_NRT, AXIS_THRESHOLD_R, SweepSpec, parse_config
from tsp_aqm.simulator import SimConfig

from tests.test_utils import TestConfig, make_params, medium_params, small_params


def _row_values(row, names):
    return tuple(getattr(row, name) for name in names)


@pytest.mark.unit
class RunSolveTest(TestCase):
    """Test cases for run_solve and solve_model"""

    def test_canonical_row(self):
        """Test p_lrt = 1/31 and a recorded residual"""
        row = run_solve(make_params())

        self.assertEqual(row.policy, 'linear')
        self.assertEqual(row.h, 70)
        self.assertAlmostEqual(row.p_lrt, TestConfig.CANONICAL_P_LRT, delta=1e-9)
        self.assertLessEqual(row.residual, 1e-10)

    def test_rt_columns_invariant_across_policies(self):
        """Test identical RT columns for linear and constant:0.5"""
        rt_columns = ('p_lrt', 'n_rt', 'd_rt')
        linear = run_solve(make_params())
        constant = run_solve(make_params(feedback=ConstantFraction(0.5)))

        for name, left, right in zip(rt_columns, _row_values(linear, rt_columns), _row_values(constant, rt_columns)):
            self.assertAlmostEqual(left, right, delta=1e-9, msg=name)
        self.assertNotAlmostEqual(linear.n_nrt, constant.n_nrt, places=6)

    def test_small_instance_row(self):
        """Test the 8-state row against the exact metrics"""
        row = run_solve(small_params())

        self.assertAlmostEqual(row.p_lrt, TestConfig.SMALL_METRICS['p_lrt'], delta=1e-12)
        self.assertAlmostEqual(row.n_nrt, TestConfig.SMALL_METRICS['n_nrt'], delta=1e-12)
        self.assertAlmostEqual(row.d_nrt_paper, TestConfig.SMALL_METRICS['d_nrt_paper'], delta=1e-12)
        self.assertAlmostEqual(row.d_nrt_little, TestConfig.SMALL_METRICS['d_nrt_little'], delta=1e-12)
        self.assertAlmostEqual(row.lambda_eff, TestConfig.SMALL_METRICS['lambda_eff_nrt'], delta=1e-12)

    def test_residual_above_tolerance_aborts(self):
        """Test ResidualTooLarge when the tolerance cannot be met"""
        with patch.dict(config.default_settings, {'direct_residual_tol': -1.0}):
            with self.assertRaises(ResidualTooLarge):
                run_solve(small_params())

    def test_simulation_columns_and_verdict(self):
        """Test a short simulation attached to the solve"""
        params = medium_params()
        simulation = SimConfig(params=params, seed=5, warmup_events=1_000, measured_events=20_000, batches=10)
        outcome = solve_model(params, simulation)

        self.assertIsNotNone(outcome.estimate)
        self.assertIsNotNone(outcome.verdict)
        self.assertEqual(set(outcome.row.simulation), {
            'rt_loss_fraction', 'mean_rt_in_queue', 'mean_nrt_in_queue',
            'accepted_nrt_rate', 'mean_rt_sojourn', 'mean_nrt_sojourn',
        })

    def test_simulation_of_another_model(self):
        """Test ParamMismatch"""
        simulation = SimConfig(params=medium_params(lambda_nrt=3.0), seed=5, measured_events=100, batches=2)

        with self.assertRaises(ParamMismatch):
            solve_model(medium_params(), simulation)


@pytest.mark.unit
class RunSweepTest(TestCase):
    """Test cases for run_sweep"""

    def test_row_order_and_count(self):
        """Test rows ordered by policy, then grid value"""
        result = run_sweep(parse_config(TestConfig.SWEEP_CONFIG))

        self.assertTrue(result.ok)
        self.assertEqual(
            [(row.policy, row.lambda_nrt) for row in result.rows],
            [('linear', 5.0), ('linear', 20.0), ('linear', 35.0),
             ('constant:0.5', 5.0), ('constant:0.5', 20.0), ('constant:0.5', 35.0)],
        )
        self.assertEqual(result.flags, [])

    def test_default_grid_gives_26_rows(self):
        """Test 2 policies x 13 lambda1 values"""
        spec = parse_config(TestConfig.SWEEP_CONFIG.replace('grid = 5, 20, 35\n', ''))
        result = run_sweep(spec)

        self.assertEqual(len(result.rows), 26)
        self.assertEqual(len(result.rows_for('linear')), 13)

    def test_n_nrt_rises_with_lambda(self):
        """Test that n_nrt is non-decreasing in lambda1 for both policies"""
        result = run_sweep(parse_config(TestConfig.SWEEP_CONFIG))

        for tag in ('linear', 'constant:0.5'):
            values = [row.n_nrt for row in result.rows_for(tag)]
            self.assertEqual(values, sorted(values))

    def test_threshold_sweep_rederives_h(self):
        """Test R sweep at lambda1 = 15: all points valid and H = N - R"""
        spec = SweepSpec(
            base=make_params(lambda_nrt=15.0),
            axis=AXIS_THRESHOLD_R,
            grid=(10, 25, 45),
            policies=(Linear(),),
        )
        result = run_sweep(spec)

        self.assertTrue(result.ok)
        self.assertEqual([(row.r, row.h) for row in result.rows], [(10, 90), (25, 75), (45, 55)])

    def test_invalid_threshold_point_is_reported(self):
        """Test R = 55 with L = 50: per-point error, other points kept"""
        spec = SweepSpec(
            base=make_params(lambda_nrt=15.0),
            axis=AXIS_THRESHOLD_R,
            grid=(40, 55),
            policies=(Linear(), ConstantFraction(0.5)),
        )
        result = run_sweep(spec)

        self.assertFalse(result.ok)
        self.assertEqual(len(result.rows), 2)
        self.assertEqual(len(result.errors), 2)
        for error in result.errors:
            self.assertIsInstance(error, SweepPointError)
            self.assertIsInstance(error.error, ThresholdOrderViolation)
            self.assertEqual(error.grid_value, 55)

    def test_zero_lambda_point_is_reported(self):
        """Test that lambda1 = 0 leaves the NRT delay undefined at that point"""
        spec = SweepSpec(
            base=make_params(),
            axis=AXIS_LAMBDA_NRT,
            grid=(0.0, 5.0),
            policies=(Linear(),),
        )
        result = run_sweep(spec)

        self.assertEqual(len(result.rows), 1)
        self.assertEqual(len(result.errors), 1)
        self.assertEqual(result.errors[0].policy_tag, 'linear')

    def test_falling_n_nrt_is_flagged(self):
        """Test one flag naming the policy and both lambda1 values when n_nrt falls"""
        spec = SweepSpec(
            base=make_params(),
            axis=AXIS_LAMBDA_NRT,
            grid=(5.0, 20.0, 35.0),
            policies=(Linear(), ConstantFraction(0.5)),
        )
        row = run_solve(small_params())
        rows = [
            replace(row, policy='linear', lambda_nrt=5.0, n_nrt=1.0),
            replace(row, policy='linear', lambda_nrt=20.0, n_nrt=3.0),
            replace(row, policy='linear', lambda_nrt=35.0, n_nrt=2.0),
            replace(row, policy='constant:0.5', lambda_nrt=5.0, n_nrt=1.0),
            replace(row, policy='constant:0.5', lambda_nrt=20.0, n_nrt=1.0),
            replace(row, policy='constant:0.5', lambda_nrt=35.0, n_nrt=4.0),
        ]

        flags = _monotone_flags(spec, rows)

        self.assertEqual(len(flags), 1)
        self.assertTrue(flags[0].startswith('linear: '))
        self.assertIn('lambda_nrt=20', flags[0])
        self.assertIn('lambda_nrt=35', flags[0])
        self.assertEqual(_monotone_flags(replace(spec, axis=AXIS_THRESHOLD_R, grid=(10, 20, 30)), rows), [])

    def test_parallel_matches_serial(self):
        """Test that worker processes do not change the rows or their order"""
        spec = parse_config(TestConfig.SWEEP_CONFIG)

        self.assertEqual(run_sweep(spec, workers=2).rows, run_sweep(spec, workers=1).rows)


@pytest.mark.unit
class PolicyComparisonTest(TestCase):
    """Test cases for compare_policies and find_crossovers"""

    def test_compare_and_crossover(self):
        """Test winners, ties and an interpolated crossing"""
        rows = run_sweep(parse_config(TestConfig.SWEEP_CONFIG)).rows
        points = compare_policies(SweepResult(rows=rows), AXIS_LAMBDA_NRT, 'linear', 'constant:0.5', 'p_lrt')

        self.assertEqual([point['value'] for point in points], [5.0, 20.0, 35.0])
        self.assertTrue(all(point['winner'] == WINNER_TIE for point in points))
        self.assertEqual(find_crossovers(points), [])

    def test_find_crossovers(self):
        """Test the linear interpolation between two grid points"""
        points = [
            {'value': 5.0, 'difference': 1.0, 'winner': 'b'},
            {'value': 10.0, 'difference': 0.0, 'winner': WINNER_TIE},
            {'value': 15.0, 'difference': -3.0, 'winner': 'a'},
        ]
        crossovers = find_crossovers(points)

        self.assertEqual(len(crossovers), 1)
        self.assertEqual(crossovers[0]['between'], [5.0, 15.0])
        self.assertAlmostEqual(crossovers[0]['estimate'], 7.5)
        self.assertEqual((crossovers[0]['from'], crossovers[0]['to']), ('b', 'a'))


@pytest.mark.unit
class FigureJobTest(TestCase):
    """Test cases for the figure reproductions on small grids"""

    def test_fig3_outputs(self):
        """Test CSV, summary and chart files for a three-point grid"""
        with TemporaryDirectory() as tmp:
            summary = reproduce_fig3(tmp, chart=True, grid=(5.0, 20.0, 35.0))
            csv_lines = (Path(tmp) / 'fig3.csv').read_text(encoding='utf-8').splitlines()
            written = json.loads((Path(tmp) / 'fig3_summary.json').read_text(encoding='utf-8'))
            svg = (Path(tmp) / 'fig3.svg').read_text(encoding='utf-8')

        self.assertEqual(len(csv_lines), 7)
        self.assertEqual(written, summary)
        self.assertFalse(summary['grid_is_default'])
        self.assertEqual(summary['policies'], ['linear', 'constant:0.5'])
        self.assertEqual(len(summary['points']), 3)
        self.assertEqual(set(summary['winners']), {'d_nrt_paper', 'n_nrt'})
        self.assertIn(summary['verdict'], (VERDICT_CONFIRMED, VERDICT_CONTRADICTED))
        self.assertIn('<svg', svg)

    def test_fig4_structure(self):
        """Test the fig4 summary fields"""
        with TemporaryDirectory() as tmp:
            summary = Figure4Job().run(tmp, grid=(5.0, 20.0, 35.0))

        self.assertEqual(summary['figure'], 'fig4')
        self.assertEqual(summary['policies'], ['linear', 'constant:0.25'])
        self.assertIn(summary['verdict'], (VERDICT_CONFIRMED, VERDICT_CONTRADICTED))
        for crossover in summary['crossovers']:
            self.assertTrue(5.0 <= crossover['estimate'] <= 35.0)

    def test_fig5_axis(self):
        """Test that fig5 sweeps R at lambda1 = 15 and emits d_nrt_paper only"""
        with TemporaryDirectory() as tmp:
            summary = Figure5Job().run(tmp, grid=(10, 30))

        self.assertEqual(summary['axis'], AXIS_THRESHOLD_R)
        self.assertEqual(list(summary['winners']), ['d_nrt_paper'])
        self.assertEqual([point['value'] for point in summary['points']], [10, 30])

    def test_output_is_deterministic(self):
        """Test byte-identical CSV and summary across runs"""
        outputs = []
        for _ in range(2):
            with TemporaryDirectory() as tmp:
                Figure3Job().run(tmp, chart=True, grid=(5.0, 35.0))
                outputs.append(tuple(
                    (Path(tmp) / name).read_bytes() for name in ('fig3.csv', 'fig3_summary.json', 'fig3.svg')
                ))

        self.assertEqual(outputs[0], outputs[1])

    def test_missing_outdir(self):
        """Test that an unwritable destination raises OSError"""
        with TemporaryDirectory() as tmp:
            with self.assertRaises(OSError):
                Figure3Job().run(Path(tmp) / 'absent', grid=(5.0,))

    def test_crossover_map_reports_bad_r(self):
        """Test per-R entries and the error for R >= L"""
        with TemporaryDirectory() as tmp:
            summary = CrossoverMapJob().run(tmp, r_grid=(30, 55), lambda_grid=(5.0, 35.0))
            self.assertTrue((Path(tmp) / 'crossover.csv').exists())

        self.assertEqual([item['r'] for item in summary['per_r']], [30])
        self.assertEqual(len(summary['errors']), 1)
        self.assertFalse(summary['grid_is_default'])


@pytest.mark.slow
class PublishedOrderingTest(TestCase):
    """Default-grid reproductions of the linear-versus-constant orderings"""

    def test_fig3_linear_never_loses(self):
        """Test that linear wins or ties at every lambda1"""
        with TemporaryDirectory() as tmp:
            summary = reproduce_fig3(tmp)

        self.assertTrue(summary['grid_is_default'])
        self.assertEqual(len(summary['points']), 13)
        self.assertEqual(summary['verdict'], VERDICT_CONFIRMED)

    def test_fig4_single_crossover(self):
        """Test constant 0.25 winning low, linear winning high, one flip between 20 and 22.5"""
        with TemporaryDirectory() as tmp:
            summary = reproduce_fig4(tmp)

        self.assertTrue(summary['grid_is_default'])
        self.assertEqual(len(summary['crossovers']), 1)
        crossover = summary['crossovers'][0]
        self.assertEqual(crossover['between'], [20.0, 22.5])
        self.assertEqual(crossover['from'], 'constant:0.25')
        self.assertEqual(crossover['to'], 'linear')
        self.assertTrue(20.0 < crossover['estimate'] < 22.5)
        self.assertEqual(summary['verdict'], VERDICT_CONFIRMED)

    def test_fig5_linear_never_loses(self):
        """Test that linear wins or ties at every R"""
        with TemporaryDirectory() as tmp:
            summary = reproduce_fig5(tmp)

        self.assertEqual(len(summary['points']), 8)
        self.assertEqual(summary['verdict'], VERDICT_CONFIRMED)
