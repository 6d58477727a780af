"""
Event-driven simulator tests

Statistical checks use the medium model, whose chain mixes quickly; the long
reference-model run is marked slow.
"""

import time
from dataclasses import replace
from unittest import TestCase

import numpy as np
import pytest

from tsp_aqm.exceptions import InvalidConfig, ParamMismatch
from tsp_aqm.generator import build_generator
from tsp_aqm.metrics import qos_report
from tsp_aqm.models import arrival_rate_nrt
from tsp_aqm.simulator import METRIC_NAMES, Interval, SimConfig, compare_to_analytic, simulate_run
from tsp_aqm.solver import solve_stationary_direct

from tests.test_utils import TestConfig, make_params, medium_params


def _analytic(params):
    distribution = solve_stationary_direct(build_generator(params))
    return distribution, qos_report(distribution, params)


def _run(params, seed=11, warmup=2_000, measured=100_000, batches=20):
    return simulate_run(SimConfig(
        params=params, seed=seed, warmup_events=warmup, measured_events=measured, batches=batches,
    ))


@pytest.mark.unit
class SimConfigTest(TestCase):
    """Test cases for SimConfig validation"""

    def setUp(self):
        """Set up test data"""
        self.params = medium_params()

    def test_defaults(self):
        """Test the configured defaults"""
        cfg = SimConfig(params=self.params, seed=1)

        self.assertEqual(cfg.warmup_events, 100_000)
        self.assertEqual(cfg.measured_events, 10_000_000)
        self.assertEqual(cfg.batches, 20)

    def test_invalid_batches(self):
        """Test batches >= 2 and measured_events >= batches"""
        with self.assertRaises(InvalidConfig):
            SimConfig(params=self.params, seed=1, batches=1)
        with self.assertRaises(InvalidConfig):
            SimConfig(params=self.params, seed=1, measured_events=5, batches=10)

    def test_invalid_warmup_and_seed(self):
        """Test warmup >= 0 and a 64-bit unsigned seed"""
        with self.assertRaises(InvalidConfig):
            SimConfig(params=self.params, seed=1, warmup_events=-1)
        with self.assertRaises(InvalidConfig):
            SimConfig(params=self.params, seed=-1)
        with self.assertRaises(InvalidConfig):
            SimConfig(params=self.params, seed=2 ** 64)

    def test_simulate_run_requires_config(self):
        """Test that simulate_run rejects anything but a SimConfig"""
        with self.assertRaises(InvalidConfig):
            simulate_run({'params': self.params, 'seed': 1})


@pytest.mark.unit
class SimulationBehaviourTest(TestCase):
    """Test cases for the bookkeeping of a single run"""

    def setUp(self):
        """Set up test data"""
        self.params = medium_params()

    def test_same_seed_same_output(self):
        """Test bit-identical estimates for a fixed seed"""
        first = _run(self.params, seed=7, measured=20_000, batches=10)
        second = _run(self.params, seed=7, measured=20_000, batches=10)

        self.assertEqual(first.as_dict(), second.as_dict())
        np.testing.assert_array_equal(first.state_time, second.state_time)
        np.testing.assert_array_equal(first.occupancy_admissions, second.occupancy_admissions)

    def test_different_seed_different_output(self):
        """Test that the seed drives the run"""
        first = _run(self.params, seed=7, measured=20_000, batches=10)
        second = _run(self.params, seed=8, measured=20_000, batches=10)

        self.assertNotEqual(first.as_dict(), second.as_dict())

    def test_estimate_invariants(self):
        """Test non-negative estimates and losses bounded by arrivals"""
        estimate = _run(self.params, measured=20_000, batches=10)

        for name in METRIC_NAMES:
            interval = estimate.metric(name)
            self.assertGreaterEqual(interval.point, 0.0, msg=name)
            self.assertGreaterEqual(interval.half_width, 0.0, msg=name)
        self.assertLessEqual(estimate.rt_losses, estimate.rt_arrivals)
        self.assertAlmostEqual(float(estimate.state_time.sum()), estimate.measured_time, places=6)

    def test_no_nrt_packet_dropped_after_admission(self):
        """Test admissions = departures + final queue content with no warmup"""
        estimate = _run(self.params, warmup=0, measured=30_000, batches=10)

        self.assertEqual(estimate.nrt_in_queue_at_start, 0)
        self.assertEqual(estimate.nrt_admissions, estimate.nrt_departures + estimate.nrt_in_queue_at_end)

    def test_no_drop_balance_after_warmup(self):
        """Test the same balance counting the content left by the warmup"""
        estimate = _run(self.params, warmup=5_000, measured=30_000, batches=10)

        self.assertEqual(
            estimate.nrt_in_queue_at_start + estimate.nrt_admissions,
            estimate.nrt_departures + estimate.nrt_in_queue_at_end,
        )

    def test_no_nrt_traffic(self):
        """Test lambda1 = 0: no admissions, empty NRT queue"""
        estimate = _run(medium_params(lambda_nrt=0.0), measured=20_000, batches=10)

        self.assertEqual(estimate.nrt_admissions, 0)
        self.assertEqual(estimate.nrt_throttle_drops, 0)
        self.assertEqual(estimate.mean_nrt_in_queue.point, 0.0)
        self.assertEqual(estimate.accepted_nrt_rate.point, 0.0)

    def test_thinning_matches_state_dependent_rate(self):
        """Test admissions per occupancy against exposure time x arrival_rate_nrt(k)"""
        estimate = _run(self.params, measured=200_000)

        checked = 0
        for k, exposure in enumerate(estimate.occupancy_exposure):
            expected = exposure * arrival_rate_nrt(self.params, k)
            if expected < 50.0:
                continue
            checked += 1
            self.assertLessEqual(
                abs(estimate.occupancy_admissions[k] - expected),
                5.0 * np.sqrt(expected) + 1.0,
                msg=f"k={k}",
            )
        self.assertGreater(checked, 5)
        # nothing is admitted at or above H
        self.assertEqual(int(estimate.occupancy_admissions[self.params.threshold_h:].sum()), 0)


@pytest.mark.unit
class AgreementTest(TestCase):
    """Test cases for compare_to_analytic"""

    def setUp(self):
        """Set up test data"""
        self.params = medium_params()
        self.distribution, self.report = _analytic(self.params)

    def test_simulation_agrees_with_analytic_model(self):
        """Test all five checks pass on the medium model"""
        estimate = _run(self.params, measured=200_000)
        verdict = compare_to_analytic(estimate, self.report)

        self.assertTrue(verdict.passed, msg='\n'.join(verdict.as_lines()))
        self.assertEqual(len(verdict.checks), 5)
        self.assertIn(verdict.closer_nrt_delay, ('d_nrt_paper', 'd_nrt_little'))

    def test_preempted_nrt_service_under_heavy_rt_load(self):
        """Test NRT metrics when RT arrivals keep interrupting NRT service"""
        params = self.params.with_changes(lambda_rt=5.5, mu_rt=6.0)
        _, report = _analytic(params)
        estimate = _run(params, measured=200_000)

        self.assertTrue(estimate.mean_nrt_in_queue.contains(report.n_nrt))
        self.assertTrue(estimate.accepted_nrt_rate.contains(report.lambda_eff_nrt))
        self.assertEqual(
            estimate.nrt_in_queue_at_start + estimate.nrt_admissions,
            estimate.nrt_departures + estimate.nrt_in_queue_at_end,
        )

    def test_histogram_converges(self):
        """Test the time-weighted state histogram against the stationary distribution"""
        estimate = _run(self.params, measured=200_000)
        empirical = estimate.state_time.ravel() / estimate.measured_time

        self.assertLessEqual(np.max(np.abs(empirical - self.distribution.probabilities)), 0.01)

    def test_perturbed_model_is_detected(self):
        """Test that a 10% error in mu1 fails at least one check"""
        perturbed = _run(self.params.with_changes(mu_nrt=self.params.mu_nrt * 1.1), measured=200_000)
        verdict = compare_to_analytic(replace(perturbed, params=self.params), self.report)

        self.assertFalse(verdict.passed)
        self.assertTrue(verdict.failures)

    def test_param_mismatch(self):
        """Test that estimates of another model are refused"""
        estimate = _run(self.params, measured=10_000, batches=5)
        _, other_report = _analytic(medium_params(lambda_nrt=3.0))

        with self.assertRaises(ParamMismatch):
            compare_to_analytic(estimate, other_report)

    def test_rt_free_model_matches_class_little_law(self):
        """Test measured NRT sojourn against N_NRT / lambda_eff when RT traffic vanishes"""
        params = medium_params(lambda_rt=1e-9)
        _, report = _analytic(params)
        estimate = _run(params, measured=200_000)

        self.assertTrue(estimate.mean_nrt_sojourn.contains(report.d_nrt_little))

    def test_interval_contains(self):
        """Test the half-width bound"""
        interval = Interval(1.0, 0.1)

        self.assertTrue(interval.contains(1.3))
        self.assertFalse(interval.contains(1.31))
        self.assertTrue(interval.contains(1.15, widths=2.0))


@pytest.mark.slow
class CanonicalSimulationTest(TestCase):
    """Long cross-validation run on the reference model"""

    def test_canonical_run_agrees(self):
        """Test 10^7 measured events against the analytic metrics"""
        params = make_params()
        _, report = _analytic(params)
        started = time.perf_counter()
        estimate = simulate_run(SimConfig(params=params, seed=2024))
        elapsed = time.perf_counter() - started
        verdict = compare_to_analytic(estimate, report)

        self.assertTrue(estimate.rt_loss_fraction.contains(TestConfig.CANONICAL_P_LRT))
        self.assertTrue(verdict.passed, msg='\n'.join(verdict.as_lines()))
        self.assertLess(elapsed, TestConfig.CANONICAL_SIMULATION_SECONDS)
