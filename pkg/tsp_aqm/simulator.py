"""
Event-driven simulation of the time-space priority buffer

The simulator is written against the queue rules directly (it never touches
the generator): RT packets are blocked at R, NRT arrivals form a Poisson
stream of rate lambda1 thinned with probability arrival_rate_nrt(k)/lambda1,
and the server works on RT packets whenever any are present, preempting an
NRT service in progress (exponential services make resume and redraw
equivalent).

Randomness comes from numpy's PCG64 generator. One SeedSequence(seed) spawns
five child streams (RT arrivals, NRT arrivals, RT service, NRT service,
thinning) and variates are drawn in fixed-size blocks, so a given seed yields
bit-identical output.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, NamedTuple, Optional

import numpy as np
import simpy
from scipy import stats

from . import config
from .exceptions import InvalidConfig, ParamMismatch
from .metrics import QoSReport
from .models import ModelParams, arrival_rate_nrt


logger = logging.getLogger(__name__)

METRIC_NAMES = (
    'rt_loss_fraction',
    'mean_rt_in_queue',
    'mean_nrt_in_queue',
    'accepted_nrt_rate',
    'mean_rt_sojourn',
    'mean_nrt_sojourn',
)

# simulated metric -> analytic QoSReport field checked against it
ANALYTIC_COUNTERPARTS = (
    ('rt_loss_fraction', 'p_lrt'),
    ('mean_rt_in_queue', 'n_rt'),
    ('mean_nrt_in_queue', 'n_nrt'),
    ('accepted_nrt_rate', 'lambda_eff_nrt'),
    ('mean_rt_sojourn', 'd_rt'),
)


@dataclass(frozen=True)
class SimConfig:
    """Simulation run settings"""

    params: ModelParams
    seed: int
    warmup_events: int = field(default_factory=lambda: config.get_setting('sim_warmup_events'))
    measured_events: int = field(default_factory=lambda: config.get_setting('sim_measured_events'))
    batches: int = field(default_factory=lambda: config.get_setting('sim_batches'))
    confidence: float = field(default_factory=lambda: config.get_setting('sim_confidence'))

    def __post_init__(self):
        if not isinstance(self.params, ModelParams):
            raise InvalidConfig(f"params must be ModelParams, got {type(self.params).__name__}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not (0 <= self.seed < 2 ** 64):
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.warmup_events < 0:
            raise InvalidConfig(f"warmup_events must be >= 0, got {self.warmup_events}")
        if self.batches < 2:
            raise InvalidConfig(f"batches must be >= 2, got {self.batches}")
        if self.measured_events < self.batches:
            raise InvalidConfig(
                f"measured_events ({self.measured_events}) must be >= batches ({self.batches})"
            )
        if not (0.0 < self.confidence < 1.0):
            raise InvalidConfig(f"confidence must lie in (0, 1), got {self.confidence}")


class Interval(NamedTuple):
    point: float
    half_width: float

    def contains(self, value: float, widths: float = 3.0) -> bool:
        return abs(value - self.point) <= widths * self.half_width


@dataclass(eq=False)
class SimEstimate:
    """Batch-means point estimates and half-widths, plus measured-window tallies"""

    params: ModelParams
    seed: int
    rt_loss_fraction: Interval
    mean_rt_in_queue: Interval
    mean_nrt_in_queue: Interval
    accepted_nrt_rate: Interval
    mean_rt_sojourn: Interval
    mean_nrt_sojourn: Interval
    rt_arrivals: int
    rt_losses: int
    nrt_admissions: int
    nrt_throttle_drops: int
    nrt_departures: int
    nrt_in_queue_at_start: int
    nrt_in_queue_at_end: int
    measured_time: float
    state_time: np.ndarray
    occupancy_exposure: np.ndarray
    occupancy_admissions: np.ndarray

    def metric(self, name: str) -> Interval:
        return getattr(self, name)

    def as_dict(self) -> Dict[str, float]:
        values: Dict[str, float] = {}
        for name in METRIC_NAMES:
            interval = self.metric(name)
            values[name] = interval.point
            values[f"{name}_hw"] = interval.half_width
        values.update(
            rt_arrivals=self.rt_arrivals,
            rt_losses=self.rt_losses,
            nrt_admissions=self.nrt_admissions,
            nrt_throttle_drops=self.nrt_throttle_drops,
            nrt_departures=self.nrt_departures,
            measured_time=self.measured_time,
        )
        return values


class _BlockStream:
    """Variates from one PCG64 child stream, drawn in blocks"""

    def __init__(self, seed_sequence: np.random.SeedSequence, block_size: int, exponential: bool):
        self._rng = np.random.Generator(np.random.PCG64(seed_sequence))
        self._block_size = block_size
        self._exponential = exponential
        self._block: List[float] = []
        self._position = 0
        self._refill()

    def _refill(self):
        if self._exponential:
            self._block = self._rng.standard_exponential(self._block_size).tolist()
        else:
            self._block = self._rng.random(self._block_size).tolist()
        self._position = 0

    def next(self) -> float:
        if self._position == self._block_size:
            self._refill()
        value = self._block[self._position]
        self._position += 1
        return value


@dataclass
class _BatchTally:
    duration: float = 0.0
    area_rt: float = 0.0
    area_nrt: float = 0.0
    rt_arrivals: int = 0
    rt_losses: int = 0
    nrt_admissions: int = 0
    rt_completions: int = 0
    rt_sojourn_sum: float = 0.0
    nrt_completions: int = 0
    nrt_sojourn_sum: float = 0.0

    def values(self) -> Dict[str, float]:
        return {
            'rt_loss_fraction': self.rt_losses / self.rt_arrivals if self.rt_arrivals else 0.0,
            'mean_rt_in_queue': self.area_rt / self.duration if self.duration > 0 else 0.0,
            'mean_nrt_in_queue': self.area_nrt / self.duration if self.duration > 0 else 0.0,
            'accepted_nrt_rate': self.nrt_admissions / self.duration if self.duration > 0 else 0.0,
            'mean_rt_sojourn': self.rt_sojourn_sum / self.rt_completions if self.rt_completions else 0.0,
            'mean_nrt_sojourn': self.nrt_sojourn_sum / self.nrt_completions if self.nrt_completions else 0.0,
        }


class TimeSpacePrioritySimulation:
    """One simulation run; build, call run(), read the SimEstimate"""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        params = cfg.params
        self.params = params
        self.env = simpy.Environment()

        block_size = config.get_setting('sim_block_size')
        children = np.random.SeedSequence(cfg.seed).spawn(5)
        self._rt_arrival_clock = _BlockStream(children[0], block_size, exponential=True)
        self._nrt_arrival_clock = _BlockStream(children[1], block_size, exponential=True)
        self._rt_service_clock = _BlockStream(children[2], block_size, exponential=True)
        self._nrt_service_clock = _BlockStream(children[3], block_size, exponential=True)
        self._thinning = _BlockStream(children[4], block_size, exponential=False)

        self._nrt_rates = [arrival_rate_nrt(params, k) for k in range(params.capacity_n + 1)]

        self.rt_queue: Deque[float] = deque()
        self.nrt_queue: Deque[float] = deque()
        self._idle = True
        self._serving_nrt = False
        self._wakeup = self.env.event()
        self._done = self.env.event()

        self._last_time = 0.0
        self._warmup_seen = 0
        self._measured = 0
        self._measuring = False
        self._finished = False
        self._batch_events = cfg.measured_events // cfg.batches
        self._batches: List[_BatchTally] = []
        self._tally: Optional[_BatchTally] = None
        self._measure_start = 0.0

        # plain lists while running; numpy arrays in the estimate
        self._state_time = [[0.0] * (params.threshold_h + 1) for _ in range(params.threshold_r + 1)]
        self._occupancy_exposure = [0.0] * (params.capacity_n + 1)
        self._occupancy_admissions = [0] * (params.capacity_n + 1)
        self.nrt_throttle_drops = 0
        self.nrt_departures = 0
        self.nrt_in_queue_at_start = 0
        self.nrt_in_queue_at_end = 0

        self.env.process(self._rt_source())
        if params.lambda_nrt > 0.0:
            self.env.process(self._nrt_source())
        self._server_process = self.env.process(self._server())
        if cfg.warmup_events == 0:
            self._start_measuring()

    # bookkeeping

    def _advance(self):
        now = self.env.now
        dt = now - self._last_time
        self._last_time = now
        tally = self._tally
        if tally is None or dt <= 0.0:
            return
        rt_count = len(self.rt_queue)
        nrt_count = len(self.nrt_queue)
        tally.duration += dt
        tally.area_rt += dt * rt_count
        tally.area_nrt += dt * nrt_count
        self._state_time[rt_count][nrt_count] += dt
        self._occupancy_exposure[rt_count + nrt_count] += dt

    def _open_batch(self):
        self._tally = _BatchTally()
        self._batches.append(self._tally)

    def _start_measuring(self):
        self._measuring = True
        self._measure_start = self.env.now
        self._open_batch()
        self.nrt_in_queue_at_start = len(self.nrt_queue)
        logger.debug(f"Measurement window opens at t={self.env.now:.3f}")

    def _count_event(self):
        if self._finished:
            return
        if not self._measuring:
            self._warmup_seen += 1
            if self._warmup_seen >= self.cfg.warmup_events:
                self._start_measuring()
            return
        self._measured += 1
        if self._measured >= self.cfg.measured_events:
            self._measuring = False
            self._tally = None
            self._finished = True
            self.nrt_in_queue_at_end = len(self.nrt_queue)
            self._done.succeed()
        elif self._measured % self._batch_events == 0 and len(self._batches) < self.cfg.batches:
            self._open_batch()

    def _wake_server(self):
        if self._idle and not self._wakeup.triggered:
            self._wakeup.succeed()

    # processes

    def _rt_source(self):
        env = self.env
        timeout = env.timeout
        clock = self._rt_arrival_clock.next
        rt_queue = self.rt_queue
        lambda_rt = self.params.lambda_rt
        capacity = self.params.threshold_r
        while True:
            yield timeout(clock() / lambda_rt)
            self._advance()
            tally = self._tally
            if tally is not None:
                tally.rt_arrivals += 1
            if len(rt_queue) < capacity:
                rt_queue.append(env.now)
                if self._serving_nrt:
                    self._serving_nrt = False
                    self._server_process.interrupt()
                self._wake_server()
            elif tally is not None:
                tally.rt_losses += 1
            self._count_event()

    def _nrt_source(self):
        env = self.env
        timeout = env.timeout
        clock = self._nrt_arrival_clock.next
        thinning = self._thinning.next
        rt_queue = self.rt_queue
        nrt_queue = self.nrt_queue
        rates = self._nrt_rates
        admissions = self._occupancy_admissions
        lambda_nrt = self.params.lambda_nrt
        while True:
            yield timeout(clock() / lambda_nrt)
            self._advance()
            occupancy = len(rt_queue) + len(nrt_queue)
            rate = rates[occupancy]
            admitted = rate >= lambda_nrt or (rate > 0.0 and thinning() * lambda_nrt < rate)
            tally = self._tally
            if admitted:
                nrt_queue.append(env.now)
                if tally is not None:
                    tally.nrt_admissions += 1
                    admissions[occupancy] += 1
                self._wake_server()
            elif tally is not None:
                self.nrt_throttle_drops += 1
            self._count_event()

    def _server(self):
        env = self.env
        timeout = env.timeout
        rt_clock = self._rt_service_clock.next
        nrt_clock = self._nrt_service_clock.next
        rt_queue = self.rt_queue
        nrt_queue = self.nrt_queue
        mu_rt = self.params.mu_rt
        mu_nrt = self.params.mu_nrt
        while True:
            if not rt_queue and not nrt_queue:
                self._idle = True
                self._wakeup = env.event()
                yield self._wakeup
                self._idle = False
                continue

            if rt_queue:
                yield timeout(rt_clock() / mu_rt)
                self._advance()
                admitted_at = rt_queue.popleft()
                tally = self._tally
                if tally is not None:
                    tally.rt_completions += 1
                    tally.rt_sojourn_sum += env.now - admitted_at
                self._count_event()
                continue

            self._serving_nrt = True
            try:
                yield timeout(nrt_clock() / mu_nrt)
            except simpy.Interrupt:
                # RT arrival took the server; the NRT packet keeps its place at the head
                continue
            self._serving_nrt = False
            self._advance()
            admitted_at = nrt_queue.popleft()
            tally = self._tally
            if tally is not None:
                tally.nrt_completions += 1
                tally.nrt_sojourn_sum += env.now - admitted_at
                self.nrt_departures += 1
            self._count_event()

    # results

    def run(self) -> SimEstimate:
        self.env.run(until=self._done)
        return self._estimate()

    def _estimate(self) -> SimEstimate:
        batches = self._batches
        samples = {name: np.array([tally.values()[name] for tally in batches]) for name in METRIC_NAMES}
        count = len(batches)
        quantile = float(stats.t.ppf(0.5 + self.cfg.confidence / 2.0, count - 1))

        intervals: Dict[str, Interval] = {}
        for name, values in samples.items():
            spread = float(values.std(ddof=1)) if count > 1 else 0.0
            intervals[name] = Interval(float(values.mean()), quantile * spread / math.sqrt(count))

        return SimEstimate(
            params=self.params,
            seed=self.cfg.seed,
            rt_arrivals=sum(tally.rt_arrivals for tally in batches),
            rt_losses=sum(tally.rt_losses for tally in batches),
            nrt_admissions=sum(tally.nrt_admissions for tally in batches),
            nrt_throttle_drops=self.nrt_throttle_drops,
            nrt_departures=self.nrt_departures,
            nrt_in_queue_at_start=self.nrt_in_queue_at_start,
            nrt_in_queue_at_end=self.nrt_in_queue_at_end,
            measured_time=self.env.now - self._measure_start,
            state_time=np.array(self._state_time),
            occupancy_exposure=np.array(self._occupancy_exposure),
            occupancy_admissions=np.array(self._occupancy_admissions, dtype=np.int64),
            **intervals,
        )


def simulate_run(cfg: SimConfig) -> SimEstimate:
    """
    Run one simulation and return batch-means estimates

    Args:
        cfg: Simulation configuration

    Returns:
        SimEstimate over the measured window

    Raises:
        InvalidConfig: If cfg violates its invariants
    """
    if not isinstance(cfg, SimConfig):
        raise InvalidConfig(f"Expected SimConfig, got {type(cfg).__name__}")
    logger.info(
        f"Simulating {cfg.params.feedback.tag} model (R={cfg.params.threshold_r}, "
        f"lambda1={cfg.params.lambda_nrt}) for {cfg.warmup_events}+{cfg.measured_events} events, seed={cfg.seed}"
    )
    estimate = TimeSpacePrioritySimulation(cfg).run()
    logger.debug(f"Simulation estimate: {estimate.as_dict()}")
    return estimate


@dataclass
class MetricCheck:
    name: str
    analytic: float
    point: float
    half_width: float
    passed: bool


@dataclass
class AgreementVerdict:
    """Outcome of comparing a simulation against the analytic report"""

    checks: List[MetricCheck]
    closer_nrt_delay: Optional[str]
    nrt_sojourn: float
    d_nrt_paper: float
    d_nrt_little: float

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def as_lines(self) -> List[str]:
        lines = []
        for check in self.checks:
            status = 'PASS' if check.passed else 'FAIL'
            lines.append(
                f"{status} {check.name}: analytic={check.analytic:.9g} "
                f"sim={check.point:.9g} +/- {check.half_width:.3g}"
            )
        lines.append(
            f"NRT sojourn {self.nrt_sojourn:.9g}: d_nrt_paper={self.d_nrt_paper:.9g}, "
            f"d_nrt_little={self.d_nrt_little:.9g}, closer={self.closer_nrt_delay}"
        )
        return lines


def compare_to_analytic(estimate: SimEstimate, report: QoSReport, widths: float = 3.0) -> AgreementVerdict:
    """
    Check simulation estimates against the analytic metrics

    A metric passes when |analytic - point| <= widths * half_width.

    Args:
        estimate: Simulation output
        report: Analytic QoS report of the same model
        widths: Number of half-widths accepted

    Returns:
        AgreementVerdict

    Raises:
        ParamMismatch: If the two come from different models
    """
    if estimate.params != report.params:
        raise ParamMismatch("Simulation and analytic report use different model parameters")

    checks = []
    for sim_name, analytic_name in ANALYTIC_COUNTERPARTS:
        interval = estimate.metric(sim_name)
        analytic = getattr(report, analytic_name)
        checks.append(MetricCheck(
            name=sim_name,
            analytic=analytic,
            point=interval.point,
            half_width=interval.half_width,
            passed=interval.contains(analytic, widths),
        ))

    sojourn = estimate.mean_nrt_sojourn.point
    closer = None
    if estimate.nrt_departures > 0:
        published_gap = abs(report.d_nrt_paper - sojourn)
        little_gap = abs(report.d_nrt_little - sojourn)
        closer = 'd_nrt_paper' if published_gap < little_gap else 'd_nrt_little'

    verdict = AgreementVerdict(
        checks=checks,
        closer_nrt_delay=closer,
        nrt_sojourn=sojourn,
        d_nrt_paper=report.d_nrt_paper,
        d_nrt_little=report.d_nrt_little,
    )
    if not verdict.passed:
        logger.warning(f"Simulation disagrees with analytic model on: {', '.join(verdict.failures)}")
    return verdict
