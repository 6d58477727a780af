"""
Model parameters, NRT feedback policies and the two-dimensional state space

A state (i, j) counts i RT packets and j NRT packets in the buffer. RT space is
capped by threshold R; NRT arrivals are throttled by a feedback function of the
total occupancy k = i + j between thresholds L and H = N - R.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Mapping, NamedTuple, Tuple, Union

from .exceptions import (
    BadFraction,
    InvalidState,
    ModelValidationError,
    NonPositiveRate,
    OutOfRangeOccupancy,
    ThresholdOrderViolation,
)


logger = logging.getLogger(__name__)


class FeedbackPolicy:
    """NRT arrival-rate policy applied in the band L <= k < H"""

    def band_factor(self, k: int, threshold_l: int, threshold_h: int) -> float:
        """
        Fraction of the nominal NRT rate admitted at occupancy k in the band

        Args:
            k: Total occupancy, L <= k < H
            threshold_l: Feedback onset threshold L
            threshold_h: Feedback cutoff threshold H

        Returns:
            Multiplier applied to lambda_nrt
        """
        raise NotImplementedError

    @property
    def tag(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(FeedbackPolicy):
    """Rate falls linearly from lambda_nrt at k = L to 0 at k = H"""

    @staticmethod
    def coefficients(threshold_l: int, threshold_h: int) -> Tuple[float, float]:
        """Return (a, b) such that the band rate is (a*k + b) * lambda_nrt"""
        span = threshold_h - threshold_l
        return -1.0 / span, threshold_h / span

    def band_factor(self, k: int, threshold_l: int, threshold_h: int) -> float:
        return (threshold_h - k) / (threshold_h - threshold_l)

    @property
    def tag(self) -> str:
        return 'linear'


@dataclass(frozen=True)
class ConstantFraction(FeedbackPolicy):
    """Rate drops to fraction * lambda_nrt for the whole band"""

    fraction: float

    def __post_init__(self):
        if not isinstance(self.fraction, (int, float)) or isinstance(self.fraction, bool):
            raise BadFraction(f"Fraction must be a number, got {self.fraction!r}")
        if not (0.0 < self.fraction <= 1.0):
            raise BadFraction(f"Fraction must lie in (0, 1], got {self.fraction}")

    def band_factor(self, k: int, threshold_l: int, threshold_h: int) -> float:
        return self.fraction

    @property
    def tag(self) -> str:
        return f"constant:{self.fraction:g}"


def parse_policy(text: str) -> FeedbackPolicy:
    """
    Parse the textual form of a feedback policy

    Args:
        text: 'linear' or 'constant:<c>'

    Returns:
        FeedbackPolicy instance

    Raises:
        ModelValidationError: For an unknown policy name or malformed fraction
        BadFraction: If c lies outside (0, 1]
    """
    value = text.strip().lower()
    if value == 'linear':
        return Linear()
    if value.startswith('constant:'):
        raw_fraction = value.split(':', 1)[1].strip()
        try:
            fraction = float(raw_fraction)
        except ValueError:
            raise ModelValidationError(f"Malformed constant fraction: {raw_fraction!r}")
        return ConstantFraction(fraction)
    raise ModelValidationError(f"Unknown feedback policy: {text!r}")


def _check_positive_int(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelValidationError(f"{name} must be an integer, got {value!r}")
    if value <= 0:
        raise ThresholdOrderViolation(f"{name} must be positive, got {value}")


def _check_rate(name: str, value: Any, allow_zero: bool = False) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NonPositiveRate(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise NonPositiveRate(f"{name} must be finite, got {value}")
    if value < 0 or (value == 0 and not allow_zero):
        bound = 'non-negative' if allow_zero else 'positive'
        raise NonPositiveRate(f"{name} must be {bound}, got {value}")


@dataclass(frozen=True)
class ModelParams:
    """Full parameterization of the buffer Markov chain; H is always N - R"""

    capacity_n: int
    threshold_r: int
    threshold_l: int
    lambda_rt: float
    lambda_nrt: float
    mu_rt: float
    mu_nrt: float
    feedback: FeedbackPolicy = field(default_factory=Linear)
    threshold_h: int = field(init=False)

    def __post_init__(self):
        _check_positive_int('capacity_n', self.capacity_n)
        _check_positive_int('threshold_r', self.threshold_r)
        _check_positive_int('threshold_l', self.threshold_l)
        threshold_h = self.capacity_n - self.threshold_r
        if not (0 < self.threshold_r < self.threshold_l < threshold_h):
            raise ThresholdOrderViolation(
                f"Thresholds must satisfy 0 < R < L < N - R, got R={self.threshold_r}, "
                f"L={self.threshold_l}, N-R={threshold_h}"
            )
        _check_rate('lambda_rt', self.lambda_rt)
        _check_rate('lambda_nrt', self.lambda_nrt, allow_zero=True)
        _check_rate('mu_rt', self.mu_rt)
        _check_rate('mu_nrt', self.mu_nrt)
        if not isinstance(self.feedback, FeedbackPolicy):
            raise ModelValidationError(f"feedback must be a FeedbackPolicy, got {self.feedback!r}")
        object.__setattr__(self, 'threshold_h', threshold_h)

    @classmethod
    def canonical(cls, lambda_nrt: float = 20.0, threshold_r: int = 30,
                  feedback: FeedbackPolicy = None) -> 'ModelParams':
        """
        Build the reference configuration: N=100, L=50, lambda=mu=30, mu1=35

        Args:
            lambda_nrt: Nominal NRT arrival rate
            threshold_r: RT space threshold R (H follows as 100 - R)
            feedback: Feedback policy, Linear when omitted

        Returns:
            Validated ModelParams
        """
        return cls(
            capacity_n=100,
            threshold_r=threshold_r,
            threshold_l=50,
            lambda_rt=30.0,
            lambda_nrt=lambda_nrt,
            mu_rt=30.0,
            mu_nrt=35.0,
            feedback=feedback if feedback is not None else Linear(),
        )

    def with_changes(self, **changes: Any) -> 'ModelParams':
        """Copy with some fields replaced; the copy is re-validated and H re-derived"""
        return replace(self, **changes)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'policy': self.feedback.tag,
            'n': self.capacity_n,
            'r': self.threshold_r,
            'l': self.threshold_l,
            'h': self.threshold_h,
            'lambda_rt': self.lambda_rt,
            'lambda_nrt': self.lambda_nrt,
            'mu_rt': self.mu_rt,
            'mu_nrt': self.mu_nrt,
        }


def validate_params(raw: Union[Mapping[str, Any], ModelParams]) -> ModelParams:
    """
    Validate a parameter candidate and derive H = N - R

    Args:
        raw: Mapping with capacity_n, threshold_r, threshold_l, lambda_rt,
            lambda_nrt, mu_rt, mu_nrt and feedback (policy or its text form).
            H must not be supplied.

    Returns:
        Validated ModelParams

    Raises:
        ThresholdOrderViolation: If not 0 < R < L < N - R
        NonPositiveRate: If lambda, mu or mu1 <= 0, or lambda1 < 0
        BadFraction: If a constant fraction lies outside (0, 1]
    """
    if isinstance(raw, ModelParams):
        return raw.with_changes()

    values = dict(raw)
    if 'threshold_h' in values:
        raise ModelValidationError("threshold_h is derived as N - R and cannot be supplied")
    feedback = values.pop('feedback', Linear())
    if isinstance(feedback, str):
        feedback = parse_policy(feedback)
    missing = [key for key in ('capacity_n', 'threshold_r', 'threshold_l', 'lambda_rt',
                               'lambda_nrt', 'mu_rt', 'mu_nrt') if key not in values]
    if missing:
        raise ModelValidationError(f"Missing model parameters: {', '.join(missing)}")
    unknown = sorted(set(values) - {'capacity_n', 'threshold_r', 'threshold_l', 'lambda_rt',
                                    'lambda_nrt', 'mu_rt', 'mu_nrt'})
    if unknown:
        raise ModelValidationError(f"Unknown model parameters: {', '.join(unknown)}")

    params = ModelParams(feedback=feedback, **values)
    logger.debug(f"Validated model parameters: {params.as_dict()}")
    return params


def arrival_rate_nrt(params: ModelParams, k: int) -> float:
    """
    State-dependent NRT arrival rate as a function of total occupancy

    Args:
        params: Model parameters
        k: Total occupancy, 0 <= k <= N

    Returns:
        lambda1 below L, the policy's band rate for L <= k < H, 0 from H on

    Raises:
        OutOfRangeOccupancy: If k < 0 or k > N
    """
    if k < 0 or k > params.capacity_n:
        raise OutOfRangeOccupancy(f"Occupancy {k} outside [0, {params.capacity_n}]")
    if k < params.threshold_l:
        return params.lambda_nrt
    if k < params.threshold_h:
        return params.lambda_nrt * params.feedback.band_factor(k, params.threshold_l, params.threshold_h)
    return 0.0


class State(NamedTuple):
    rt_count: int
    nrt_count: int

    @property
    def occupancy(self) -> int:
        return self.rt_count + self.nrt_count


class StateSpace:
    """Row-major bijection between E = {0..R} x {0..H} and [0, (R+1)(H+1))"""

    def __init__(self, params: ModelParams):
        self.params = params
        self.rt_levels = params.threshold_r + 1
        self.nrt_levels = params.threshold_h + 1
        self.size = self.rt_levels * self.nrt_levels

    def __len__(self) -> int:
        return self.size

    def __iter__(self) -> Iterator[State]:
        for n in range(self.size):
            yield self.state_of(n)

    def __contains__(self, state: Any) -> bool:
        try:
            i, j = state
        except (TypeError, ValueError):
            return False
        return 0 <= i < self.rt_levels and 0 <= j < self.nrt_levels

    def index(self, state: Tuple[int, int]) -> int:
        if state not in self:
            raise InvalidState(f"State {tuple(state)} not in E = {{0..{self.rt_levels - 1}}} x "
                               f"{{0..{self.nrt_levels - 1}}}")
        i, j = state
        return i * self.nrt_levels + j

    def state_of(self, n: int) -> State:
        if not (0 <= n < self.size):
            raise InvalidState(f"Index {n} outside [0, {self.size})")
        i, j = divmod(n, self.nrt_levels)
        return State(i, j)


def enumerate_states(params: ModelParams) -> List[State]:
    """All states of E in index order, (0,0) first and (R,H) last"""
    return list(StateSpace(params))
