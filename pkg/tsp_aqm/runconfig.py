"""
Run configuration files

A run configuration is plain text with one "key = value" per line; '#' starts
a comment. A file with an `axis` key describes a sweep, otherwise it describes
a single model.

Example:
    n = 100
    r = 30
    l = 50
    lambda_rt = 30
    mu_rt = 30
    mu_nrt = 35
    policy = linear, constant:0.5
    axis = lambda_nrt
    grid = 5, 10, 15, 20
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

from . import config
from .exceptions import BadFraction, ModelValidationError, ParseError
from .models import FeedbackPolicy, ModelParams, parse_policy, validate_params


logger = logging.getLogger(__name__)

AXIS_LAMBDA_NRT = 'lambda_nrt'
AXIS_THRESHOLD_R = 'threshold_r'
AXES = (AXIS_LAMBDA_NRT, AXIS_THRESHOLD_R)

# Metrics a sweep can chart; every metric is always written to CSV
OUTPUT_METRICS = ('p_lrt', 'n_rt', 'n_nrt', 'd_rt', 'd_nrt_paper', 'd_nrt_little', 'lambda_eff')

INT_KEYS = ('n', 'r', 'l')
RATE_KEYS = ('lambda_rt', 'lambda_nrt', 'mu_rt', 'mu_nrt')
KNOWN_KEYS = INT_KEYS + RATE_KEYS + ('policy', 'axis', 'grid', 'seed', 'simulate')
REQUIRED_KEYS = ('n', 'r', 'l', 'lambda_rt', 'mu_rt', 'mu_nrt')

# config key -> ModelParams field
PARAM_FIELDS = {
    'n': 'capacity_n',
    'r': 'threshold_r',
    'l': 'threshold_l',
    'lambda_rt': 'lambda_rt',
    'lambda_nrt': 'lambda_nrt',
    'mu_rt': 'mu_rt',
    'mu_nrt': 'mu_nrt',
}


@dataclass(frozen=True)
class SolveSpec:
    """Single-model run"""

    params: ModelParams
    simulate: bool = False
    seed: int = 0


@dataclass(frozen=True)
class SweepSpec:
    """Policies x grid sweep around a base model"""

    base: ModelParams
    axis: str
    grid: Tuple[float, ...]
    policies: Tuple[FeedbackPolicy, ...]
    outputs: Tuple[str, ...] = OUTPUT_METRICS
    simulate: bool = False
    seed: int = 0
    grid_is_default: bool = False

    def __post_init__(self):
        if self.axis not in AXES:
            raise ParseError(f"axis must be one of {', '.join(AXES)}, got {self.axis!r}")
        if not self.grid:
            raise ParseError("grid must not be empty")
        if any(later <= earlier for earlier, later in zip(self.grid, self.grid[1:])):
            raise ParseError(f"grid must be strictly increasing, got {list(self.grid)}")
        if not self.policies:
            raise ParseError("at least one policy is required")
        unknown = [name for name in self.outputs if name not in OUTPUT_METRICS]
        if unknown:
            raise ParseError(f"Unknown output metrics: {', '.join(unknown)}")

    @property
    def point_count(self) -> int:
        return len(self.policies) * len(self.grid)


def _parse_int(key: str, value: str, line_number: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{key} must be an integer, got {value!r}", line_number)


def _parse_float(key: str, value: str, line_number: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {value!r}", line_number)


def _parse_bool(key: str, value: str, line_number: int) -> bool:
    lowered = value.lower()
    if lowered == 'true':
        return True
    if lowered == 'false':
        return False
    raise ParseError(f"{key} must be true or false, got {value!r}", line_number)


def _parse_policy(value: str, line_number: int) -> FeedbackPolicy:
    """Policy text to FeedbackPolicy; an out-of-range fraction stays a BadFraction"""
    try:
        return parse_policy(value)
    except BadFraction:
        raise
    except ModelValidationError as e:
        raise ParseError(str(e), line_number)


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(',') if item.strip()]


def _read_pairs(text: str) -> Dict[str, Tuple[str, int]]:
    """Map key -> (raw value, line number), rejecting malformed, unknown and repeated keys"""
    pairs: Dict[str, Tuple[str, int]] = {}
    for line_number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", line_number)
        key, value = (part.strip() for part in line.split('=', 1))
        key = key.lower()
        if key not in KNOWN_KEYS:
            raise ParseError(f"unknown key {key!r}", line_number)
        if key in pairs:
            raise ParseError(f"duplicate key {key!r} (first set on line {pairs[key][1]})", line_number)
        if not value:
            raise ParseError(f"empty value for {key!r}", line_number)
        pairs[key] = (value, line_number)
    return pairs


def parse_config(text: str) -> Union[SweepSpec, SolveSpec]:
    """
    Parse a run configuration

    Args:
        text: Configuration file content

    Returns:
        SweepSpec when an axis is given, SolveSpec otherwise

    Raises:
        ParseError: For malformed lines, unknown or missing keys, bad values
        ModelValidationError: Forwarded from validate_params; BadFraction also
            passes through from the policy key
    """
    pairs = _read_pairs(text)

    missing = [key for key in REQUIRED_KEYS if key not in pairs]
    if missing:
        raise ParseError(f"missing required keys: {', '.join(missing)}")

    raw_params: Dict[str, object] = {}
    for key in INT_KEYS:
        value, line_number = pairs[key]
        raw_params[PARAM_FIELDS[key]] = _parse_int(key, value, line_number)
    for key in RATE_KEYS:
        if key in pairs:
            value, line_number = pairs[key]
            raw_params[PARAM_FIELDS[key]] = _parse_float(key, value, line_number)
    raw_params.setdefault('lambda_nrt', config.get_setting('default_lambda_nrt'))

    policy_text, policy_line = pairs.get('policy', ('linear', 0))
    policy_names = _split_list(policy_text)
    policies = tuple(_parse_policy(name, policy_line) for name in policy_names)
    if not policies:
        raise ParseError("policy must name at least one policy", policy_line)

    simulate = False
    if 'simulate' in pairs:
        simulate = _parse_bool('simulate', *pairs['simulate'])
    seed = 0
    if 'seed' in pairs:
        seed = _parse_int('seed', *pairs['seed'])
        if not (0 <= seed < 2 ** 64):
            raise ParseError(f"seed must be a 64-bit unsigned integer, got {seed}", pairs['seed'][1])

    base = validate_params(dict(raw_params, feedback=policies[0]))

    if 'axis' not in pairs:
        if 'grid' in pairs:
            raise ParseError("grid given without axis", pairs['grid'][1])
        if len(policies) != 1:
            raise ParseError("a single-model config takes exactly one policy", policy_line)
        logger.debug(f"Parsed single-model config: {base.as_dict()}")
        return SolveSpec(params=base, simulate=simulate, seed=seed)

    axis, axis_line = pairs['axis']
    if axis not in AXES:
        raise ParseError(f"axis must be one of {', '.join(AXES)}, got {axis!r}", axis_line)

    grid_is_default = 'grid' not in pairs
    if grid_is_default:
        grid = tuple(config.get_setting('lambda_grid' if axis == AXIS_LAMBDA_NRT else 'r_grid'))
    else:
        grid_text, grid_line = pairs['grid']
        if axis == AXIS_THRESHOLD_R:
            grid = tuple(_parse_int('grid', item, grid_line) for item in _split_list(grid_text))
        else:
            grid = tuple(_parse_float('grid', item, grid_line) for item in _split_list(grid_text))
        if not grid:
            raise ParseError("grid must not be empty", grid_line)
        if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
            raise ParseError(f"grid must be strictly increasing, got {list(grid)}", grid_line)

    spec = SweepSpec(
        base=base,
        axis=axis,
        grid=grid,
        policies=policies,
        simulate=simulate,
        seed=seed,
        grid_is_default=grid_is_default,
    )
    logger.debug(f"Parsed sweep config: axis={axis}, {len(grid)} points, policies={[p.tag for p in policies]}")
    return spec


def load_config(path) -> Union[SweepSpec, SolveSpec]:
    """Read and parse a configuration file (OSError propagates)"""
    with open(path, encoding='utf-8') as handle:
        return parse_config(handle.read())


def sweep_points(spec: SweepSpec) -> List[Tuple[FeedbackPolicy, float]]:
    """(policy, grid value) pairs in output order: by policy, then by grid value"""
    return [(policy, value) for policy in spec.policies for value in spec.grid]


def point_params(spec: SweepSpec, policy: FeedbackPolicy, value: float) -> ModelParams:
    """
    Model for one sweep point, re-validated (H re-derived when R moves)

    Raises:
        ModelValidationError: If the point yields invalid parameters
    """
    if spec.axis == AXIS_THRESHOLD_R:
        return spec.base.with_changes(feedback=policy, threshold_r=int(value))
    return spec.base.with_changes(feedback=policy, lambda_nrt=float(value))
