"""
Exceptions raised by the TSP-AQM analyzer

All errors derive from TSPAQMException so callers (the CLI in particular) can
catch the whole family and map the intermediate bases to exit codes.
"""

from typing import Any, Optional


class TSPAQMException(Exception):
    """Base exception for the analyzer"""
    pass


class ModelValidationError(TSPAQMException):
    """Model parameters violate an invariant"""
    pass


class ThresholdOrderViolation(ModelValidationError):
    """Thresholds are not ordered as 0 < R < L < N - R"""
    pass


class NonPositiveRate(ModelValidationError):
    """A rate is non-positive (or negative for the NRT arrival rate) or not finite"""
    pass


class BadFraction(ModelValidationError):
    """Constant-fraction reduction outside (0, 1]"""
    pass


class OutOfRangeOccupancy(TSPAQMException):
    """Total occupancy k outside [0, N]"""
    pass


class InvalidState(TSPAQMException):
    """State does not belong to the state space E"""
    pass


class DimensionMismatch(TSPAQMException):
    """Vector or matrix does not match the state space size"""
    pass


class SolverError(TSPAQMException):
    """Base exception for stationary solver failures"""
    pass


class ReducibleChain(SolverError):
    """Elimination met a zero pivot among states declared reachable"""
    pass


class NotConverged(SolverError):
    """Iterative solve hit max_iter without meeting the tolerance"""

    def __init__(self, message: str, last_iterate: Any = None, iterations: int = 0, difference: float = 0.0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations
        self.difference = difference


class ResidualTooLarge(SolverError):
    """Stationary residual above the acceptance tolerance"""
    pass


class ZeroAcceptedFlow(TSPAQMException):
    """A delay was requested for a class whose accepted flow is zero"""
    pass


class SimulationError(TSPAQMException):
    """Base exception for simulator failures"""
    pass


class InvalidConfig(SimulationError):
    """Simulation configuration violates its invariants"""
    pass


class ParamMismatch(SimulationError):
    """Simulation estimate and analytic report come from different models"""
    pass


class ConfigError(TSPAQMException):
    """Base exception for configuration and experiment setup errors"""
    pass


class ParseError(ConfigError):
    """Malformed configuration text"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyResult(ConfigError):
    """Nothing to emit"""
    pass


class SweepPointError(ConfigError):
    """A single sweep grid point failed validation or solving"""

    def __init__(self, grid_value: float, policy_tag: str, error: Exception):
        super().__init__(f"{policy_tag} @ {grid_value}: {type(error).__name__}: {error}")
        self.grid_value = grid_value
        self.policy_tag = policy_tag
        self.error = error
