"""
QoS metrics from a stationary distribution, plus closed-form oracles

Delays follow Little's law. For NRT packets both the published delay
(N_RT + N_NRT) / lambda_eff and the class-level Little's law N_NRT / lambda_eff
are reported.
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np

from .exceptions import DimensionMismatch, ZeroAcceptedFlow
from .models import ModelParams, StateSpace, arrival_rate_nrt


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QoSReport:
    """Stationary QoS metrics of one model"""

    params: ModelParams
    p_lrt: float
    n_rt: float
    n_nrt: float
    d_rt: float
    d_nrt_paper: float
    d_nrt_little: float
    lambda_eff_nrt: float

    def as_dict(self) -> Dict[str, float]:
        values = asdict(self)
        values.pop('params')
        return values


def _grid(dist, params: ModelParams) -> np.ndarray:
    space = StateSpace(params)
    vector = np.asarray(getattr(dist, 'probabilities', dist), dtype=float)
    if vector.shape != (space.size,):
        raise DimensionMismatch(f"Distribution has shape {vector.shape}, expected ({space.size},)")
    return vector.reshape(space.rt_levels, space.nrt_levels)


def _occupancy_rates(params: ModelParams) -> np.ndarray:
    """(R+1) x (H+1) array of arrival_rate_nrt at k = i + j"""
    rates = np.array([arrival_rate_nrt(params, k) for k in range(params.capacity_n + 1)])
    i = np.arange(params.threshold_r + 1)[:, None]
    j = np.arange(params.threshold_h + 1)[None, :]
    return rates[i + j]


def loss_probability_rt(dist, params: ModelParams) -> float:
    """P_LRT: probability that RT occupancy sits at R"""
    return float(_grid(dist, params)[params.threshold_r, :].sum())


def mean_queue_rt(dist, params: ModelParams) -> float:
    """N_RT: mean number of RT packets"""
    probs = _grid(dist, params)
    return float(np.arange(probs.shape[0]) @ probs.sum(axis=1))


def mean_queue_nrt(dist, params: ModelParams) -> float:
    """N_NRT: mean number of NRT packets"""
    probs = _grid(dist, params)
    return float(np.arange(probs.shape[1]) @ probs.sum(axis=0))


def effective_nrt_rate(dist, params: ModelParams) -> float:
    """
    Effective (admitted) NRT arrival rate

    Weights each state by the policy's rate at its occupancy; for the linear
    policy this is the double sum with (a(i+j) + b) weights over the band.

    Args:
        dist: Stationary distribution or vector over E
        params: Model parameters

    Returns:
        lambda_eff(NRT)
    """
    probs = _grid(dist, params)
    return float(np.sum(_occupancy_rates(params) * probs))


def delay_rt(dist, params: ModelParams) -> float:
    """
    Mean RT delay N_RT / (lambda * (1 - P_LRT))

    Raises:
        ZeroAcceptedFlow: If no RT flow is accepted
    """
    accepted = params.lambda_rt * (1.0 - loss_probability_rt(dist, params))
    if accepted <= 0.0:
        raise ZeroAcceptedFlow("Accepted RT flow is zero; RT delay undefined")
    return mean_queue_rt(dist, params) / accepted


def delay_nrt(dist, params: ModelParams) -> Tuple[float, float]:
    """
    NRT delay by the published formula and by strict Little's law

    Args:
        dist: Stationary distribution or vector over E
        params: Model parameters

    Returns:
        (d_nrt_paper, d_nrt_little) = ((N_RT + N_NRT) / lambda_eff, N_NRT / lambda_eff)

    Raises:
        ZeroAcceptedFlow: If lambda_eff is zero
    """
    lambda_eff = effective_nrt_rate(dist, params)
    if lambda_eff <= 0.0:
        raise ZeroAcceptedFlow("Effective NRT arrival rate is zero; NRT delay undefined")
    n_rt = mean_queue_rt(dist, params)
    n_nrt = mean_queue_nrt(dist, params)
    return (n_rt + n_nrt) / lambda_eff, n_nrt / lambda_eff


def served_nrt_rate(dist, params: ModelParams) -> float:
    """NRT departure rate mu1 * P(i = 0, j >= 1)"""
    probs = _grid(dist, params)
    return float(params.mu_nrt * probs[0, 1:].sum())


def qos_report(dist, params: ModelParams) -> QoSReport:
    """
    All metrics of one solve

    Raises:
        ZeroAcceptedFlow: If either class has zero accepted flow
    """
    d_nrt_paper, d_nrt_little = delay_nrt(dist, params)
    report = QoSReport(
        params=params,
        p_lrt=loss_probability_rt(dist, params),
        n_rt=mean_queue_rt(dist, params),
        n_nrt=mean_queue_nrt(dist, params),
        d_rt=delay_rt(dist, params),
        d_nrt_paper=d_nrt_paper,
        d_nrt_little=d_nrt_little,
        lambda_eff_nrt=effective_nrt_rate(dist, params),
    )
    logger.debug(f"QoS report: {report.as_dict()}")
    return report


def rt_marginal_oracle(threshold_r: int, lambda_rt: float, mu_rt: float) -> np.ndarray:
    """
    M/M/1/K stationary distribution with K = R

    Args:
        threshold_r: Capacity R (R = 0 gives the single state)
        lambda_rt: Arrival rate
        mu_rt: Service rate

    Returns:
        Vector of length R+1 with p(i) proportional to rho^i
    """
    rho = lambda_rt / mu_rt
    if rho == 1.0:
        return np.full(threshold_r + 1, 1.0 / (threshold_r + 1))
    # powers relative to the largest term keep rho > 1 from overflowing
    exponents = np.arange(threshold_r + 1)
    log_weights = exponents * np.log(rho)
    weights = np.exp(log_weights - log_weights.max())
    return weights / weights.sum()


def nrt_only_oracle(params: ModelParams) -> np.ndarray:
    """
    Birth-death product form of the NRT count when no RT traffic is present

    p(j) is proportional to prod_{m<j} arrival_rate_nrt(m) / mu1; mass stops
    at the first zero birth rate.

    Args:
        params: Model parameters (lambda_rt is ignored)

    Returns:
        Vector of length H+1
    """
    levels = params.threshold_h + 1
    weights = np.zeros(levels)
    weights[0] = 1.0
    for j in range(1, levels):
        birth = arrival_rate_nrt(params, j - 1)
        if birth <= 0.0:
            break
        weights[j] = weights[j - 1] * birth / params.mu_nrt
    return weights / weights.sum()
