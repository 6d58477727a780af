"""
Time-space priority buffer analysis with active queue management

Exact stationary analysis, QoS metrics, an independent event-driven simulator
and figure reproduction for a finite buffer shared by real-time (RT) and
non-real-time (NRT) packets, where NRT arrivals are throttled by a feedback
function of the total occupancy.
"""

from typing import Any, Dict

__version__ = '0.1.0'


class TSPAQMConfig:
    name = 'tsp_aqm'
    verbose_name = 'TSP-AQM Buffer Analyzer'
    description = 'Stationary QoS analysis and simulation of a time-space priority buffer with AQM feedback'
    version = __version__

    # Numerical and experiment defaults; every module reads its knobs from here
    default_settings: Dict[str, Any] = {
        'direct_residual_tol': 1e-10,
        'iterative_tol': 1e-12,
        'iterative_max_iter': 1_000_000,
        'uniformization_factor': 1.01,
        'sim_warmup_events': 100_000,
        'sim_measured_events': 10_000_000,
        'sim_batches': 20,
        'sim_confidence': 0.95,
        'sim_block_size': 65_536,
        'tie_tolerance': 1e-9,
        'default_lambda_nrt': 20.0,
        'lambda_grid': tuple(5.0 + 2.5 * step for step in range(13)),
        'r_grid': tuple(range(10, 50, 5)),
        'fig5_lambda_nrt': 15.0,
        'sweep_workers': 1,
    }

    @classmethod
    def get_setting(cls, name: str) -> Any:
        """
        Look up a package setting

        Args:
            name: Key of default_settings

        Returns:
            The configured value

        Raises:
            KeyError: If the setting does not exist
        """
        return cls.default_settings[name]


config = TSPAQMConfig
