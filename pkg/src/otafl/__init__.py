"""Over-the-air federated learning under oscillator phase noise.

Simulates gradient aggregation through a Rayleigh block-fading uplink whose
oscillator phase drifts as a random walk within each coherence block,
together with the truncated-channel-inversion transmitter, the
per-coordinate base-station estimator and its closed-form moments, and the
gradient permutations (flip, roll, sort) that reorder which coordinates ride
the early, cleaner symbols.
"""

from .core import PRACTICAL, UNBIASED, RngStream, SystemParams
from .fedsim import ExperimentConfig, MetricsRecord

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "MetricsRecord",
    "PRACTICAL",
    "RngStream",
    "SystemParams",
    "UNBIASED",
    "__version__",
]
