"""Shared system parameters and the deterministic random-number contract.

Every stochastic draw in the simulator comes from an RngStream keyed by
(base_seed, trial, role, entity, round).  Streams with distinct keys are
statistically independent and their sample sequences do not depend on the
order in which other streams are consumed, so trials and devices can be
simulated in parallel without changing any result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Normalizer modes for the per-coordinate estimator scale factor.
UNBIASED = "unbiased"
PRACTICAL = "practical"
NORMALIZER_MODES = (UNBIASED, PRACTICAL)

# Stream roles.  One role per independent source of randomness; the entity
# slot holds a device index where relevant, the round slot a round or epoch.
ROLE_CHANNEL = 1  # fading draws + phase increments, one block per round
ROLE_NOISE = 2  # receiver thermal noise, one draw per round
ROLE_INIT = 3  # model initialization, per trial
ROLE_SHARD = 4  # shard allocation, per trial
ROLE_BATCH = 5  # batch shuffles, per (device, epoch)
ROLE_SORT = 6  # extra batches used to refresh the sort permutation
ROLE_MOMENTS = 7  # Monte Carlo moment verification
ROLE_PHASE = 8  # standalone phase-trajectory dumps
ROLE_GRADS = 9  # fixed random gradients for the moment suite


@dataclass(frozen=True)
class SystemParams:
    """Channel and estimator constants shared across the simulator.

    num_devices: number of transmitting devices K.
    model_dim: gradient length D; must be even (two coordinates per symbol).
    sigma_h2: fading variance, E[|h|^2]; strictly positive.
    sigma_e2: per-symbol phase-increment variance of the oscillator walk.
    sigma_w2: receiver thermal-noise variance.
    threshold_t: truncation threshold on |h|^2 for channel inversion.
    power_limit: transmit power bound; violations are counted, not clipped.
    normalizer_mode: UNBIASED or PRACTICAL estimator scaling.
    base_seed: root seed for all RngStreams of a run.
    """

    num_devices: int
    model_dim: int
    sigma_h2: float = 1.0
    sigma_e2: float = 0.0
    sigma_w2: float = 2e-8
    threshold_t: float = 0.01
    power_limit: float = 1.0
    normalizer_mode: str = PRACTICAL
    base_seed: int = 0

    def __post_init__(self):
        if self.num_devices < 1:
            raise ValueError("num_devices must be >= 1")
        if self.model_dim < 2 or self.model_dim % 2 != 0:
            raise ValueError("model_dim must be a positive even integer")
        if not self.sigma_h2 > 0:
            raise ValueError("sigma_h2 must be > 0")
        if self.sigma_e2 < 0 or self.sigma_w2 < 0:
            raise ValueError("variances must be nonnegative")
        if self.threshold_t < 0:
            raise ValueError("threshold_t must be >= 0")
        if not self.power_limit > 0:
            raise ValueError("power_limit must be > 0")
        if self.normalizer_mode not in NORMALIZER_MODES:
            raise ValueError(f"unknown normalizer_mode {self.normalizer_mode!r}")

    @property
    def num_symbols(self) -> int:
        """Symbols per coherence block: one complex symbol per coordinate pair."""
        return self.model_dim // 2


class RngStream:
    """Deterministic generator keyed by (base_seed, trial, role, entity, round).

    The same key always yields the same sample sequence, independent of any
    other stream, which makes runs reproducible under parallel execution.
    A stream must be consumed by one thread at a time.
    """

    def __init__(self, base_seed: int, trial: int = 0, role: int = 0,
                 entity: int = 0, round_index: int = 0):
        key = (trial, role, entity, round_index)
        if any(k < 0 for k in key):
            raise ValueError(f"stream key components must be nonnegative: {key}")
        self.identity = key
        seq = np.random.SeedSequence(entropy=base_seed & 0xFFFFFFFFFFFFFFFF,
                                     spawn_key=key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def standard_normal(self, size=None) -> np.ndarray | float:
        return self._gen.standard_normal(size)

    def complex_gaussian(self, variance: float, size=None) -> np.ndarray | complex:
        """Circularly symmetric complex Gaussian with E[|z|^2] = variance."""
        if variance < 0:
            raise ValueError("variance must be >= 0")
        scale = np.sqrt(variance / 2.0)
        re = self._gen.standard_normal(size)
        im = self._gen.standard_normal(size)
        return (re + 1j * im) * scale

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, x):
        return self._gen.permutation(x)


def stream_for(params: SystemParams, trial: int, role: int,
               entity: int = 0, round_index: int = 0) -> RngStream:
    """Stream factory bound to a parameter set's base seed."""
    return RngStream(params.base_seed, trial, role, entity, round_index)
