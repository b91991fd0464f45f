"""One coherence block end to end: Rayleigh fading, oscillator phase walk,
truncated channel inversion at the devices, noisy superposed reception, and
the per-coordinate gradient estimator at the base station.

All operations accept arrays with arbitrary leading batch dimensions, so the
same code path serves both single-round simulation and vectorized Monte
Carlo runs.  Shapes are written as (..., K) for per-device quantities and
(..., K, S) for per-device per-symbol quantities, with S = D/2 symbols.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import UNBIASED, RngStream, SystemParams


@dataclass
class ChannelBlock:
    """Fading and phase-walk realization for one coherence block.

    beta: (..., K) fading power |h|^2 per device.
    phi0: (..., K) phase of h at block start.
    increments: (..., K, S) phase increments; index 0 is always zero.
    indicator: (..., K) True where the device transmits (beta >= threshold).
    """

    beta: np.ndarray
    phi0: np.ndarray
    increments: np.ndarray
    indicator: np.ndarray

    def h(self) -> np.ndarray:
        """Block-start channel coefficient sqrt(beta) * exp(j*phi0)."""
        return np.sqrt(self.beta) * np.exp(1j * self.phi0)

    def phases(self) -> np.ndarray:
        """(..., K, S) oscillator phase at every symbol; index 0 equals phi0."""
        return self.phi0[..., None] + np.cumsum(self.increments, axis=-1)


@dataclass
class RoundTranscript:
    """Everything observable about one uplink round."""

    transmitted: np.ndarray  # (K, S) complex symbols per device
    received: np.ndarray  # (S,) complex symbols at the base station
    estimate: np.ndarray  # (D,) estimated aggregated gradient
    power_violations: int  # symbols with |x|^2 > power_limit


def sample_block(params: SystemParams, stream: RngStream, shape=()) -> ChannelBlock:
    """Draw fading and the phase-increment walk for one block (per batch shape).

    h ~ CN(0, sigma_h2) i.i.d. per device; increments i.i.d. N(0, sigma_e2)
    for s >= 1 with the s = 0 increment pinned to zero.  The transmit
    indicator is beta >= t, with an exact zero draw treated as silent so the
    t = 0 edge never divides by zero.
    """
    shape = tuple(shape)
    k = params.num_devices
    s = params.num_symbols
    h = stream.complex_gaussian(params.sigma_h2, shape + (k,))
    h = np.asarray(h)
    beta = h.real ** 2 + h.imag ** 2
    phi0 = np.angle(h)
    increments = np.zeros(shape + (k, s))
    if s > 1:
        increments[..., 1:] = stream.standard_normal(shape + (k, s - 1)) \
            * np.sqrt(params.sigma_e2)
    indicator = (beta >= params.threshold_t) & (beta > 0)
    return ChannelBlock(beta=beta, phi0=phi0, increments=increments,
                        indicator=indicator)


def phase_at(block: ChannelBlock, k: int, s: int) -> float:
    """Oscillator phase of device k at symbol s; phase_at(k, 0) == phi0."""
    num_symbols = block.increments.shape[-1]
    if not 0 <= s < num_symbols:
        raise IndexError(f"symbol index {s} out of range [0, {num_symbols})")
    return block.phases()[..., k, s]


def encode(g: np.ndarray, block: ChannelBlock, params: SystemParams) -> np.ndarray:
    """Truncated channel inversion: map gradients (..., K, D) to symbols (..., K, S).

    Symbol s of device k carries (g[2s] + j*g[2s+1]) / h_k using the
    block-start h only (the transmitter has no phase-noise knowledge);
    devices below the fading threshold stay silent.  Power violations are
    not clipped here; count them with count_power_violations.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != params.model_dim:
        raise ValueError(f"gradient length {g.shape[-1]} != model_dim {params.model_dim}")
    pairs = g[..., 0::2] + 1j * g[..., 1::2]
    h = block.h()
    h_safe = np.where(block.indicator, h, 1.0)
    return np.where(block.indicator[..., None], pairs / h_safe[..., None], 0.0)


def count_power_violations(x: np.ndarray, params: SystemParams) -> int:
    return int(np.count_nonzero(x.real ** 2 + x.imag ** 2 > params.power_limit))


def receive(x: np.ndarray, block: ChannelBlock, params: SystemParams,
            stream: RngStream) -> np.ndarray:
    """Superpose transmitted symbol streams through the time-varying channel.

    y_s = sum_k h_k(s) x_k(s) + w_s with h_k(s) = sqrt(beta_k) e^{j phi_k(s)}
    and w ~ CN(0, sigma_w2).  Input (..., K, S), output (..., S).
    """
    x = np.asarray(x)
    if x.shape[-1] != params.num_symbols:
        raise ValueError(f"symbol count {x.shape[-1]} != D/2 = {params.num_symbols}")
    h_s = np.sqrt(block.beta)[..., None] * np.exp(1j * block.phases())
    y = (h_s * x).sum(axis=-2)
    return y + stream.complex_gaussian(params.sigma_w2, y.shape)


def receive_inverted(g: np.ndarray, block: ChannelBlock, params: SystemParams,
                     stream: RngStream) -> np.ndarray:
    """Received superposition given perfect truncated inversion at the devices.

    Algebraically identical to receive(encode(g, ...), ...): inverting the
    block-start h and multiplying by the time-varying h leaves only the
    accumulated phase rotation, so each device contributes
    e^{j sum_i e_i} (g[2s] + j g[2s+1]) when above threshold.  Computing that
    reduced form directly avoids the h/(1/h) float round trip, which keeps a
    fully impairment-free block arithmetically transparent (the rotation is
    exactly 1+0j when all increments are zero).  The equivalence of the two
    forms is asserted in the test suite.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != params.model_dim:
        raise ValueError(f"gradient length {g.shape[-1]} != model_dim {params.model_dim}")
    pairs = g[..., 0::2] + 1j * g[..., 1::2]
    rotation = np.exp(1j * np.cumsum(block.increments, axis=-1))
    contrib = np.where(block.indicator[..., None], pairs * rotation, 0.0)
    y = contrib.sum(axis=-2)
    return y + stream.complex_gaussian(params.sigma_w2, y.shape)


def normalizer_exponent(d, params: SystemParams):
    """log of the estimator scale factor a_d; vectorized over d."""
    d = np.asarray(d)
    base = params.threshold_t / params.sigma_h2
    if params.normalizer_mode == UNBIASED:
        d_even = d - (d % 2)
        return base + d_even * params.sigma_e2 / 4.0
    return np.broadcast_to(np.float64(base), d.shape) if d.shape else np.float64(base)


def normalizer(d: int, params: SystemParams) -> float:
    """Estimator scale a_d: exp(t/sigma_h2 + floor2(d)*sigma_e2/4) when
    unbiased, the constant exp(t/sigma_h2) in practical mode."""
    if not 0 <= d < params.model_dim:
        raise IndexError(f"coordinate {d} out of range [0, {params.model_dim})")
    return float(np.exp(normalizer_exponent(d, params)))


def normalizer_vector(params: SystemParams) -> np.ndarray:
    return np.exp(normalizer_exponent(np.arange(params.model_dim), params))


def estimate(y: np.ndarray, params: SystemParams) -> np.ndarray:
    """Per-coordinate gradient estimate from received symbols.

    Even coordinate d reads (a_d/K) * Re(y[d/2]), odd d reads
    (a_d/K) * Im(y[(d-1)/2]).  Input (..., S), output (..., D).
    """
    y = np.asarray(y)
    if y.shape[-1] != params.num_symbols:
        raise ValueError(f"symbol count {y.shape[-1]} != D/2 = {params.num_symbols}")
    a = normalizer_vector(params)
    k = params.num_devices
    out = np.empty(y.shape[:-1] + (params.model_dim,))
    out[..., 0::2] = (a[0::2] * y.real) / k
    out[..., 1::2] = (a[1::2] * y.imag) / k
    return out
