"""Post-DFT received-signal synthesis for a cognitive OFDM receiver.

The receiver sees, at sub-carrier ``q`` and OFDM symbol ``n``::

    Y_q(n) = H_q(n) S_q(n) + I_q(n) + W_q(n)

with a block-static channel ``H``, unit-modulus PSK data ``S``, a
primary-user contribution ``I`` and circular white Gaussian noise ``W``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .numerics import complex_normal


@dataclass(frozen=True)
class OfdmConfig:
    """System constants of the cognitive OFDM link.

    Defaults follow the MB-OFDM-UWB numerology used throughout the
    simulations: 128 sub-carriers, 312.5 ns symbols at 3.1 GHz.
    """

    Q: int = 128
    N: int = 80
    T_s: float = 312.5e-9
    f_s: float = 3.1e9
    sigma_w2: float = 1.0
    cu_active: bool = False
    psk_order: int = 4

    def __post_init__(self):
        if self.Q < 2:
            raise ConfigurationError("Q must be at least 2")
        if self.N < 1:
            raise ConfigurationError("N must be at least 1")
        if not self.T_s > 0:
            raise ConfigurationError("T_s must be positive")
        if not self.sigma_w2 > 0:
            raise ConfigurationError("sigma_w2 must be positive")
        if self.psk_order < 2:
            raise ConfigurationError("psk_order must be at least 2")

    @property
    def T_d(self) -> float:
        """Time-domain sample period (symbol duration over Q)."""
        return self.T_s / self.Q


@dataclass(frozen=True)
class ChannelRealization:
    """Frequency response ``h`` (Q x N) generated from time-domain taps."""

    h: np.ndarray
    taps: np.ndarray
    delays: np.ndarray

    @property
    def response(self) -> np.ndarray:
        """Per-carrier response of the block-static channel (length Q)."""
        return self.h[:, 0]


@dataclass(frozen=True)
class PuContribution:
    """Primary-user signal ``I_q(n)`` over the carriers ``band[0]..band[1]``.

    ``values`` has shape (B_PU, N), or (blocks, B_PU, N) for batches.
    """

    band: tuple
    values: np.ndarray

    @property
    def b_pu(self) -> int:
        return self.band[1] - self.band[0] + 1

    def full(self, Q: int) -> np.ndarray:
        """Embed into a Q-row matrix, zero outside the band."""
        q0, q1 = self.band
        if not 0 <= q0 <= q1 <= Q - 1:
            raise ConfigurationError(f"band {self.band} outside [0, {Q - 1}]")
        out = np.zeros(self.values.shape[:-2] + (Q, self.values.shape[-1]), dtype=complex)
        out[..., q0 : q1 + 1, :] = self.values
        return out


@dataclass(frozen=True)
class ObservationBlock:
    """Received DFT outputs, ``y[q, n] = Y_q(n)``."""

    y: np.ndarray
    meta: OfdmConfig
    components: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.y.shape != (self.meta.Q, self.meta.N):
            raise ConfigurationError(
                f"observation shape {self.y.shape} does not match (Q, N) = "
                f"({self.meta.Q}, {self.meta.N})"
            )
        if not np.all(np.isfinite(self.y)):
            raise ConfigurationError("observation has non-finite entries")

    def carrier(self, q: int) -> np.ndarray:
        return self.y[q]

    def band(self, band) -> np.ndarray:
        q0, q1 = band
        return self.y[q0 : q1 + 1]


def generate_channel(
    cfg: OfdmConfig,
    num_paths: int,
    rng: np.random.Generator,
    profile: str = "uniform",
    decay: float = 0.0,
) -> ChannelRealization:
    """Draw a block-static tapped-delay-line channel.

    Taps sit at sample delays ``0..num_paths-1`` with i.i.d. circular
    Gaussian gains.  ``profile="exponential"`` weights tap ``l`` by
    ``exp(-decay * l)``; the profile is normalized so the mean total
    path power is one, hence ``E|H_q|^2 = 1`` at every carrier.
    """
    if not 1 <= num_paths <= cfg.Q:
        raise ConfigurationError(f"num_paths must lie in [1, {cfg.Q}], got {num_paths}")
    delays = np.arange(num_paths)
    if profile == "uniform":
        weights = np.ones(num_paths)
    elif profile == "exponential":
        if decay < 0:
            raise ConfigurationError("decay must be nonnegative")
        weights = np.exp(-decay * delays)
    else:
        raise ConfigurationError(f"unknown power profile {profile!r}")
    weights = weights / weights.sum()
    taps = np.sqrt(weights) * complex_normal(rng, num_paths)
    q = np.arange(cfg.Q)
    resp = np.exp(-2j * np.pi * np.outer(q, delays) / cfg.Q) @ taps
    h = np.repeat(resp[:, None], cfg.N, axis=1)
    return ChannelRealization(h=h, taps=taps, delays=delays)


def flat_channel(cfg: OfdmConfig, gain: complex = 1.0) -> ChannelRealization:
    """Deterministic frequency-flat channel with response ``gain``."""
    h = np.full((cfg.Q, cfg.N), gain, dtype=complex)
    return ChannelRealization(h=h, taps=np.array([gain], dtype=complex), delays=np.array([0]))


def psk_symbols(rng: np.random.Generator, shape, order: int = 4) -> np.ndarray:
    """Uniform draws from the unit-modulus ``order``-PSK constellation."""
    k = rng.integers(0, order, size=shape)
    offset = math.pi / 4 if order == 4 else 0.0
    return np.exp(1j * (2 * np.pi * k / order + offset))


def generate_observation(
    cfg: OfdmConfig,
    channel: Optional[ChannelRealization],
    pu: Optional[PuContribution],
    rng: np.random.Generator,
) -> ObservationBlock:
    """Synthesize one N-symbol observation over all Q carriers.

    The CU term ``H * S`` is included only when ``cfg.cu_active``; the
    PU term is embedded over its band.  Draw order is fixed (CU symbols,
    then noise) so identical seeds give identical blocks.
    """
    shape = (cfg.Q, cfg.N)
    y = np.zeros(shape, dtype=complex)
    components = {}
    if cfg.cu_active:
        if channel is None:
            raise ConfigurationError("an active CU requires a channel realization")
        if channel.h.shape != shape:
            raise ConfigurationError(f"channel shape {channel.h.shape} != {shape}")
        s = psk_symbols(rng, shape, cfg.psk_order)
        y += channel.h * s
        components["cu"] = channel.h * s
    if pu is not None:
        if pu.values.ndim != 2 or pu.values.shape[1] != cfg.N:
            raise ConfigurationError(
                f"PU contribution shape {pu.values.shape} incompatible with N={cfg.N}"
            )
        i_full = pu.full(cfg.Q)
        y += i_full
        components["pu"] = i_full
    w = complex_normal(rng, shape, cfg.sigma_w2)
    y += w
    components["noise"] = w
    return ObservationBlock(y=y, meta=cfg, components=components)
