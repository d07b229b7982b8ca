"""Primary-user signal models and their per-carrier normalized covariances.

Two models are provided:

* tonal -- a sum of ``K`` fading, PSK-modulated complex sinusoids whose
  symbol clock (``T_i``) is much slower than the OFDM symbol clock;
* AR -- a unit-power autoregressive process sampled at the OFDM sample
  rate and passed through the receiver's Q-point DFT.

For each model there is a generator for ``I_q(n)`` and a function that
returns the N x N normalized (unit-diagonal) covariance ``C_q`` of
``[I_q(0), ..., I_q(N-1)]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, signal

from .errors import ConfigurationError, DegenerateModelError
from .numerics import EigenSystem, complex_normal, hermitian_eig
from .ofdm import OfdmConfig, PuContribution, psk_symbols

_INTEGER_TOL = 1e-12


@dataclass(frozen=True)
class NormalizedCovariance:
    """Hermitian PSD covariance with unit diagonal for one sub-carrier."""

    c: np.ndarray
    q: int

    def __post_init__(self):
        c = self.c
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ConfigurationError("covariance must be square")
        scale = max(np.linalg.norm(c), 1.0)
        if np.linalg.norm(c - c.conj().T) > 1e-9 * scale:
            raise ConfigurationError("covariance is not Hermitian")
        if np.max(np.abs(np.diag(c) - 1.0)) >= 1e-9:
            raise ConfigurationError("covariance diagonal is not unit")

    @property
    def N(self) -> int:
        return self.c.shape[0]

    @cached_property
    def eigen(self) -> EigenSystem:
        eig = hermitian_eig(self.c)
        if eig.values[-1] < -1e-9:
            raise ConfigurationError(
                f"covariance is not PSD (min eigenvalue {eig.values[-1]:.3e})"
            )
        return eig

    def trace_squared(self) -> float:
        """``tr(C^2)``, i.e. the squared Frobenius norm of a Hermitian C."""
        return float(np.sum(np.abs(self.c) ** 2))


def _as_band(band, Q=None):
    q0, q1 = (int(band[0]), int(band[1]))
    if q0 < 0 or q1 < q0 or (Q is not None and q1 > Q - 1):
        raise ConfigurationError(f"invalid band {band}")
    return q0, q1


def _band_powers(power, band) -> np.ndarray:
    b = band[1] - band[0] + 1
    p = np.broadcast_to(np.asarray(power, dtype=float), (b,)).copy()
    if np.any(p < 0):
        raise ConfigurationError("power_per_carrier must be nonnegative")
    return p


# ----------------------------------------------------------------------------
# tonal model
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TonalPuConfig:
    """Sum of ``K`` complex tones spaced ``1/T_i`` apart starting at ``f_i``.

    ``fading`` selects the distribution of the per-symbol, per-tone gains:
    ``"gaussian"`` (circular complex Gaussian, unit power) or ``"unit"``
    (unit modulus, uniform phase).
    """

    K: int
    T_i: float = 26.6e-6
    f_i: float = 3.36e9
    band: tuple = (81, 81)
    power_per_carrier: object = 1.0
    fading: str = "gaussian"
    psk_order: int = 4

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("K must be at least 1")
        if not self.T_i > 0:
            raise ConfigurationError("T_i must be positive")
        if self.fading not in ("gaussian", "unit"):
            raise ConfigurationError(f"unknown fading {self.fading!r}")
        object.__setattr__(self, "band", _as_band(self.band))
        _band_powers(self.power_per_carrier, self.band)

    def validate(self, sys: OfdmConfig):
        if self.T_i < sys.T_s:
            raise ConfigurationError("T_i must not be shorter than T_s")
        _as_band(self.band, sys.Q)

    def eta(self, sys: OfdmConfig) -> int:
        """OFDM symbols per PU symbol, ``floor(T_i / T_s)``."""
        return int(math.floor(self.T_i / sys.T_s + 1e-9))

    def powers(self) -> np.ndarray:
        return _band_powers(self.power_per_carrier, self.band)


def tonal_config_for_band(
    sys: OfdmConfig,
    band,
    power=1.0,
    T_i: float = 26.6e-6,
    **kwargs,
) -> TonalPuConfig:
    """Tonal PU whose tones evenly tile carriers ``band[0]..band[1]``.

    Tone ``k`` sits at carrier position ``q0 - 1/2 + (k + 1/2) T_s/T_i``,
    so ``K = round(B_PU * T_i / T_s)`` tones cover the band edge to edge.
    """
    q0, q1 = _as_band(band, sys.Q)
    b = q1 - q0 + 1
    K = max(1, int(round(b * T_i / sys.T_s)))
    f_i = sys.f_s + (q0 - 0.5) / sys.T_s + 0.5 / T_i
    return TonalPuConfig(K=K, T_i=T_i, f_i=f_i, band=(q0, q1), power_per_carrier=power, **kwargs)


def _tone_offsets(cfg: TonalPuConfig, sys: OfdmConfig, q) -> np.ndarray:
    """``beta[k, q] = ((f_i - f_s + k/T_i) T_s - q) / Q``."""
    k = np.arange(cfg.K)
    pos = (cfg.f_i - sys.f_s) * sys.T_s + k * (sys.T_s / cfg.T_i)
    return (pos[:, None] - np.atleast_1d(q)[None, :]) / sys.Q


def dirichlet_power(beta: np.ndarray, Q: int) -> np.ndarray:
    """``sin^2(pi beta Q) / sin^2(pi beta)``, equal to ``Q^2`` at integer beta."""
    beta = np.asarray(beta, dtype=float)
    near = np.abs(beta - np.round(beta)) < _INTEGER_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sin(np.pi * beta * Q) / np.sin(np.pi * beta)) ** 2
    return np.where(near, float(Q * Q), val)


def _geometric_sum(beta: np.ndarray, start, stop) -> np.ndarray:
    """``sum_{p=start}^{stop-1} exp(j 2 pi beta p)`` elementwise."""
    beta = np.asarray(beta, dtype=float)
    start = np.asarray(start)
    count = np.asarray(stop) - start
    near = np.abs(beta - np.round(beta)) < _INTEGER_TOL
    frac = beta - np.round(beta)
    head = np.exp(2j * np.pi * frac * start)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (1 - np.exp(2j * np.pi * frac * count)) / (1 - np.exp(2j * np.pi * frac))
    return head * np.where(near, count, ratio)


def tonal_carrier_power(cfg: TonalPuConfig, sys: OfdmConfig, q) -> np.ndarray:
    """Unscaled received power at carrier(s) ``q`` (unit-power fading)."""
    return dirichlet_power(_tone_offsets(cfg, sys, q), sys.Q).sum(axis=0)


def tonal_covariance(cfg: TonalPuConfig, sys: OfdmConfig, q: int) -> NormalizedCovariance:
    """Closed-form normalized covariance of ``I_q(0..N-1)`` for the tonal model.

    Entry ``(n, m)`` is the triangular taper ``1 - |n - m| / eta`` times the
    Dirichlet-weighted average of the tone phasors at lag ``n - m``; it is
    exactly zero for ``|n - m| >= eta``.
    """
    cfg.validate(sys)
    if not 0 <= q <= sys.Q - 1:
        raise ConfigurationError(f"carrier {q} outside [0, {sys.Q - 1}]")
    weights = dirichlet_power(_tone_offsets(cfg, sys, q)[:, 0], sys.Q)
    total = weights.sum()
    # exact spectral nulls leave rounding residue far below the Q^2 peak
    if not total > 1e-20 * sys.Q**2:
        raise DegenerateModelError(f"no tone energy reaches carrier {q}")
    eta = cfg.eta(sys)
    lags = np.arange(sys.N)
    k = np.arange(cfg.K)
    # phase in cycles, reduced mod 1 piecewise to keep f_i*T_s products exact-ish
    base = np.mod(lags * np.mod(sys.T_s * cfg.f_i, 1.0), 1.0)
    tone = np.mod(np.outer(lags, k) * (sys.T_s / cfg.T_i), 1.0)
    phasor = np.exp(2j * np.pi * (base[:, None] + tone))
    seq = phasor @ weights / total
    taper = np.clip(1.0 - lags / eta, 0.0, None)
    seq = seq * taper
    seq[0] = 1.0
    c = linalg.toeplitz(seq, seq.conj())
    return NormalizedCovariance(c=c, q=q)


def generate_tonal(
    cfg: TonalPuConfig,
    sys: OfdmConfig,
    rng: np.random.Generator,
    blocks: Optional[int] = None,
) -> PuContribution:
    """Draw ``I_q(n)`` over the PU band from the continuous-time tonal model.

    Each block gets its own PU symbol-clock offset ``t0 ~ U[0, T_i)`` and
    carrier phase.  An OFDM symbol straddling a PU symbol boundary is
    synthesized exactly: samples before the boundary carry the old symbol's
    data and fading, samples after it the new one's.  Rows are scaled so the
    expected power at carrier ``q`` equals ``power_per_carrier[q]``.
    """
    cfg.validate(sys)
    single = blocks is None
    nb = 1 if single else int(blocks)
    q0, q1 = cfg.band
    carriers = np.arange(q0, q1 + 1)
    Q, N, K = sys.Q, sys.N, cfg.K
    T_s, T_i, T_d = sys.T_s, cfg.T_i, sys.T_d

    t0 = rng.uniform(0.0, T_i, size=nb)
    phi = rng.uniform(0.0, 1.0, size=nb)
    t = np.arange(N)[None, :] * T_s + t0[:, None]
    l_first = np.floor(t / T_i).astype(int)
    l_last = np.floor((t + (Q - 1) * T_d) / T_i).astype(int)
    n_symbols = int(l_last.max()) + 1

    if cfg.fading == "gaussian":
        zeta = complex_normal(rng, (nb, n_symbols, K))
    else:
        zeta = np.exp(2j * np.pi * rng.uniform(size=(nb, n_symbols, K)))
    zx = zeta * psk_symbols(rng, (nb, n_symbols, K), cfg.psk_order)

    u = t / T_i - l_first
    fiti = cfg.f_i * T_i
    k = np.arange(K)

    def coefficients(bi, ni, shift):
        # zeta X exp(j theta(n, l, k)) for l = l_first + shift, theta in cycles
        uu = u[bi, ni]
        cyc = np.mod(fiti * (uu - shift) + phi[bi], 1.0)[..., None]
        cyc = cyc + np.mod(uu[..., None] * k, 1.0)
        return zx[bi, l_first[bi, ni] + shift] * np.exp(2j * np.pi * cyc)

    beta = _tone_offsets(cfg, sys, carriers).T  # (B, K)
    g_full = _geometric_sum(beta, 0, Q)
    all_b, all_n = np.meshgrid(np.arange(nb), np.arange(N), indexing="ij")
    a0 = coefficients(all_b, all_n, 0)
    out = np.einsum("qk,bnk->bqn", g_full, a0)

    cross_b, cross_n = np.nonzero(l_last > l_first)
    if cross_b.size:
        boundary = (l_first[cross_b, cross_n] + 1) * T_i
        p_c = np.ceil((boundary - t[cross_b, cross_n]) / T_d - 1e-9).astype(int)
        p_c = np.clip(p_c, 1, Q - 1)
        a1 = coefficients(cross_b, cross_n, 1)
        g_tail = _geometric_sum(beta[None], p_c[:, None, None], Q)  # (C, B, K)
        delta = np.einsum("cqk,ck->cq", g_tail, a1 - a0[cross_b, cross_n])
        out[cross_b, :, cross_n] += delta

    raw_power = tonal_carrier_power(cfg, sys, carriers)
    out = _scale_rows_batch(out, cfg.powers(), raw_power)
    return PuContribution(band=cfg.band, values=out[0] if single else out)


def _scale_rows_batch(x: np.ndarray, target: np.ndarray, raw_power: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(target > 0, np.sqrt(target / raw_power), 0.0)
    return x * gain[:, None]


# ----------------------------------------------------------------------------
# AR model
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ArPuConfig:
    """Unit-power AR(r) process ``i_p = -sum_j phi_j i_{p-j} + e_p``.

    The innovation variance ``nu2`` is derived from ``phi`` so that the
    stationary process power is one.
    """

    phi: tuple = ()
    band: tuple = (0, 0)
    power_per_carrier: object = 1.0

    def __post_init__(self):
        phi = tuple(float(v) for v in np.atleast_1d(np.asarray(self.phi, dtype=float)))
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "band", _as_band(self.band))
        if phi:
            roots = np.roots(np.r_[1.0, phi])
            if np.max(np.abs(roots)) >= 1.0 - 1e-12:
                raise ConfigurationError("AR polynomial is not stable")
        _band_powers(self.power_per_carrier, self.band)

    @property
    def order(self) -> int:
        return len(self.phi)

    @cached_property
    def initial_covariance(self) -> np.ndarray:
        """Covariance of ``(i_0, ..., i_{r-1})`` at unit process power."""
        if self.order == 0:
            return np.zeros((0, 0))
        r0 = _initial_block_covariance(np.asarray(self.phi), 1.0)
        return r0 / r0[0, 0]

    @cached_property
    def nu2(self) -> float:
        if self.order == 0:
            return 1.0
        return 1.0 / _initial_block_covariance(np.asarray(self.phi), 1.0)[0, 0]

    def powers(self) -> np.ndarray:
        return _band_powers(self.power_per_carrier, self.band)


def _ar_matrix(phi: np.ndarray, size: int) -> np.ndarray:
    """Unit lower-triangular ``A`` mapping ``i`` to ``(i_0..i_{r-1}, e_r..)``."""
    r = phi.size
    a = np.eye(size)
    for p in range(r, size):
        a[p, p - r : p] = phi[::-1]
    return a


def _initial_block_covariance(phi: np.ndarray, nu2: float) -> np.ndarray:
    """Solve for ``R_{i(0:r-1)}`` from persymmetry of the inverse Toeplitz.

    With ``A = [[I, 0], [A21, A22]]`` the inverse autocorrelation is
    ``A^T diag(R0^{-1}, I/nu2) A``.  Its north-west r x r block,
    ``R0^{-1} + A21^T A21 / nu2``, must equal the flipped transpose of its
    south-east block, which only involves ``A22``.
    """
    r = phi.size
    size = 2 * r + 1
    a = _ar_matrix(phi, size)
    a21 = a[r:, :r]
    a22 = a[r:, r:]
    south_east = (a22.T @ a22)[-r:, -r:] / nu2
    flip = np.eye(r)[::-1]
    r0_inv = flip @ south_east.T @ flip - a21.T @ a21 / nu2
    r0 = np.linalg.inv(r0_inv)
    return 0.5 * (r0 + r0.T)


def ar_autocovariance(cfg: ArPuConfig, length: int) -> np.ndarray:
    """``gamma(0..length-1)`` of the unit-power process.

    Forward substitution through ``A`` applied to the first column of
    ``diag(R0, nu2 I)``, i.e. the first column of ``A^{-1} D A^{-T}``.
    """
    r = cfg.order
    if r == 0:
        out = np.zeros(length)
        out[0] = 1.0
        return out
    head = cfg.initial_covariance[:, 0]
    if length <= r:
        return head[:length].copy()
    a = np.r_[1.0, cfg.phi]
    zi = signal.lfiltic([1.0], a, head[::-1])
    tail, _ = signal.lfilter([1.0], a, np.zeros(length - r), zi=zi)
    return np.r_[head, tail]


def _ar_lag_kernel(cfg: ArPuConfig, sys: OfdmConfig, q: int) -> np.ndarray:
    """Unnormalized ``E{I_q(n) I_q(n-d)^*}`` for ``d = 0..N-1``."""
    Q, N = sys.Q, sys.N
    gamma = ar_autocovariance(cfg, N * Q + Q)
    d = np.arange(-(Q - 1), Q)
    weight = (Q - np.abs(d)) * np.exp(-2j * np.pi * q * d / Q)
    out = np.empty(N, dtype=complex)
    for lag in range(N):
        # real process: gamma(-k) = gamma(k)
        out[lag] = np.dot(gamma[np.abs(lag * Q + d)], weight)
    return out


def ar_carrier_power(cfg: ArPuConfig, sys: OfdmConfig, q: int) -> float:
    """Unscaled per-carrier power ``E|I_q(n)|^2`` at unit process power."""
    Q = sys.Q
    gamma = ar_autocovariance(cfg, Q)
    d = np.arange(-(Q - 1), Q)
    weight = (Q - np.abs(d)) * np.exp(-2j * np.pi * q * d / Q)
    return float(np.real(np.dot(gamma[np.abs(d)], weight)))


def ar_covariance(cfg: ArPuConfig, sys: OfdmConfig, q: int) -> NormalizedCovariance:
    """Normalized covariance ``F_q R_i F_q^H / P`` of the AR model at carrier ``q``."""
    if not 0 <= q <= sys.Q - 1:
        raise ConfigurationError(f"carrier {q} outside [0, {sys.Q - 1}]")
    if sys.Q * sys.N <= cfg.order:
        raise ConfigurationError("QN must exceed the AR order")
    kernel = _ar_lag_kernel(cfg, sys, q)
    power = kernel[0].real
    if not power > 0:
        raise DegenerateModelError(f"AR process has no power at carrier {q}")
    seq = kernel / power
    seq[0] = 1.0
    c = linalg.toeplitz(seq, seq.conj())
    return NormalizedCovariance(c=c, q=q)


def generate_ar(
    cfg: ArPuConfig,
    sys: OfdmConfig,
    rng: np.random.Generator,
    blocks: Optional[int] = None,
) -> PuContribution:
    """Draw ``I_q(n)`` over the band by running the AR recursion and the DFT.

    The first ``r`` samples come from the stationary initial covariance, so
    the recursion starts in steady state and needs no burn-in.
    """
    _as_band(cfg.band, sys.Q)
    single = blocks is None
    nb = 1 if single else int(blocks)
    Q, N, r = sys.Q, sys.N, cfg.order
    length = Q * N
    innovations = complex_normal(rng, (nb, length), cfg.nu2)
    if r == 0:
        series = innovations
    else:
        chol = np.linalg.cholesky(cfg.initial_covariance)
        head = complex_normal(rng, (nb, r)) @ chol.T
        a = np.r_[1.0, cfg.phi]
        # transposed direct-form state from the r most recent outputs
        zi = np.zeros((nb, r), dtype=complex)
        for m in range(r):
            for kk in range(m + 1, r + 1):
                zi[:, m] -= a[kk] * head[:, r - 1 - (kk - m - 1)]
        tail, _ = signal.lfilter([1.0], a, innovations[:, r:], axis=-1, zi=zi)
        series = np.concatenate([head, tail], axis=1)
    spectrum = np.fft.fft(series.reshape(nb, N, Q), axis=-1)
    q0, q1 = cfg.band
    rows = np.transpose(spectrum[:, :, q0 : q1 + 1], (0, 2, 1))
    raw = np.array([ar_carrier_power(cfg, sys, q) for q in range(q0, q1 + 1)])
    rows = _scale_rows_batch(rows, cfg.powers(), raw)
    return PuContribution(band=cfg.band, values=rows[0] if single else rows)


# ----------------------------------------------------------------------------
# CSV exchange
# ----------------------------------------------------------------------------


def save_covariance_csv(cov: NormalizedCovariance, path) -> None:
    """Write ``cov.c`` row-major with real/imag parts interleaved per entry."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in cov.c:
            inter = np.empty(2 * row.size)
            inter[0::2] = row.real
            inter[1::2] = row.imag
            writer.writerow([repr(float(v)) for v in inter])


def load_covariance_csv(path, q: int) -> NormalizedCovariance:
    with open(path, newline="") as fh:
        rows = [list(map(float, r)) for r in csv.reader(fh) if r]
    arr = np.asarray(rows)
    c = arr[:, 0::2] + 1j * arr[:, 1::2]
    return NormalizedCovariance(c=c, q=q)


def sample_covariance(blocks: np.ndarray) -> np.ndarray:
    """Sample covariance ``E{x x^H}`` of zero-mean rows of ``blocks`` (M x N)."""
    blocks = np.asarray(blocks)
    return blocks.T @ blocks.conj() / blocks.shape[0]


def covariances_for_band(model, sys: OfdmConfig, band: Sequence[int]) -> dict:
    """Map carrier index -> NormalizedCovariance for every carrier in ``band``."""
    fn = tonal_covariance if isinstance(model, TonalPuConfig) else ar_covariance
    q0, q1 = _as_band(band, sys.Q)
    return {q: fn(model, sys, q) for q in range(q0, q1 + 1)}


def generate_pu(model, sys: OfdmConfig, rng, blocks=None) -> PuContribution:
    """Dispatch to the generator matching the model type."""
    if isinstance(model, TonalPuConfig):
        return generate_tonal(model, sys, rng, blocks)
    if isinstance(model, ArPuConfig):
        return generate_ar(model, sys, rng, blocks)
    raise ConfigurationError(f"unknown PU model {type(model).__name__}")
