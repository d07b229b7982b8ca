"""Per-carrier detection with a known normalized PU covariance.

The locally most powerful statistic ``T_A = y^H C_q y`` is evaluated at
each carrier of the PU band, compared against a threshold calibrated for
the per-carrier false-alarm rate, and the decisions are OR-fused.  The
energy detector and the estimator-correlator (known PU power) are
included as reference detectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .errors import CalibrationError, ConfigurationError, NumericalError
from .numerics import gaussian_q, gaussian_q_inv, rng_stream
from .ofdm import ObservationBlock
from .pu_models import NormalizedCovariance

ASYMPTOTIC = "asymptotic_gaussian"
EMPIRICAL = "empirical_histogram"
DEFAULT_TRIALS = 100_000
_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class CaseAConfig:
    band: tuple
    alpha: float = 0.1
    calibration: str = EMPIRICAL
    num_trials: int = DEFAULT_TRIALS
    sigma_w2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError("alpha must lie in (0, 1)")
        q0, q1 = int(self.band[0]), int(self.band[1])
        if q1 < q0 or q0 < 0:
            raise ConfigurationError(f"invalid band {self.band}")
        object.__setattr__(self, "band", (q0, q1))
        if self.calibration not in (ASYMPTOTIC, EMPIRICAL):
            raise ConfigurationError(f"unknown calibration {self.calibration!r}")
        if not self.sigma_w2 > 0:
            raise ConfigurationError("sigma_w2 must be positive")

    @property
    def b_pu(self) -> int:
        return self.band[1] - self.band[0] + 1


@dataclass(frozen=True)
class DetectorReport:
    per_carrier_statistic: np.ndarray
    per_carrier_threshold: np.ndarray
    per_carrier_decision: np.ndarray
    fused_decision: bool


def _check_dims(y, c_q: NormalizedCovariance):
    y = np.asarray(y)
    if y.shape[-1] != c_q.N:
        raise ConfigurationError(f"observation length {y.shape[-1]} != covariance size {c_q.N}")
    return y


def _real(value):
    value = np.asarray(value)
    if np.iscomplexobj(value):
        scale = np.maximum(np.abs(value.real), 1.0)
        if np.any(np.abs(value.imag) > _IMAG_TOL * scale):
            raise NumericalError("quadratic form has a non-negligible imaginary part")
        value = value.real
    return value


def lmp_statistic(y_q, c_q: NormalizedCovariance):
    """``y^H C_q y``; ``y_q`` may carry leading batch dimensions."""
    y = _check_dims(y_q, c_q)
    eig = c_q.eigen
    proj = y @ eig.vectors.conj()
    out = np.abs(proj) ** 2 @ eig.values
    return float(out) if np.ndim(out) == 0 else out


def lmp_statistic_direct(y_q, c_q: NormalizedCovariance):
    """Dense evaluation of ``y^H C_q y`` (no eigendecomposition)."""
    y = _check_dims(y_q, c_q)
    val = _real(np.einsum("...i,ij,...j->...", y.conj(), c_q.c, y))
    return float(val) if np.ndim(val) == 0 else val


def energy_statistic(y_q):
    y = np.asarray(y_q)
    out = np.sum(np.abs(y) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def estimator_correlator_statistic(y_q, c_q: NormalizedCovariance, p_i: float, sigma_w2: float):
    """Known-power likelihood-ratio statistic.

    ``sigma_w^-2 P_I y^H C_q (P_I C_q + sigma_w^2 I)^{-1} y``, evaluated as
    ``sum_i P_I lam_i / (P_I lam_i + sigma_w^2) |v_i^H y|^2 / sigma_w^2``.
    """
    if p_i < 0:
        raise ConfigurationError("PU power must be nonnegative")
    y = _check_dims(y_q, c_q)
    eig = c_q.eigen
    lam = np.clip(eig.values, 0.0, None)
    weights = p_i * lam / (p_i * lam + sigma_w2) / sigma_w2
    out = np.abs(y @ eig.vectors.conj()) ** 2 @ weights
    return float(out) if np.ndim(out) == 0 else out


def per_carrier_alpha(alpha: float, b_pu: int) -> float:
    """Per-carrier false-alarm rate whose OR over ``b_pu`` carriers gives ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    if b_pu < 1:
        raise ConfigurationError("b_pu must be at least 1")
    return -math.expm1(math.log1p(-alpha) / b_pu)


def simulate_h0(c_q: NormalizedCovariance, num_trials: int, rng, sigma_w2: float = 1.0):
    """``num_trials`` draws of ``T_A`` under noise only.

    Under H0, ``T_A = sum_i lam_i |v_i^H w|^2`` with the projections i.i.d.
    CN(0, sigma_w2), so each term is ``sigma_w2 * lam_i * Exp(1)``.
    """
    lam = np.clip(c_q.eigen.values, 0.0, None)
    draws = rng.standard_exponential((num_trials, lam.size))
    return sigma_w2 * (draws @ lam)


def calibrate_threshold(
    c_q: NormalizedCovariance,
    sigma_w2: float,
    alpha_q: float,
    method: str = EMPIRICAL,
    num_trials: int = DEFAULT_TRIALS,
    rng=None,
    seed: int = 0,
) -> float:
    """Threshold ``gamma_q`` with ``P(T_A > gamma_q | H0) = alpha_q``.

    The asymptotic method uses the Gaussian approximation with mean
    ``sigma^2 N`` and variance ``sigma^4 tr(C^2)``.  The empirical method
    takes the ``1 - alpha_q`` quantile of simulated unit-noise statistics
    and rescales by ``sigma_w2`` (the statistic is quadratic in the noise).
    """
    if not 0.0 < alpha_q < 1.0:
        raise ConfigurationError("alpha_q must lie in (0, 1)")
    if method == ASYMPTOTIC:
        return float(
            sigma_w2 * c_q.N + sigma_w2 * math.sqrt(c_q.trace_squared()) * gaussian_q_inv(alpha_q)
        )
    if method != EMPIRICAL:
        raise ConfigurationError(f"unknown calibration method {method!r}")
    if num_trials < 50.0 / alpha_q:
        raise CalibrationError(
            f"{num_trials} trials cannot resolve alpha_q={alpha_q:.3g} "
            f"(need at least {math.ceil(50.0 / alpha_q)})"
        )
    if rng is None:
        rng = rng_stream(seed, c_q.q)
    samples = simulate_h0(c_q, num_trials, rng)
    return float(sigma_w2 * np.quantile(samples, 1.0 - alpha_q))


def calibrate_band(covariances: Mapping[int, NormalizedCovariance], cfg: CaseAConfig) -> dict:
    """Thresholds for every carrier of ``cfg.band`` (carrier -> gamma_q)."""
    alpha_q = per_carrier_alpha(cfg.alpha, cfg.b_pu)
    out = {}
    for q in range(cfg.band[0], cfg.band[1] + 1):
        if q not in covariances:
            raise ConfigurationError(f"no covariance for carrier {q}")
        out[q] = calibrate_threshold(
            covariances[q],
            cfg.sigma_w2,
            alpha_q,
            cfg.calibration,
            cfg.num_trials,
            rng=rng_stream(cfg.seed, q),
        )
    return out


def detect_band(
    obs,
    covariances: Mapping[int, NormalizedCovariance],
    cfg: CaseAConfig,
    thresholds: Optional[Mapping[int, float]] = None,
) -> DetectorReport:
    """Run the LMP test on every carrier of the band and OR the decisions.

    ``obs`` is an :class:`ObservationBlock` or a raw Q x N array.  Pass
    precomputed ``thresholds`` to avoid recalibrating on every call.
    """
    y = obs.y if isinstance(obs, ObservationBlock) else np.asarray(obs)
    q0, q1 = cfg.band
    if q1 >= y.shape[0]:
        raise ConfigurationError(f"band {cfg.band} exceeds {y.shape[0]} carriers")
    missing = [q for q in range(q0, q1 + 1) if q not in covariances]
    if missing:
        raise ConfigurationError(f"missing covariance for carriers {missing}")
    if thresholds is None:
        thresholds = calibrate_band(covariances, cfg)
    stats = np.array([lmp_statistic(y[q], covariances[q]) for q in range(q0, q1 + 1)])
    gammas = np.array([thresholds[q] for q in range(q0, q1 + 1)], dtype=float)
    decisions = stats > gammas
    return DetectorReport(stats, gammas, decisions, bool(decisions.any()))


def asymptotic_h1_moments(c_q: NormalizedCovariance, p_i: float, sigma_w2: float):
    """Mean and variance of ``T_A`` when ``y ~ CN(0, P C + sigma^2 I)``."""
    if p_i < 0:
        raise ConfigurationError("PU power must be nonnegative")
    m = c_q.c @ (p_i * c_q.c + sigma_w2 * np.eye(c_q.N))
    mean = np.trace(m).real
    var = np.sum(m * m.T).real  # tr(M M)
    return float(mean), float(var)


def asymptotic_roc_point(c_q: NormalizedCovariance, p_i: float, sigma_w2: float, alpha: float):
    """Detection probability of LMP under the Gaussian approximations."""
    gamma = calibrate_threshold(c_q, sigma_w2, alpha, ASYMPTOTIC)
    mean, var = asymptotic_h1_moments(c_q, p_i, sigma_w2)
    return float(gaussian_q((gamma - mean) / math.sqrt(var)))


# ---------------------------------------------------------------------------
# threshold tables
# ---------------------------------------------------------------------------

THRESHOLD_FIELDS = ("q", "alpha_q", "method", "seed", "threshold")


def write_threshold_table(path, rows) -> None:
    """Write rows of ``(q, alpha_q, method, seed, threshold)`` as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(THRESHOLD_FIELDS)
        for q, alpha_q, method, seed, thr in rows:
            writer.writerow([int(q), repr(float(alpha_q)), method, int(seed), repr(float(thr))])


def read_threshold_table(path) -> dict:
    """Return ``{(q, alpha_q, method, seed): threshold}``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != THRESHOLD_FIELDS:
            raise ConfigurationError(f"unexpected threshold table header {reader.fieldnames}")
        for row in reader:
            key = (int(row["q"]), float(row["alpha_q"]), row["method"], int(row["seed"]))
            out[key] = float(row["threshold"])
    return out
