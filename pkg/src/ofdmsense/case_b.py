"""Matched-subspace detection over a known PU band.

The per-carrier periodogram, minus the power expected from the CU signal
and the noise, forms a real observation ``Z`` over the band.  A PU signal
is modelled as lying in the column span of a known basis ``H`` (low-order
polynomials by default) and detected with the F-distributed ratio of
in-span to out-of-span energy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DegenerateModelError
from .numerics import f_quantile, f_sf, noncentral_f_sf
from .ofdm import ObservationBlock

_DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class SubspaceModel:
    """Signal basis ``H`` (B_PU x (r+1)) for the PU power profile."""

    basis: np.ndarray
    order: int
    kind: str = "custom"

    def __post_init__(self):
        h = np.asarray(self.basis, dtype=float)
        if h.ndim != 2 or h.shape[1] != self.order + 1:
            raise ConfigurationError(
                f"basis shape {h.shape} does not have order+1 = {self.order + 1} columns"
            )
        if h.shape[1] > h.shape[0] - 1:
            raise ConfigurationError(
                f"need B_PU - r - 1 >= 1, got B_PU={h.shape[0]}, r={self.order}"
            )
        if np.linalg.matrix_rank(h) != h.shape[1]:
            raise ConfigurationError("basis is not full column rank")
        object.__setattr__(self, "basis", h)

    @classmethod
    def monomial(cls, b_pu: int, order: int) -> "SubspaceModel":
        """Columns ``h_i(n) = n**i`` for ``n = 0..b_pu-1``."""
        n = np.arange(b_pu, dtype=float)
        return cls(basis=np.vander(n, order + 1, increasing=True), order=order, kind="monomial")

    @property
    def b_pu(self) -> int:
        return self.basis.shape[0]

    @property
    def dof(self) -> tuple:
        return self.order + 1, self.b_pu - self.order - 1

    @property
    def orthonormal(self) -> np.ndarray:
        # same column space, well conditioned even for raw monomials
        q, _ = np.linalg.qr(self._scaled())
        return q

    def _scaled(self) -> np.ndarray:
        h = self.basis
        norms = np.linalg.norm(h, axis=0)
        return h / np.where(norms > 0, norms, 1.0)

    def projector(self) -> np.ndarray:
        u = self.orthonormal
        return u @ u.T


def monomial_basis(length: int, order: int, scale: Optional[float] = None) -> np.ndarray:
    """Local polynomial basis over ``length`` points, optionally rescaled."""
    n = np.arange(length, dtype=float)
    if scale:
        n = n / scale
    return np.vander(n, order + 1, increasing=True)


@dataclass(frozen=True)
class FrequencyObservation:
    """``z = zbar - m`` over the band carriers."""

    z: np.ndarray
    zbar: np.ndarray
    m: np.ndarray
    band: tuple = field(default=(0, 0))


@dataclass(frozen=True)
class DetectionResult:
    decision: bool
    statistic: float
    threshold: float
    degenerate: bool = False


def periodogram(y: np.ndarray) -> np.ndarray:
    """``(1/N) sum_n |Y_q(n)|^2`` per row of ``y``."""
    y = np.asarray(y)
    return np.mean(np.abs(y) ** 2, axis=-1)


def build_observation(obs, band, h_est=None, sigma_w2_est: Optional[float] = None) -> FrequencyObservation:
    """Periodogram observation with the expected CU + noise power removed.

    ``h_est`` holds channel estimates over the band (B_PU x N, or B_PU for
    a block-static channel); ``None`` or 0 means the CU is silent.
    ``sigma_w2_est`` defaults to the configured noise variance.
    """
    if isinstance(obs, ObservationBlock):
        y = obs.y
        if sigma_w2_est is None:
            sigma_w2_est = obs.meta.sigma_w2
    else:
        y = np.asarray(obs)
        if sigma_w2_est is None:
            raise ConfigurationError("sigma_w2_est is required for raw observation arrays")
    q0, q1 = int(band[0]), int(band[1])
    if not 0 <= q0 <= q1 <= y.shape[0] - 1:
        raise ConfigurationError(f"band {band} outside [0, {y.shape[0] - 1}]")
    zbar = periodogram(y[q0 : q1 + 1])
    m = np.full(zbar.shape, float(sigma_w2_est))
    if h_est is not None:
        h = np.asarray(h_est)
        if h.ndim == 0:
            h = np.full(zbar.shape, complex(h))
        if h.shape[0] != zbar.size:
            raise ConfigurationError("channel estimate does not cover the band")
        m = m + (np.mean(np.abs(h) ** 2, axis=-1) if h.ndim == 2 else np.abs(h) ** 2)
    return FrequencyObservation(z=zbar - m, zbar=zbar, m=m, band=(q0, q1))


def estimate_noise_variance(obs, idle_carriers) -> float:
    """Mean periodogram over carriers known to be free of CU and PU signals."""
    y = obs.y if isinstance(obs, ObservationBlock) else np.asarray(obs)
    idle = np.asarray(list(idle_carriers), dtype=int)
    if idle.size == 0:
        raise ConfigurationError("no idle carriers given")
    return float(np.mean(periodogram(y[idle])))


def _as_vector(z) -> np.ndarray:
    return np.asarray(z.z if isinstance(z, FrequencyObservation) else z, dtype=float)


def matched_subspace_statistic(z, model: SubspaceModel) -> float:
    """``T_B = (B-r-1)/(r+1) * |P_H z|^2 / |(I - P_H) z|^2``.

    Raises
    ------
    DegenerateModelError
        When ``z`` lies (numerically) inside the signal subspace.
    """
    v = _as_vector(z)
    if v.shape[-1] != model.b_pu:
        raise ConfigurationError(f"observation length {v.shape[-1]} != B_PU {model.b_pu}")
    u = model.orthonormal
    coef = v @ u
    num = np.sum(coef**2, axis=-1)
    total = np.sum(v**2, axis=-1)
    den = np.maximum(total - num, 0.0)
    d1, d2 = model.dof
    if v.ndim == 1:
        if total == 0.0:
            raise ConfigurationError("observation is identically zero")
        if den < _DEGENERATE_TOL * total:
            raise DegenerateModelError("observation lies in the signal subspace")
        return float(d2 / d1 * num / den)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = d2 / d1 * num / den
    return np.where(den < _DEGENERATE_TOL * total, np.inf, stat)


def threshold_from_alpha(alpha: float, r: int, b_pu: int) -> float:
    """Upper-``alpha`` point of F(r+1, b_pu-r-1)."""
    d1, d2 = r + 1, b_pu - r - 1
    if d2 < 1 or r < 0:
        raise ConfigurationError(f"invalid dof for r={r}, B_PU={b_pu}")
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError("alpha must lie in (0, 1)")
    return f_quantile(1.0 - alpha, d1, d2)


def false_alarm_probability(gamma: float, r: int, b_pu: int) -> float:
    return float(f_sf(gamma, r + 1, b_pu - r - 1))


def predicted_detection_probability(gamma: float, r: int, b_pu: int, lam: float) -> float:
    """Right tail of the noncentral F(r+1, b_pu-r-1; lam) at ``gamma``."""
    d1, d2 = r + 1, b_pu - r - 1
    if d2 < 1 or r < 0:
        raise ConfigurationError(f"invalid dof for r={r}, B_PU={b_pu}")
    return noncentral_f_sf(gamma, d1, d2, lam)


def noncentrality(signal, sigma2: float) -> float:
    """``|s|^2 / sigma2`` for a mean vector ``s`` in white noise of variance ``sigma2``."""
    s = np.asarray(signal, dtype=float)
    return float(np.dot(s, s) / sigma2)


def periodogram_noncentrality(pu_power, sigma_w2: float, n: int) -> float:
    """Noncentrality for silent-CU periodograms.

    ``Z(q)`` has noise standard deviation ``sigma_w2 / sqrt(N)``, so the
    per-carrier PU powers ``pu_power`` give ``N |P|^2 / sigma_w2^2``.
    """
    return noncentrality(pu_power, sigma_w2**2 / n)


def detect(z, model: SubspaceModel, alpha: float) -> DetectionResult:
    """Decide H1 when ``T_B`` exceeds the F threshold for ``alpha``.

    An observation inside the signal subspace has an unbounded likelihood
    ratio and is declared a detection with ``degenerate=True``.
    """
    gamma = threshold_from_alpha(alpha, model.order, model.b_pu)
    try:
        stat = matched_subspace_statistic(z, model)
    except DegenerateModelError:
        return DetectionResult(True, math.inf, gamma, degenerate=True)
    return DetectionResult(stat > gamma, stat, gamma)


def save_basis_csv(model: SubspaceModel, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"h{i}" for i in range(model.order + 1)])
        for row in model.basis:
            writer.writerow([repr(float(v)) for v in row])


def load_basis_csv(path) -> SubspaceModel:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader if r]
    return SubspaceModel(basis=np.asarray(rows), order=len(header) - 1)
