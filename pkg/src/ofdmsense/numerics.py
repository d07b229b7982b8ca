"""Shared numerical kernels.

Hermitian eigendecomposition, Gaussian tail functions, central and
noncentral F distributions, a one-sample Kolmogorov-Smirnov test and
reproducible random streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import ConfigurationError, NumericalError

_SERIES_TOL = 1e-12
_SERIES_MAX_TERMS = 100_000


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of a Hermitian matrix, eigenvalues in descending order."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def hermitian_eig(a) -> EigenSystem:
    """Eigendecompose a Hermitian matrix.

    Raises
    ------
    ConfigurationError
        If ``a`` is not square or not Hermitian to 1e-9 relative Frobenius.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > 1e-9 * max(scale, 1e-300):
        raise ConfigurationError("matrix is not Hermitian")
    # LAPACK heevd: Householder tridiagonalization + divide and conquer.
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(values)[::-1]
    return EigenSystem(values=values[order].copy(), vectors=vectors[:, order].copy())


def gaussian_q(x):
    """Right-tail probability of the standard normal distribution."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def gaussian_q_inv(p):
    """Inverse of :func:`gaussian_q` for ``p`` in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ConfigurationError("gaussian_q_inv requires 0 < p < 1")
    return -special.ndtri(p)


def _check_dof(d1, d2):
    if d1 < 1 or d2 < 1:
        raise ConfigurationError(f"invalid F degrees of freedom ({d1}, {d2})")


def f_cdf(x, d1, d2):
    """CDF of the central F(d1, d2) distribution via the regularized incomplete beta."""
    _check_dof(d1, d2)
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    y = d1 * x / (d1 * x + d2)
    return special.betainc(d1 / 2.0, d2 / 2.0, y)


def f_sf(x, d1, d2):
    """Right tail of the central F(d1, d2) distribution."""
    _check_dof(d1, d2)
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    # complementary form keeps precision deep in the tail
    y = d2 / (d1 * x + d2)
    return special.betainc(d2 / 2.0, d1 / 2.0, y)


def f_quantile(p, d1, d2) -> float:
    """Quantile of F(d1, d2) by bracketed root finding on :func:`f_cdf`."""
    _check_dof(d1, d2)
    if not 0.0 < p < 1.0:
        raise ConfigurationError("f_quantile requires 0 < p < 1")
    hi = 1.0
    while f_cdf(hi, d1, d2) < p:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("could not bracket F quantile")
    lo = 0.0
    return float(
        optimize.brentq(lambda x: f_cdf(x, d1, d2) - p, lo, hi, xtol=1e-14, rtol=1e-12)
    )


def noncentral_f_sf(x: float, d1, d2, lam: float) -> float:
    """Right tail of the noncentral F(d1, d2; lam) distribution.

    Evaluated as a Poisson(lam/2) mixture of beta tails,

        sf = sum_j w_j * I_{1-y}(d2/2, d1/2 + j),   y = d1 x / (d1 x + d2),

    summed outward from the Poisson mode.  Each beta tail is at most one, so
    each direction stops once a geometric bound on the unvisited Poisson
    mass falls below 1e-12.
    """
    _check_dof(d1, d2)
    if lam < 0:
        raise ConfigurationError("noncentrality must be nonnegative")
    x = max(float(x), 0.0)
    if lam == 0.0:
        return float(f_sf(x, d1, d2))
    y = d2 / (d1 * x + d2)
    half = lam / 2.0
    mode = int(math.floor(half))
    log_w_mode = -half + mode * math.log(half) - math.lgamma(mode + 1)

    def term(j, log_w):
        w = math.exp(log_w)
        return w, w * special.betainc(d2 / 2.0, d1 / 2.0 + j, y)

    total = 0.0
    mass = 0.0
    terms = 0
    j, log_w = mode, log_w_mode
    while True:
        w, t = term(j, log_w)
        total += t
        mass += w
        terms += 1
        ratio = half / (j + 1)
        if ratio < 1.0 and w * ratio / (1.0 - ratio) < _SERIES_TOL:
            break
        if terms > _SERIES_MAX_TERMS:
            raise NumericalError("noncentral F series did not converge")
        j += 1
        log_w += math.log(half) - math.log(j)
    j, log_w = mode, log_w_mode
    while j > 0:
        log_w += math.log(j) - math.log(half)
        j -= 1
        w, t = term(j, log_w)
        total += t
        mass += w
        terms += 1
        ratio = j / half
        if ratio < 1.0 and w * ratio / (1.0 - ratio) < _SERIES_TOL:
            break
        if terms > _SERIES_MAX_TERMS:
            raise NumericalError("noncentral F series did not converge")
    if abs(1.0 - mass) > 1e-9:
        raise NumericalError(f"Poisson weights sum to {mass}, series truncated early")
    return float(min(max(total, 0.0), 1.0))


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]):
    """One-sample Kolmogorov-Smirnov test against a continuous ``cdf``.

    Returns ``(statistic, p_value)`` with the asymptotic Kolmogorov p-value.
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 100:
        raise ConfigurationError(f"KS test needs at least 100 samples, got {n}")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = max(np.max(i / n - f), np.max(f - (i - 1) / n))
    return float(d), float(special.kolmogorov(math.sqrt(n) * d))


def rng_stream(seed: int, stream_id: int = 0, *sub_ids: int) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id, *sub_ids)``.

    Extra ids address nested substreams, e.g. ``(point, purpose, trial)``.
    """
    key = (int(stream_id),) + tuple(int(i) for i in sub_ids)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples, real/imag variance ``variance/2`` each."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
