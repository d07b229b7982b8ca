"""Blind PU band search followed by matched-subspace detection.

With the CU silent, the periodogram observation ``Z`` over all carriers
is modelled as zero-mean noise outside an unknown band ``[q0, q1]`` and a
low-order polynomial plus noise inside it.  The band is found by the
least-squares segmentation

    min_{a0, a1}  d0(0, a0-1) + d1(a0, a1) + d0(a1+1, Q-1)

where ``d0`` is the energy of ``Z`` and ``d1`` the polynomial fit
residual.  The minimization is solved exactly by dynamic programming.
The estimated band is then tested with the F statistic from
:mod:`ofdmsense.case_b`, at a threshold chosen for that band length so
that the overall false-alarm rate equals ``alpha``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .case_b import (
    DetectionResult,
    SubspaceModel,
    build_observation,
    detect,
    monomial_basis,
    threshold_from_alpha,
)
from .errors import ConfigurationError
from .ofdm import ObservationBlock

REFRESH_INTERVAL = 64
_TIE_RTOL = 1e-9
BASIS_KINDS = ("monomial",)


@dataclass(frozen=True)
class BandEstimate:
    """Estimated band edges with the LS objective and fitted gains.

    ``gain`` holds the polynomial coefficients for ``h_i(n) = n**i`` with
    ``n`` counted from ``q0_hat``.
    """

    q0_hat: int
    q1_hat: int
    objective: float
    gain: np.ndarray

    @property
    def width(self) -> int:
        return self.q1_hat - self.q0_hat + 1

    def is_hit(self, band, tolerance: int = 1) -> bool:
        """Both edges within ``tolerance`` carriers of the true ``band``."""
        return abs(self.q0_hat - band[0]) <= tolerance and abs(self.q1_hat - band[1]) <= tolerance


@dataclass(frozen=True)
class DpTable:
    """Prefix objectives ``e(l)`` and their minimizing segment starts.

    ``e[l]`` is defined for ``l >= r``; entries below are ``inf``.
    """

    e: np.ndarray
    argmin_a0: np.ndarray
    delta0_prefix: np.ndarray
    order: int
    min_width: int = 0


@dataclass(frozen=True)
class TwoStepResult:
    detection: DetectionResult
    band: BandEstimate
    too_short: bool = False

    @property
    def decision(self) -> bool:
        return self.detection.decision


def _check_order(order: int):
    if order < 0:
        raise ConfigurationError("model order must be nonnegative")


def _check_kind(kind: str):
    if kind not in BASIS_KINDS:
        raise ConfigurationError(f"unknown basis kind {kind!r}; supported: {BASIS_KINDS}")


def ls_segment_error(z, a: int, b: int, model) -> tuple:
    """Polynomial fit residual ``d1(a, b)`` and its LS gain.

    Parameters
    ----------
    z : array_like
        Observation over all carriers.
    a, b : int
        Inclusive segment edges.
    model : int or SubspaceModel
        Polynomial order ``r`` (monomial basis in local coordinates), or an
        explicit basis with ``b - a + 1`` rows.

    Returns
    -------
    delta1 : float
    mu_hat : ndarray
        Coefficients in the basis as given (raw ``n**i`` for an order).
    """
    z = np.asarray(z, dtype=float)
    if not 0 <= a <= b < z.size:
        raise ConfigurationError(f"segment [{a}, {b}] outside [0, {z.size - 1}]")
    seg = z[a : b + 1]
    length = seg.size
    if isinstance(model, SubspaceModel):
        basis = model.basis
        if basis.shape[0] != length:
            raise ConfigurationError("basis length does not match the segment")
        scales = np.linalg.norm(basis, axis=0)
        scaled = basis / scales
    else:
        order = int(model)
        _check_order(order)
        if length < order + 1:
            raise ConfigurationError(
                f"segment of length {length} is shorter than order + 1 = {order + 1}"
            )
        # local coordinates n / length keep the Vandermonde matrix well conditioned
        s = float(max(length, 1))
        scaled = monomial_basis(length, order, scale=s)
        scales = s ** np.arange(order + 1)
    coef, *_ = np.linalg.lstsq(scaled, seg, rcond=None)
    resid = seg - scaled @ coef
    return float(resid @ resid), coef / scales


def _fit_windows(z: np.ndarray, length: int, regressors: np.ndarray):
    """Direct LS fits of every length-``length`` window (rows of ``regressors``)."""
    windows = sliding_window_view(z, length)
    pinv = np.linalg.pinv(regressors[:length])
    theta = windows @ pinv.T
    resid = windows - theta @ regressors[:length].T
    return theta, np.einsum("ij,ij->i", resid, resid)


def segment_errors(z, order: int) -> np.ndarray:
    """``D[a0, a1] = d1(a0, a1)`` for all segments of length ``>= order + 1``.

    The monomial column space is shift invariant, so in local coordinates
    every segment of a given length shares the same regressors and the
    same inverse Gram matrix.  Sequential (rank-one) LS therefore extends
    all segments by one carrier at once: one vectorized update per length.
    A direct solve every ``REFRESH_INTERVAL`` lengths bounds rounding drift.
    Inadmissible entries are ``inf``.
    """
    z = np.asarray(z, dtype=float)
    q = z.size
    _check_order(order)
    p = order + 1
    if q <= p:
        raise ConfigurationError(f"need Q > r + 1, got Q={q}, r={order}")
    regressors = monomial_basis(q, order, scale=float(q))
    out = np.full((q, q), np.inf)

    theta, err = _fit_windows(z, p, regressors)
    gram_inv = np.linalg.inv(regressors[:p].T @ regressors[:p])
    starts = np.arange(q - p + 1)
    out[starts, starts + p - 1] = err
    for length in range(p + 1, q + 1):
        count = q - length + 1
        if (length - p) % REFRESH_INTERVAL == 0:
            theta, err = _fit_windows(z, length, regressors)
            block = regressors[:length]
            gram_inv = np.linalg.inv(block.T @ block)
        else:
            x = regressors[length - 1]
            px = gram_inv @ x
            denom = 1.0 + x @ px
            innov = z[length - 1 : length - 1 + count] - theta[:count] @ x
            theta = theta[:count] + np.outer(innov, px / denom)
            err = np.maximum(err[:count] + innov**2 / denom, 0.0)
            gram_inv = gram_inv - np.outer(px, px) / denom
        out[np.arange(count), np.arange(count) + length - 1] = err
    return out


def _tie_tol(z: np.ndarray) -> float:
    return _TIE_RTOL * max(1.0, float(z @ z))


def _pick(candidates_obj: np.ndarray, a0: np.ndarray, a1: np.ndarray, tol: float):
    """Minimizer with ties broken toward the widest band, then smallest start."""
    best = np.min(candidates_obj)
    tied = np.flatnonzero(candidates_obj <= best + tol)
    order = np.lexsort((a0[tied], -(a1[tied] - a0[tied])))
    return tied[order[0]]


def _min_width(order: int, min_width: Optional[int], q: int) -> int:
    _check_order(order)
    width = order + 1 if min_width is None else int(min_width)
    if width < order + 1:
        raise ConfigurationError(f"min_width must be at least r + 1 = {order + 1}")
    if q <= width:
        raise ConfigurationError(f"need Q > min_width, got Q={q}, min_width={width}")
    return width


def dp_table(
    z, order: int, errors: Optional[np.ndarray] = None, min_width: Optional[int] = None
) -> DpTable:
    """Forward pass ``e(l) = min_{a0 <= l - w + 1} d0(0, a0 - 1) + d1(a0, l)``.

    ``w`` is the smallest admissible band width, ``r + 1`` by default.
    """
    z = np.asarray(z, dtype=float)
    q = z.size
    width = _min_width(order, min_width, q)
    if errors is None:
        errors = segment_errors(z, order)
    prefix = np.concatenate(([0.0], np.cumsum(z**2)))
    tol = _tie_tol(z)
    e = np.full(q, np.inf)
    arg = np.full(q, -1, dtype=int)
    for l in range(width - 1, q):
        a0 = np.arange(0, l - width + 2)
        obj = prefix[a0] + errors[a0, l]
        best = np.min(obj)
        # smallest start among ties gives the widest band ending at l
        idx = int(np.flatnonzero(obj <= best + tol)[0])
        e[l] = obj[idx]
        arg[l] = a0[idx]
    return DpTable(e=e, argmin_a0=arg, delta0_prefix=prefix, order=order, min_width=width)


def band_search(
    z,
    order: int,
    kind: str = "monomial",
    return_table: bool = False,
    min_width: Optional[int] = None,
):
    """Exact minimizer of the LS band-segmentation objective.

    Parameters
    ----------
    z : array_like
        Real observation over all Q carriers.
    order : int
        Polynomial order ``r``; estimated bands have at least ``r + 1``
        carriers.
    kind : str
        Basis family; only ``"monomial"`` is supported.
    return_table : bool
        Also return the :class:`DpTable`.
    min_width : int, optional
        Smallest admissible band width (default ``r + 1``).
    """
    _check_kind(kind)
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise ConfigurationError("z must be a vector")
    table = dp_table(z, order, min_width=min_width)
    q = z.size
    prefix = table.delta0_prefix
    l = np.arange(table.min_width - 1, q)
    total = table.e[l] + (prefix[q] - prefix[l + 1])
    idx = _pick(total, table.argmin_a0[l], l, _tie_tol(z))
    a1 = int(l[idx])
    a0 = int(table.argmin_a0[a1])
    _, gain = ls_segment_error(z, a0, a1, order)
    est = BandEstimate(q0_hat=a0, q1_hat=a1, objective=float(total[idx]), gain=gain)
    return (est, table) if return_table else est


def segmentation_objective(z, a0: int, a1: int, order: int) -> float:
    """``d0(0, a0-1) + d1(a0, a1) + d0(a1+1, Q-1)`` evaluated directly."""
    z = np.asarray(z, dtype=float)
    d1, _ = ls_segment_error(z, a0, a1, order)
    return float(z[:a0] @ z[:a0] + d1 + z[a1 + 1 :] @ z[a1 + 1 :])


def exhaustive_band_search(z, order: int, min_width: Optional[int] = None) -> BandEstimate:
    """Brute-force minimization over all admissible ``(a0, a1)`` (reference)."""
    z = np.asarray(z, dtype=float)
    q = z.size
    width = _min_width(order, min_width, q)
    pairs = [(a0, a1) for a0 in range(q) for a1 in range(a0 + width - 1, q)]
    a0s = np.array([p[0] for p in pairs])
    a1s = np.array([p[1] for p in pairs])
    obj = np.array([segmentation_objective(z, a0, a1, order) for a0, a1 in pairs])
    idx = _pick(obj, a0s, a1s, _tie_tol(z))
    a0, a1 = int(a0s[idx]), int(a1s[idx])
    _, gain = ls_segment_error(z, a0, a1, order)
    return BandEstimate(q0_hat=a0, q1_hat=a1, objective=float(obj[idx]), gain=gain)


def glrt_band_search(z, order: int, max_q: int = 64) -> BandEstimate:
    """Band maximizing the full generalized likelihood ratio (reference only).

    Minimizes ``n0 log s0 + n1 log s1`` where ``s0`` is the mean energy
    outside the band (``n0`` carriers) and ``s1`` the mean fit residual
    inside it (``n1`` carriers).  Bands need ``n1 >= r + 2`` so that
    ``s1 > 0`` almost surely; an empty outside region drops its term.
    Quadratic in Q with a log per candidate, so limited to small ``Q``.
    """
    z = np.asarray(z, dtype=float)
    q = z.size
    if q > max_q:
        raise ConfigurationError(f"GLRT reference search limited to Q <= {max_q}")
    if q < order + 2:
        raise ConfigurationError(f"need Q >= r + 2, got Q={q}, r={order}")
    errors = segment_errors(z, order)
    prefix = np.concatenate(([0.0], np.cumsum(z**2)))
    best = None
    for a0 in range(q):
        for a1 in range(a0 + order + 1, q):
            n1 = a1 - a0 + 1
            n0 = q - n1
            s1 = errors[a0, a1] / n1
            s0 = (prefix[a0] + prefix[q] - prefix[a1 + 1]) / n0 if n0 else 1.0
            if s1 <= 0 or s0 <= 0:
                continue
            val = n0 * math.log(s0) + n1 * math.log(s1)
            key = (val, -n1, a0)
            if best is None or key < best[0]:
                best = (key, a0, a1)
    if best is None:
        raise ConfigurationError("no admissible band with positive residual")
    _, a0, a1 = best
    _, gain = ls_segment_error(z, a0, a1, order)
    return BandEstimate(q0_hat=a0, q1_hat=a1, objective=float(best[0][0]), gain=gain)


def band_threshold(alpha: float, order: int, estimate: BandEstimate) -> float:
    """F threshold for the estimated band, dof ``(r+1, q1 - q0 - r)``."""
    return threshold_from_alpha(alpha, order, estimate.width)


def two_step_detect(
    obs,
    alpha: float,
    order: int,
    sigma_w2_est: Optional[float] = None,
    confirm_obs=None,
    min_width: Optional[int] = None,
) -> TwoStepResult:
    """Search the band on the full periodogram, then run the F test on it.

    The CU must be silent, so no channel power is subtracted.  The search
    is restricted to bands of at least ``min_width`` carriers, by default
    ``r + 2``, the fewest the F test can evaluate.  With an explicit
    ``min_width = r + 1`` an estimated band of ``r + 1`` carriers yields no
    detection with ``too_short=True``.

    By default the F test reuses the periodogram that located the band.
    The search picks the segment that best fits the polynomial model, so
    under H0 the statistic on that segment is biased upward and the
    false-alarm rate exceeds ``alpha``.  Passing an independent
    ``confirm_obs`` (for example the next silent period) runs the F test
    on fresh data over the estimated band, for which the per-band
    threshold gives a false-alarm rate of exactly ``alpha``.
    """
    fobs = _full_observation(obs, sigma_w2_est)
    width = order + 2 if min_width is None else min_width
    est = band_search(fobs.z, order, min_width=width)
    if est.width - order - 1 < 1:
        return TwoStepResult(
            DetectionResult(False, math.nan, math.nan), est, too_short=True
        )
    test_z = fobs.z if confirm_obs is None else _full_observation(confirm_obs, sigma_w2_est).z
    if test_z.size != fobs.z.size:
        raise ConfigurationError("confirmation observation has a different carrier count")
    model = SubspaceModel.monomial(est.width, order)
    det = detect(test_z[est.q0_hat : est.q1_hat + 1], model, alpha)
    return TwoStepResult(det, est)


def _full_observation(obs, sigma_w2_est):
    if isinstance(obs, ObservationBlock):
        if obs.meta.cu_active:
            raise ConfigurationError("band search requires a silent cognitive system")
        q = obs.meta.Q
    else:
        q = np.asarray(obs).shape[0]
    return build_observation(obs, (0, q - 1), h_est=None, sigma_w2_est=sigma_w2_est)


def dump_trace(path, z, estimate: BandEstimate, table: Optional[DpTable] = None) -> None:
    """Write the observation, DP table and estimate as JSON."""

    def finite(v):
        return [float(x) if np.isfinite(x) else None for x in np.asarray(v, dtype=float)]

    doc = {
        "z": finite(z),
        "estimate": {
            "q0_hat": estimate.q0_hat,
            "q1_hat": estimate.q1_hat,
            "objective": estimate.objective,
            "gain": finite(estimate.gain),
        },
    }
    if table is not None:
        doc["dp"] = {
            "order": table.order,
            "e": finite(table.e),
            "argmin_a0": [int(a) for a in table.argmin_a0],
            "delta0_prefix": finite(table.delta0_prefix),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
