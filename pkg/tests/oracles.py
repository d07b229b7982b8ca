"""Reference implementations used only by the tests.

These share no code with the package: they use explicit loops, dense
matrices, high-precision series or third-party routines instead.
"""

from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
from statsmodels.tsa.arima_process import arma_acovf


def noncentral_f_sf_mp(x, d1, d2, lam, dps=40):
    """Poisson mixture of regularized incomplete betas at ``dps`` digits."""
    with mpmath.workdps(dps):
        x, d1, d2, lam = map(mpmath.mpf, (x, d1, d2, lam))
        y = d1 * x / (d1 * x + d2)
        half = lam / 2
        total = mpmath.mpf(0)
        j = 0
        while True:
            w = mpmath.exp(-half) * half**j / mpmath.factorial(j)
            total += w * (1 - mpmath.betainc(d1 / 2 + j, d2 / 2, 0, y, regularized=True))
            if j > half and w < mpmath.mpf(10) ** (-dps + 5):
                break
            j += 1
        return float(total)


def f_quantile_mp(p, d1, d2, dps=40):
    """Bisection on the beta variable ``y = d1 x / (d1 x + d2)`` at high precision."""
    with mpmath.workdps(dps):
        d1, d2, p = mpmath.mpf(d1), mpmath.mpf(d2), mpmath.mpf(p)
        lo, hi = mpmath.mpf(0), mpmath.mpf(1)
        for _ in range(200):
            mid = (lo + hi) / 2
            if mpmath.betainc(d1 / 2, d2 / 2, 0, mid, regularized=True) < p:
                lo = mid
            else:
                hi = mid
        y = (lo + hi) / 2
        return float(d2 * y / (d1 * (1 - y)))


def gaussian_q_mp(x, dps=40):
    with mpmath.workdps(dps):
        return float(mpmath.erfc(mpmath.mpf(x) / mpmath.sqrt(2)) / 2)


def gaussian_q_inv_mp(p, dps=40):
    with mpmath.workdps(dps):
        return float(-mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))


def ar_covariance_dense(phi, Q, N, q):
    """``F_q R F_q^H`` normalized, with ``R`` from statsmodels ARMA autocovariances."""
    gamma = arma_acovf(np.r_[1.0, phi], np.array([1.0]), nobs=Q * N)
    idx = np.arange(Q * N)
    R = gamma[np.abs(idx[:, None] - idx[None, :])]
    F = np.zeros((N, Q * N), dtype=complex)
    p = np.arange(Q)
    for n in range(N):
        F[n, n * Q : (n + 1) * Q] = np.exp(-2j * np.pi * q * p / Q)
    C = F @ R @ F.conj().T
    return C / C[0, 0].real


def tonal_covariance_loops(K, T_i, f_i, f_s, T_s, Q, N, q, dps=30):
    """Closed-form tonal covariance evaluated entry by entry in mpmath."""
    with mpmath.workdps(dps):
        T_i, f_i, f_s, T_s = map(mpmath.mpf, (T_i, f_i, f_s, T_s))
        eta = int(mpmath.floor(T_i / T_s + mpmath.mpf("1e-9")))
        weights = []
        for k in range(K):
            beta = ((f_i - f_s + k / T_i) * T_s - q) / Q
            if abs(beta - mpmath.nint(beta)) < mpmath.mpf("1e-12"):
                weights.append(mpmath.mpf(Q * Q))
            else:
                weights.append(mpmath.sin(mpmath.pi * beta * Q) ** 2 / mpmath.sin(mpmath.pi * beta) ** 2)
        total = sum(weights)
        C = np.zeros((N, N), dtype=complex)
        for n, m in itertools.product(range(N), repeat=2):
            d = n - m
            if abs(d) >= eta:
                continue
            acc = mpmath.mpc(0)
            for k in range(K):
                acc += weights[k] * mpmath.expjpi(2 * d * T_s * (f_i + k / T_i))
            C[n, m] = complex((1 - mpmath.mpf(abs(d)) / eta) * acc / total)
        return C


def tonal_block_loops(rng, K, T_i, f_i, f_s, T_s, Q, N, band, power, fading="gaussian", psk_order=4):
    """One tonal PU block by explicit per-sample synthesis and an FFT.

    Consumes ``rng`` in the same order as the package generator (offset,
    phase, fading, data) so equal seeds give equal blocks.
    """
    T_d = T_s / Q
    t0 = rng.uniform(0.0, T_i, size=1)[0]
    phi = rng.uniform(0.0, 1.0, size=1)[0]
    starts = np.arange(N) * T_s + t0
    n_sym = int(np.floor((starts[-1] + (Q - 1) * T_d) / T_i)) + 1
    if fading == "gaussian":
        zeta = math.sqrt(0.5) * (rng.standard_normal((1, n_sym, K)) + 1j * rng.standard_normal((1, n_sym, K)))
    else:
        zeta = np.exp(2j * np.pi * rng.uniform(size=(1, n_sym, K)))
    sym = rng.integers(0, psk_order, size=(1, n_sym, K))
    offset = math.pi / 4 if psk_order == 4 else 0.0
    data = zeta[0] * np.exp(1j * (2 * np.pi * sym[0] / psk_order + offset))

    samples = np.zeros((N, Q), dtype=complex)
    for n in range(N):
        for p in range(Q):
            l = int(np.floor((starts[n] + p * T_d) / T_i))
            for k in range(K):
                fk = f_i + k / T_i
                cyc = fk * (starts[n] - l * T_i) + phi + (f_i - f_s + k / T_i) * p * T_d
                samples[n, p] += data[l, k] * np.exp(2j * np.pi * cyc)
    spectrum = np.fft.fft(samples, axis=1)
    rows = spectrum[:, band[0] : band[1] + 1].T
    p = np.arange(Q)
    for i, qq in enumerate(range(band[0], band[1] + 1)):
        raw = 0.0
        for k in range(K):
            beta = ((f_i - f_s + k / T_i) * T_s - qq) / Q
            raw += abs(np.sum(np.exp(2j * np.pi * beta * p))) ** 2
        rows[i] *= math.sqrt(power / raw)
    return rows


def projector_statistic(z, H):
    """Matched-subspace ratio through an explicit pseudo-inverse projector."""
    z = np.asarray(z, dtype=float)
    P = H @ np.linalg.pinv(H)
    num = z @ P @ z
    den = z @ (np.eye(z.size) - P) @ z
    b, p = H.shape
    return (b - p) / p * num / den


def brute_force_band(z, r):
    """All ``(a0, a1)`` with raw Vandermonde LS; ties to widest, then smallest start."""
    z = np.asarray(z, dtype=float)
    Q = z.size
    tol = 1e-9 * max(1.0, float(z @ z))
    cands = []
    for a0 in range(Q):
        for a1 in range(a0 + r, Q):
            seg = z[a0 : a1 + 1]
            H = np.vander(np.arange(seg.size, dtype=float), r + 1, increasing=True)
            mu = np.linalg.solve(H.T @ H, H.T @ seg) if seg.size > r else np.zeros(r + 1)
            res = seg - H @ mu
            obj = z[:a0] @ z[:a0] + res @ res + z[a1 + 1 :] @ z[a1 + 1 :]
            cands.append((obj, a0, a1))
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= best + tol]
    tied.sort(key=lambda c: (-(c[2] - c[1]), c[1]))
    return tied[0]
