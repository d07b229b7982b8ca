"""Monte-Carlo campaigns over the detectors, with CSV result files.

Every trial draws from its own random substream, addressed by
``(seed, point, purpose, trial)``, so results do not depend on how trials
are split across worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import case_a, case_b, case_c
from .config import CampaignConfig, db_to_ratio
from .errors import ConfigurationError, DegenerateModelError
from .numerics import complex_normal, rng_stream
from .ofdm import psk_symbols
from .pu_models import covariances_for_band, generate_pu

RESULT_FIELDS = ("scenario", "snr_db", "alpha", "b_pu", "r", "n", "estimate", "stderr", "trials", "seed")
HIT_FIELDS = ("snr_db", "b_pu", "n", "trials", "hits")

H1, H0, CAL = 0, 1, 2
CASE_A_DETECTORS = ("estimator_correlator", "lmp", "energy")


@dataclass(frozen=True)
class ResultRow:
    """One estimated probability at one campaign point.

    Point parameters that do not apply to the scenario are ``None`` and
    are written as empty CSV fields.
    """

    scenario: str
    estimate: float
    trials: int
    seed: int
    snr_db: Optional[float] = None
    alpha: Optional[float] = None
    b_pu: Optional[int] = None
    r: Optional[int] = None
    n: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError(f"estimate {self.estimate} outside [0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def stderr(self) -> float:
        return math.sqrt(self.estimate * (1.0 - self.estimate) / self.trials)

    @property
    def successes(self) -> int:
        return int(round(self.estimate * self.trials))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.scenario,
                    _fmt(row.snr_db),
                    _fmt(row.alpha),
                    _fmt(row.b_pu),
                    _fmt(row.r),
                    _fmt(row.n),
                    _fmt(float(row.estimate)),
                    _fmt(float(row.stderr)),
                    row.trials,
                    row.seed,
                ]
            )


def read_results(path) -> list:
    def opt(cast, v):
        return None if v == "" else cast(v)

    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
            raise ConfigurationError(f"unexpected results header {reader.fieldnames}")
        for rec in reader:
            rows.append(
                ResultRow(
                    scenario=rec["scenario"],
                    estimate=float(rec["estimate"]),
                    trials=int(rec["trials"]),
                    seed=int(rec["seed"]),
                    snr_db=opt(float, rec["snr_db"]),
                    alpha=opt(float, rec["alpha"]),
                    b_pu=opt(int, rec["b_pu"]),
                    r=opt(int, rec["r"]),
                    n=opt(int, rec["n"]),
                )
            )
    return rows


def write_hit_table(rows: Sequence[ResultRow], path) -> None:
    """Hit counts ``(snr_db, b_pu, n, trials, hits)`` from hit-rate rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HIT_FIELDS)
        for row in rows:
            if row.scenario == "case_c_hit_rate":
                writer.writerow([_fmt(row.snr_db), row.b_pu, row.n, row.trials, row.successes])


# ---------------------------------------------------------------------------
# trial execution
# ---------------------------------------------------------------------------


def _run_chunk(fn: Callable, seed: int, point: int, purpose: int, indices) -> list:
    return [fn(rng_stream(seed, point, purpose, t)) for t in indices]


def run_trials(
    fn: Callable,
    trials: int,
    seed: int,
    point: int,
    purpose: int,
    workers: int = 1,
) -> list:
    """``[fn(rng_t) for t in range(trials)]`` with per-trial substreams.

    With ``workers > 1`` contiguous chunks of trials run in separate
    processes (``fn`` must be picklable); the result order, and hence every
    estimate, is the same as for a single worker.
    """
    if workers <= 1 or trials < 2 * workers:
        return _run_chunk(fn, seed, point, purpose, range(trials))
    bounds = np.linspace(0, trials, workers + 1).astype(int)
    chunks = [range(bounds[i], bounds[i + 1]) for i in range(workers)]
    job = functools.partial(_run_chunk, fn, seed, point, purpose)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(job, chunks))
    return [x for part in parts for x in part]


def _rate(flags) -> float:
    flags = np.asarray(flags, dtype=bool)
    return float(flags.mean()) if flags.size else 0.0


# ---------------------------------------------------------------------------
# observation synthesis over a band
# ---------------------------------------------------------------------------


def _pu_values(cfg: CampaignConfig, b_pu: int, snr_db: Optional[float], rng) -> np.ndarray:
    """PU samples over its band (B_PU x N) at PU-to-noise ratio ``snr_db``."""
    system = cfg.system
    band = (cfg.pu.band_start, cfg.pu.band_start + b_pu - 1)
    gains = cfg.channel.pu_profile(system, band, rng)
    power = db_to_ratio(snr_db) * system.sigma_w2 * gains
    pu_cfg = cfg.pu.build(system, b_pu, power)
    return generate_pu(pu_cfg, system, rng).values


def _band_block(cfg: CampaignConfig, b_pu: int, snr_db: Optional[float], rng, with_cu=False):
    """Received samples over the PU band and the matching channel estimate."""
    system = cfg.system
    h_est = None
    y = np.zeros((b_pu, system.N), dtype=complex)
    if with_cu:
        ch = cfg.channel.cu_channel(system, rng)
        q0 = cfg.pu.band_start
        h = math.sqrt(db_to_ratio(cfg.calibration.cu_snr_db) * system.sigma_w2) * ch.h[q0 : q0 + b_pu]
        y += h * psk_symbols(rng, h.shape, system.psk_order)
        h_est = cfg.channel.estimate(h, rng)
    if snr_db is not None:
        y += _pu_values(cfg, b_pu, snr_db, rng)
    y += complex_normal(rng, y.shape, system.sigma_w2)
    return y, h_est


def synthesize_spectrum(cfg: CampaignConfig, b_pu: int, snr_db: Optional[float], rng) -> np.ndarray:
    """Received samples over all Q carriers with the CU silent."""
    system = cfg.system
    y = complex_normal(rng, (system.Q, system.N), system.sigma_w2)
    if snr_db is not None:
        q0 = cfg.pu.band_start
        y[q0 : q0 + b_pu] += _pu_values(cfg, b_pu, snr_db, rng)
    return y


# ---------------------------------------------------------------------------
# Case A: ROC of LMP, energy and estimator-correlator detectors
# ---------------------------------------------------------------------------


def _case_a_trial(cfg, b_pu, snr_db, eig, ec_weights, rng):
    y, _ = _band_block(cfg, b_pu, snr_db, rng)
    out = np.empty((3, b_pu))
    for i in range(b_pu):
        proj = np.abs(y[i] @ eig[i].vectors.conj()) ** 2
        out[0, i] = proj @ ec_weights[i]
        out[1, i] = proj @ eig[i].values
        out[2, i] = np.sum(np.abs(y[i]) ** 2)
    return out


def _weighted_exp_quantile(weights, p, trials, rng) -> float:
    draws = rng.standard_exponential((trials, weights.size)) @ weights
    return float(np.quantile(draws, p))


def case_a_thresholds(cfg, covs, p_i: float, alpha: float, point: int) -> np.ndarray:
    """Per-carrier thresholds (3 x B_PU) for estimator-correlator, LMP and energy."""
    sigma2 = cfg.system.sigma_w2
    carriers = sorted(covs)
    alpha_q = case_a.per_carrier_alpha(alpha, len(carriers))
    n_trials = cfg.calibration.h0_trials
    out = np.empty((3, len(carriers)))
    for i, q in enumerate(carriers):
        c = covs[q]
        if cfg.calibration.method == case_a.EMPIRICAL and n_trials < 50.0 / alpha_q:
            raise ConfigurationError(
                f"h0_trials={n_trials} cannot resolve alpha_q={alpha_q:.3g}"
            )
        lam = np.clip(c.eigen.values, 0.0, None)
        w = p_i * lam / (p_i * lam + sigma2) / sigma2
        # under H0 each |v_i^H y|^2 is sigma2 * Exp(1)
        out[0, i] = _weighted_exp_quantile(
            sigma2 * w, 1.0 - alpha_q, n_trials, rng_stream(cfg.seed, point, CAL, 2 * i)
        )
        out[1, i] = case_a.calibrate_threshold(
            c, sigma2, alpha_q, cfg.calibration.method, n_trials,
            rng=rng_stream(cfg.seed, point, CAL, 2 * i + 1),
        )
        # energy is sigma2/2 * chi2(2N), i.e. Gamma(N, sigma2)
        out[2, i] = stats.gamma.isf(alpha_q, c.N, scale=sigma2)
    return out


def _run_case_a(cfg: CampaignConfig) -> list:
    rows = []
    point = 0
    system = cfg.system
    for b_pu in cfg.grid.b_pu:
        pu_cfg = cfg.pu.build(system, b_pu)
        covs = covariances_for_band(pu_cfg, system, pu_cfg.band)
        eig = [covs[q].eigen for q in sorted(covs)]
        for snr_db in cfg.grid.snr_db:
            p_i = db_to_ratio(snr_db) * system.sigma_w2
            ec_w = [
                p_i * np.clip(e.values, 0, None) / (p_i * np.clip(e.values, 0, None) + system.sigma_w2)
                / system.sigma_w2
                for e in eig
            ]
            fn1 = functools.partial(_case_a_trial, cfg, b_pu, snr_db, eig, ec_w)
            fn0 = functools.partial(_case_a_trial, cfg, b_pu, None, eig, ec_w)
            s1 = np.array(run_trials(fn1, cfg.trials, cfg.seed, point, H1, cfg.workers))
            s0 = np.array(run_trials(fn0, cfg.trials, cfg.seed, point, H0, cfg.workers))
            for alpha in cfg.grid.alpha:
                thr = case_a_thresholds(cfg, covs, p_i, alpha, point)
                for d, name in enumerate(CASE_A_DETECTORS):
                    for kind, s in (("pd", s1), ("pfa", s0)):
                        rate = _rate(np.any(s[:, d, :] > thr[d], axis=1))
                        rows.append(
                            ResultRow(
                                f"case_a_roc.{name}.{kind}", rate, cfg.trials, cfg.seed,
                                snr_db=snr_db, alpha=alpha, b_pu=b_pu, r=None, n=system.N,
                            )
                        )
            point += 1
    return rows


# ---------------------------------------------------------------------------
# Case B: matched-subspace detector on a known band
# ---------------------------------------------------------------------------


def _case_b_trial(cfg, b_pu, snr_db, with_cu, orders, rng):
    y, h_est = _band_block(cfg, b_pu, snr_db, rng, with_cu=with_cu)
    z = case_b.build_observation(y, (0, b_pu - 1), h_est, cfg.system.sigma_w2).z
    out = []
    for r in orders:
        model = case_b.SubspaceModel.monomial(b_pu, r)
        try:
            out.append(case_b.matched_subspace_statistic(z, model))
        except DegenerateModelError:
            out.append(math.inf)
    return np.array(out)


def _run_case_b(cfg: CampaignConfig, with_cu: bool) -> list:
    rows = []
    point = 0
    orders = cfg.grid.r
    for b_pu in cfg.grid.b_pu:
        for r in orders:
            case_b.SubspaceModel.monomial(b_pu, r)  # validates dof early
        fn0 = functools.partial(_case_b_trial, cfg, b_pu, None, with_cu, orders)
        s0 = np.array(run_trials(fn0, cfg.trials, cfg.seed, point, H0, cfg.workers))
        point += 1
        for snr_db in cfg.grid.snr_db:
            fn1 = functools.partial(_case_b_trial, cfg, b_pu, snr_db, with_cu, orders)
            s1 = np.array(run_trials(fn1, cfg.trials, cfg.seed, point, H1, cfg.workers))
            point += 1
            for j, r in enumerate(orders):
                for alpha in cfg.grid.alpha:
                    gamma = case_b.threshold_from_alpha(alpha, r, b_pu)
                    rows.append(
                        ResultRow(
                            f"{cfg.scenario}.pd", _rate(s1[:, j] > gamma), cfg.trials, cfg.seed,
                            snr_db=snr_db, alpha=alpha, b_pu=b_pu, r=r, n=cfg.system.N,
                        )
                    )
        for j, r in enumerate(orders):
            for alpha in cfg.grid.alpha:
                gamma = case_b.threshold_from_alpha(alpha, r, b_pu)
                rows.append(
                    ResultRow(
                        f"{cfg.scenario}.pfa", _rate(s0[:, j] > gamma), cfg.trials, cfg.seed,
                        snr_db=None, alpha=alpha, b_pu=b_pu, r=r, n=cfg.system.N,
                    )
                )
    return rows


# ---------------------------------------------------------------------------
# Case C: band search hit rate and end-to-end detection
# ---------------------------------------------------------------------------


def _hit_trial(cfg, b_pu, snr_db, order, rng):
    y = synthesize_spectrum(cfg, b_pu, snr_db, rng)
    z = case_b.build_observation(y, (0, cfg.system.Q - 1), None, cfg.system.sigma_w2).z
    est = case_c.band_search(z, order, min_width=cfg.calibration.min_width)
    band = (cfg.pu.band_start, cfg.pu.band_start + b_pu - 1)
    return est.is_hit(band, 1), est.is_hit(band, 0)


def _run_hit_rate(cfg: CampaignConfig) -> list:
    rows = []
    point = 0
    for b_pu in cfg.grid.b_pu:
        for order in cfg.grid.r:
            for snr_db in cfg.grid.snr_db:
                fn = functools.partial(_hit_trial, cfg, b_pu, snr_db, order)
                res = np.array(run_trials(fn, cfg.trials, cfg.seed, point, H1, cfg.workers))
                point += 1
                for col, name in ((0, "case_c_hit_rate"), (1, "case_c_hit_rate.exact")):
                    rows.append(
                        ResultRow(
                            name, _rate(res[:, col]), cfg.trials, cfg.seed,
                            snr_db=snr_db, alpha=None, b_pu=b_pu, r=order, n=cfg.system.N,
                        )
                    )
    return rows


def _end_to_end_trial(cfg, b_pu, snr_db, order, rng):
    sigma2 = cfg.system.sigma_w2
    y = synthesize_spectrum(cfg, b_pu, snr_db, rng)
    confirm = synthesize_spectrum(cfg, b_pu, snr_db, rng) if cfg.calibration.confirm_block else None
    res = case_c.two_step_detect(
        y, cfg.grid.alpha[0], order, sigma_w2_est=sigma2,
        confirm_obs=confirm, min_width=cfg.calibration.min_width,
    )
    stat = -math.inf if res.too_short else res.detection.statistic
    return stat, res.band.width


def _run_end_to_end(cfg: CampaignConfig) -> list:
    rows = []
    point = 0
    for b_pu in cfg.grid.b_pu:
        for order in cfg.grid.r:
            fn0 = functools.partial(_end_to_end_trial, cfg, b_pu, None, order)
            s0 = np.array(run_trials(fn0, cfg.trials, cfg.seed, point, H0, cfg.workers))
            point += 1
            per_snr = []
            for snr_db in cfg.grid.snr_db:
                fn1 = functools.partial(_end_to_end_trial, cfg, b_pu, snr_db, order)
                per_snr.append(
                    (snr_db, np.array(run_trials(fn1, cfg.trials, cfg.seed, point, H1, cfg.workers)))
                )
                point += 1
            for alpha in cfg.grid.alpha:
                for label, snr_db, s in [("pfa", None, s0)] + [("pd", a, b) for a, b in per_snr]:
                    rows.append(
                        ResultRow(
                            f"case_c_end_to_end.{label}", _decision_rate(s, alpha, order),
                            cfg.trials, cfg.seed,
                            snr_db=snr_db, alpha=alpha, b_pu=b_pu, r=order, n=cfg.system.N,
                        )
                    )
    return rows


def _decision_rate(results: np.ndarray, alpha: float, order: int) -> float:
    """Detection rate from ``(statistic, band width)`` pairs at level ``alpha``."""
    hits = []
    for stat, width in results:
        width = int(width)
        if width - order - 1 < 1:
            hits.append(False)
        else:
            hits.append(stat > case_b.threshold_from_alpha(alpha, order, width))
    return _rate(hits)


_RUNNERS = {
    "case_a_roc": _run_case_a,
    "case_b_roc": functools.partial(_run_case_b, with_cu=False),
    "case_b_pd_vs_snr": functools.partial(_run_case_b, with_cu=True),
    "case_c_hit_rate": _run_hit_rate,
    "case_c_end_to_end": _run_end_to_end,
}


def run_campaign(cfg: CampaignConfig, out=None) -> list:
    """Run every point of ``cfg`` and optionally write the rows to ``out``."""
    if cfg.scenario == "case_b_pd_vs_snr" and not cfg.system.cu_active:
        cfg = dataclasses.replace(cfg, system=dataclasses.replace(cfg.system, cu_active=True))
    rows = _RUNNERS[cfg.scenario](cfg)
    if out is not None:
        write_results(rows, out)
    return rows
