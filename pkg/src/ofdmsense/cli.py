"""Command-line entry points.

Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import case_a, case_b, case_c
from .campaign import run_campaign, synthesize_spectrum, write_hit_table
from .config import SCENARIOS, CampaignConfig, default_config, load_config
from .errors import CalibrationError, ConfigurationError, SensingError
from .numerics import rng_stream
from .pu_models import covariances_for_band

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

_ROC_SCENARIOS = ("case_a_roc", "case_b_roc", "case_b_pd_vs_snr")
_SEARCH_SCENARIOS = ("case_c_hit_rate", "case_c_end_to_end")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, scenario_default: str, allowed) -> None:
    p.add_argument("--config", help="campaign TOML file")
    p.add_argument(
        "--scenario",
        choices=allowed,
        default=None,
        help=f"built-in defaults when no config is given (default {scenario_default})",
    )
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--trials", type=int, help="trials per point (overrides the config)")
    p.add_argument("--out", help="output path")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.set_defaults(scenario_default=scenario_default, allowed=allowed)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ofdmsense", description="Spectrum sensing for OFDM cognitive radios")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="write per-carrier LMP threshold tables")
    _common(p, "case_a_roc", ("case_a_roc",))

    p = sub.add_parser("roc", help="run a Case A or Case B campaign")
    _common(p, "case_a_roc", _ROC_SCENARIOS)

    p = sub.add_parser("band-search", help="run a Case C hit-rate or end-to-end campaign")
    _common(p, "case_c_hit_rate", _SEARCH_SCENARIOS)
    p.add_argument("--hits", help="also write hit counts as CSV")
    p.add_argument("--trace", help="dump a band-search trace of one synthetic block as JSON")

    p = sub.add_parser("detect", help="one end-to-end decision on a given or synthetic block")
    _common(p, "case_c_end_to_end", SCENARIOS)
    p.add_argument("--input", help="complex Q x N observation saved with numpy.save")
    p.add_argument("--absent", action="store_true", help="synthesize a block without PU")
    return parser


def resolve_config(args) -> CampaignConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.scenario not in args.allowed:
            raise ConfigurationError(
                f"scenario {cfg.scenario!r} not valid for '{args.command}'; expected one of {args.allowed}"
            )
    else:
        cfg = default_config(args.scenario or args.scenario_default)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.workers is not None:
        updates["workers"] = args.workers
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _require_out(args) -> str:
    if not args.out:
        raise ConfigurationError("--out is required")
    return args.out


def cmd_calibrate(args) -> None:
    cfg = resolve_config(args)
    out = _require_out(args)
    if args.trials is not None:
        cfg = dataclasses.replace(
            cfg, calibration=dataclasses.replace(cfg.calibration, h0_trials=args.trials)
        )
    rows = []
    for b_pu in cfg.grid.b_pu:
        pu_cfg = cfg.pu.build(cfg.system, b_pu)
        covs = covariances_for_band(pu_cfg, cfg.system, pu_cfg.band)
        for alpha in cfg.grid.alpha:
            a_cfg = case_a.CaseAConfig(
                band=pu_cfg.band, alpha=alpha, calibration=cfg.calibration.method,
                num_trials=cfg.calibration.h0_trials, sigma_w2=cfg.system.sigma_w2, seed=cfg.seed,
            )
            thr = case_a.calibrate_band(covs, a_cfg)
            alpha_q = case_a.per_carrier_alpha(alpha, a_cfg.b_pu)
            rows.extend((q, alpha_q, a_cfg.calibration, cfg.seed, t) for q, t in thr.items())
    case_a.write_threshold_table(out, rows)


def cmd_roc(args) -> None:
    cfg = resolve_config(args)
    run_campaign(cfg, _require_out(args))


def cmd_band_search(args) -> None:
    cfg = resolve_config(args)
    rows = run_campaign(cfg, _require_out(args))
    if args.hits:
        if cfg.scenario != "case_c_hit_rate":
            raise ConfigurationError("--hits applies to the case_c_hit_rate scenario")
        write_hit_table(rows, args.hits)
    if args.trace:
        b_pu, snr_db, order = cfg.grid.b_pu[0], cfg.grid.snr_db[0], cfg.grid.r[0]
        y = synthesize_spectrum(cfg, b_pu, snr_db, rng_stream(cfg.seed, 0, 3, 0))
        z = case_b.build_observation(y, (0, cfg.system.Q - 1), None, cfg.system.sigma_w2).z
        est, table = case_c.band_search(
            z, order, return_table=True, min_width=cfg.calibration.min_width
        )
        case_c.dump_trace(args.trace, z, est, table)


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


def cmd_detect(args) -> dict:
    cfg = resolve_config(args)
    system = cfg.system
    b_pu, order, alpha = cfg.grid.b_pu[0], cfg.grid.r[0], cfg.grid.alpha[0]
    snr_db = None if args.absent else cfg.grid.snr_db[0]
    rng = rng_stream(cfg.seed, 0, 4, 0)
    if args.input:
        try:
            y = np.load(args.input)
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read observation {args.input}: {exc}") from exc
        if y.shape != (system.Q, system.N):
            raise ConfigurationError(f"observation shape {y.shape} != ({system.Q}, {system.N})")
    else:
        y = synthesize_spectrum(cfg, b_pu, snr_db, rng)
    band = (cfg.pu.band_start, cfg.pu.band_start + b_pu - 1)
    report = {"scenario": cfg.scenario, "seed": cfg.seed, "alpha": alpha}
    if cfg.scenario == "case_a_roc":
        pu_cfg = cfg.pu.build(system, b_pu)
        covs = covariances_for_band(pu_cfg, system, pu_cfg.band)
        a_cfg = case_a.CaseAConfig(
            band=band, alpha=alpha, calibration=cfg.calibration.method,
            num_trials=cfg.calibration.h0_trials, sigma_w2=system.sigma_w2, seed=cfg.seed,
        )
        res = case_a.detect_band(y, covs, a_cfg)
        report.update(
            decision=bool(res.fused_decision),
            band=list(band),
            statistic=[float(v) for v in res.per_carrier_statistic],
            threshold=[float(v) for v in res.per_carrier_threshold],
        )
    elif cfg.scenario in ("case_b_roc", "case_b_pd_vs_snr"):
        fobs = case_b.build_observation(y, band, None, system.sigma_w2)
        res = case_b.detect(fobs, case_b.SubspaceModel.monomial(b_pu, order), alpha)
        report.update(
            decision=bool(res.decision), band=list(band), r=order,
            statistic=_finite(res.statistic), threshold=_finite(res.threshold),
            degenerate=res.degenerate,
        )
    else:
        confirm = None
        if cfg.calibration.confirm_block and not args.input:
            confirm = synthesize_spectrum(cfg, b_pu, snr_db, rng)
        res = case_c.two_step_detect(
            y, alpha, order, system.sigma_w2, confirm_obs=confirm,
            min_width=cfg.calibration.min_width,
        )
        report.update(
            decision=bool(res.decision), band=[res.band.q0_hat, res.band.q1_hat], r=order,
            statistic=_finite(res.detection.statistic), threshold=_finite(res.detection.threshold),
            degenerate=res.detection.degenerate, too_short=res.too_short,
        )
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return report


_COMMANDS = {
    "calibrate": cmd_calibrate,
    "roc": cmd_roc,
    "band-search": cmd_band_search,
    "detect": cmd_detect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except (ConfigurationError, CalibrationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SensingError, OSError, ArithmeticError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
