"""Campaign configuration and its TOML file format.

A campaign file has top-level ``scenario``, ``seed``, ``trials`` and
``workers`` keys and the tables ``[system]``, ``[pu]``, ``[channel]``,
``[grid]`` and ``[calibration]``.  Every key is optional except
``scenario``; omitted keys take the defaults below.  See the README for
a complete example.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import tomli_w

from .errors import ConfigurationError
from .numerics import complex_normal
from .ofdm import OfdmConfig, flat_channel, generate_channel
from .pu_models import ArPuConfig, TonalPuConfig, tonal_config_for_band

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCENARIOS = (
    "case_a_roc",
    "case_b_roc",
    "case_b_pd_vs_snr",
    "case_c_hit_rate",
    "case_c_end_to_end",
)
PU_MODELS = ("tonal", "ar", "white")
CHANNEL_KINDS = ("flat", "uniform", "exponential")


def db_to_ratio(db: float) -> float:
    """Power ratio ``10**(dB/10)``."""
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class PuSpec:
    """PU signal model; the band is ``band_start .. band_start + B_PU - 1``.

    ``"tonal"`` keeps ``K`` and ``f_i`` as given when both are set and
    otherwise tiles the band with tones; ``"white"`` is a flat-spectrum
    Gaussian PU (AR model of order zero).
    """

    model: str = "white"
    band_start: int = 30
    K: Optional[int] = None
    T_i: float = 26.6e-6
    f_i: Optional[float] = None
    fading: str = "gaussian"
    phi: tuple = ()

    def __post_init__(self):
        if self.model not in PU_MODELS:
            raise ConfigurationError(f"unknown PU model {self.model!r}; choose from {PU_MODELS}")
        if self.band_start < 0:
            raise ConfigurationError("band_start must be nonnegative")
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))

    def build(self, system: OfdmConfig, b_pu: int, power=1.0):
        """Concrete PU config for a band of ``b_pu`` carriers."""
        band = (self.band_start, self.band_start + b_pu - 1)
        if band[1] > system.Q - 1:
            raise ConfigurationError(f"band {band} exceeds {system.Q} carriers")
        if self.model == "tonal":
            if self.K is not None and self.f_i is not None:
                cfg = TonalPuConfig(
                    K=self.K, T_i=self.T_i, f_i=self.f_i, band=band,
                    power_per_carrier=power, fading=self.fading,
                )
            else:
                cfg = tonal_config_for_band(system, band, power, T_i=self.T_i, fading=self.fading)
            cfg.validate(system)
            return cfg
        phi = self.phi if self.model == "ar" else ()
        return ArPuConfig(phi=phi, band=band, power_per_carrier=power)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel seen by the PU signal and, when active, by the CU.

    ``kind="flat"`` leaves the PU power constant over its band.  The
    multipath kinds draw a tapped delay line per trial; the PU power
    profile is ``|G_q|^2`` normalized to unit mean over the band.  With
    ``notch=True`` realizations are redrawn until some band carrier sits
    at or below ``notch_depth`` times the band mean.  ``estimate_error``
    is the variance of the complex Gaussian error added to the CU channel
    estimate (zero means exact estimates).
    """

    kind: str = "flat"
    num_paths: int = 8
    decay: float = 0.5
    notch: bool = False
    notch_depth: float = 0.1
    max_redraws: int = 10_000
    estimate_error: float = 0.0

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ConfigurationError(f"unknown channel kind {self.kind!r}")
        if self.num_paths < 1:
            raise ConfigurationError("num_paths must be at least 1")
        if self.decay < 0:
            raise ConfigurationError("decay must be nonnegative")
        if not 0.0 < self.notch_depth < 1.0:
            raise ConfigurationError("notch_depth must lie in (0, 1)")
        if self.notch and self.kind == "flat":
            raise ConfigurationError("a flat channel cannot have a notch")
        if self.estimate_error < 0:
            raise ConfigurationError("estimate_error must be nonnegative")

    def pu_profile(self, system: OfdmConfig, band, rng) -> np.ndarray:
        """Per-carrier PU power gains over ``band`` with unit band mean."""
        b = band[1] - band[0] + 1
        if self.kind == "flat":
            return np.ones(b)
        profile = "uniform" if self.kind == "uniform" else "exponential"
        for _ in range(self.max_redraws):
            ch = generate_channel(system, self.num_paths, rng, profile, self.decay)
            gains = np.abs(ch.response[band[0] : band[1] + 1]) ** 2
            gains = gains / gains.mean()
            if not self.notch or gains.min() <= self.notch_depth:
                return gains
        raise ConfigurationError(
            f"no notched channel after {self.max_redraws} draws; raise notch_depth or decay"
        )

    def cu_channel(self, system: OfdmConfig, rng):
        """CU channel realization (flat kinds give unit gain)."""
        if self.kind == "flat":
            return flat_channel(system)
        profile = "uniform" if self.kind == "uniform" else "exponential"
        return generate_channel(system, self.num_paths, rng, profile, self.decay)

    def estimate(self, h: np.ndarray, rng) -> np.ndarray:
        if self.estimate_error == 0.0:
            return h
        return h + complex_normal(rng, h.shape, self.estimate_error)


@dataclass(frozen=True)
class GridSpec:
    snr_db: tuple = (0.0,)
    alpha: tuple = (0.1,)
    b_pu: tuple = (10,)
    r: tuple = (0,)

    def __post_init__(self):
        for name in ("snr_db", "alpha", "b_pu", "r"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ConfigurationError(f"grid.{name} must not be empty")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        object.__setattr__(self, "alpha", tuple(float(v) for v in self.alpha))
        object.__setattr__(self, "b_pu", tuple(int(v) for v in self.b_pu))
        object.__setattr__(self, "r", tuple(int(v) for v in self.r))
        if any(not 0.0 < a < 1.0 for a in self.alpha):
            raise ConfigurationError("alpha values must lie in (0, 1)")
        if any(b < 1 for b in self.b_pu):
            raise ConfigurationError("b_pu values must be positive")
        if any(r < 0 for r in self.r):
            raise ConfigurationError("r values must be nonnegative")


@dataclass(frozen=True)
class CalibrationSpec:
    """Auxiliary knobs: H0 calibration trials, CU power, Case C options."""

    h0_trials: int = 10_000
    method: str = "empirical_histogram"
    cu_snr_db: float = 8.0
    confirm_block: bool = False
    min_width: Optional[int] = None

    def __post_init__(self):
        if self.h0_trials < 1:
            raise ConfigurationError("h0_trials must be at least 1")
        if self.method not in ("empirical_histogram", "asymptotic_gaussian"):
            raise ConfigurationError(f"unknown calibration method {self.method!r}")


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to reproduce one Monte-Carlo campaign."""

    scenario: str
    system: OfdmConfig = field(default_factory=OfdmConfig)
    pu: PuSpec = field(default_factory=PuSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    trials: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        if self.pu.band_start + max(self.grid.b_pu) > self.system.Q:
            raise ConfigurationError("PU band exceeds the carrier range")


_SECTIONS = {
    "system": OfdmConfig,
    "pu": PuSpec,
    "channel": ChannelSpec,
    "grid": GridSpec,
    "calibration": CalibrationSpec,
}
_TOP_LEVEL = {"scenario", "trials", "seed", "workers"}


def _build_section(cls, table: dict, name: str):
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigurationError(f"invalid [{name}] section: {exc}") from exc


def config_from_dict(doc: dict) -> CampaignConfig:
    unknown = set(doc) - _TOP_LEVEL - set(_SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown top-level keys: {sorted(unknown)}")
    if "scenario" not in doc:
        raise ConfigurationError("config must set 'scenario'")
    kwargs = {k: doc[k] for k in _TOP_LEVEL if k in doc}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _build_section(cls, doc[name], name)
    return CampaignConfig(**kwargs)


def config_to_dict(cfg: CampaignConfig) -> dict:
    """Plain-data form of ``cfg``; ``None`` entries are dropped (TOML has no null)."""
    out = {k: getattr(cfg, k) for k in ("scenario", "trials", "seed", "workers")}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        out[name] = {
            k: list(v) if isinstance(v, tuple) else v for k, v in section.items() if v is not None
        }
    return out


def loads_config(text: str) -> CampaignConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    return config_from_dict(doc)


def load_config(path) -> CampaignConfig:
    try:
        with open(path, "rb") as fh:
            text = fh.read().decode("utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


def dumps_config(cfg: CampaignConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def save_config(cfg: CampaignConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_config(cfg))


def default_config(scenario: str) -> CampaignConfig:
    """Defaults reproducing the published experiment for ``scenario``."""
    if scenario == "case_a_roc":
        return CampaignConfig(
            scenario=scenario,
            system=OfdmConfig(N=80),
            pu=PuSpec(model="tonal", band_start=81, K=8, f_i=3.36e9),
            grid=GridSpec(
                snr_db=(0.0, -2.0), alpha=(0.001, 0.01, 0.05, 0.1, 0.2, 0.4), b_pu=(1,), r=(0,)
            ),
            calibration=CalibrationSpec(h0_trials=100_000),
            trials=10_000,
        )
    if scenario == "case_b_roc":
        return CampaignConfig(
            scenario=scenario,
            system=OfdmConfig(N=70),
            channel=ChannelSpec(kind="uniform", num_paths=8),
            grid=GridSpec(snr_db=(0.0,), alpha=(0.01, 0.05, 0.1, 0.2, 0.4), b_pu=(10, 20), r=(1, 2)),
            trials=2_000,
        )
    if scenario == "case_b_pd_vs_snr":
        return CampaignConfig(
            scenario=scenario,
            system=OfdmConfig(N=70, cu_active=True),
            channel=ChannelSpec(kind="uniform", num_paths=8),
            grid=GridSpec(snr_db=(-6.0, -4.0, -2.0, 0.0, 2.0), alpha=(0.1,), b_pu=(10, 20), r=(1,)),
            trials=2_000,
        )
    if scenario == "case_c_hit_rate":
        return CampaignConfig(
            scenario=scenario,
            system=OfdmConfig(N=70),
            grid=GridSpec(snr_db=(-4.0, -2.0, 0.0, 1.0, 2.0), b_pu=(5, 10, 20), r=(0,)),
            trials=1_000,
        )
    if scenario == "case_c_end_to_end":
        return CampaignConfig(
            scenario=scenario,
            system=OfdmConfig(N=70),
            grid=GridSpec(snr_db=(5.0,), alpha=(0.1,), b_pu=(10,), r=(0,)),
            calibration=CalibrationSpec(confirm_block=True),
            trials=1_000,
        )
    raise ConfigurationError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
