"""Spectrum sensing for wideband OFDM cognitive radios.

Three detectors for a primary user (PU) seen by an OFDM receiver:

* :mod:`~ofdmsense.case_a` -- locally most powerful test per carrier with
  a known normalized PU covariance.
* :mod:`~ofdmsense.case_b` -- matched-subspace F test on the periodogram
  over a known PU band, usable while the cognitive user transmits.
* :mod:`~ofdmsense.case_c` -- dynamic-programming band search followed by
  the F test on the estimated band.

:mod:`~ofdmsense.campaign` and :mod:`~ofdmsense.cli` run reproducible
Monte-Carlo campaigns over them.
"""

from .errors import (
    CalibrationError,
    ConfigurationError,
    DegenerateModelError,
    NumericalError,
    SensingError,
)
from .ofdm import ObservationBlock, OfdmConfig, generate_channel, generate_observation
from .pu_models import (
    ArPuConfig,
    NormalizedCovariance,
    TonalPuConfig,
    ar_covariance,
    generate_pu,
    tonal_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "ArPuConfig",
    "CalibrationError",
    "ConfigurationError",
    "DegenerateModelError",
    "NormalizedCovariance",
    "NumericalError",
    "ObservationBlock",
    "OfdmConfig",
    "SensingError",
    "TonalPuConfig",
    "ar_covariance",
    "generate_channel",
    "generate_observation",
    "generate_pu",
    "tonal_covariance",
]
