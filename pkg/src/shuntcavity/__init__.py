"""Mode spectra, circuit models and crosstalk estimates for inductively shunted enclosures."""

from __future__ import annotations

from .core import (
    DielectricLayer,
    EnclosureSpec,
    FitError,
    InvalidEnclosureError,
    ModelDomainError,
    SolverError,
    effective_permittivity,
    validate_enclosure,
)
from .spectra import ModeSpectrum, bare_spectrum, plasma_frequency, shifted_spectrum

__version__ = "0.1.0"

__all__ = [
    "DielectricLayer",
    "EnclosureSpec",
    "FitError",
    "InvalidEnclosureError",
    "ModeSpectrum",
    "ModelDomainError",
    "SolverError",
    "bare_spectrum",
    "effective_permittivity",
    "plasma_frequency",
    "shifted_spectrum",
    "validate_enclosure",
]
