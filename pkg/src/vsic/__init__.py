"""Spin-resolved optical spectra, emitter statistics and charge dynamics
of telecom-wavelength vanadium centres in silicon carbide.

The package covers the modelling chain from the electron-nuclear spin
Hamiltonian of a single Kramers doublet, through optical transition
catalogues and composite spectra, to global spectrum fitting, emitter
detection on scanned excitation maps, photon statistics and
charge-state population dynamics under pulsed illumination.
"""

from .constants import DEFAULT_CONSTANTS, KdParams, SpinConstants, default_kd_params
from .spin import HyperfineLevel, build_kd_hamiltonian, eigensystem, kd_levels
from .transitions import (
    Spectrum,
    SpectrumModelParams,
    TransitionLine,
    field_catalog,
    peak_splitting,
    simulate_spectrum,
    transition_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_CONSTANTS",
    "KdParams",
    "SpinConstants",
    "default_kd_params",
    "HyperfineLevel",
    "build_kd_hamiltonian",
    "eigensystem",
    "kd_levels",
    "Spectrum",
    "SpectrumModelParams",
    "TransitionLine",
    "field_catalog",
    "peak_splitting",
    "simulate_spectrum",
    "transition_catalog",
    "__version__",
]
