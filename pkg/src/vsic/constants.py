"""Physical constants and doublet parameter sets.

Unit conventions used throughout the package: energies and frequencies in
MHz, magnetic fields in Gauss, times in seconds unless a name says
otherwise.  Magnetic moments are stored divided by Planck's constant so
that moment times field is directly a frequency.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources

from .errors import ConfigError

# CODATA values, converted to MHz per Gauss.
BOHR_MAGNETON_MHZ_PER_G = 1.399624604
NUCLEAR_MAGNETON_MHZ_PER_G = 7.6225932e-4

# Nuclear g-factor of the spin-7/2 vanadium-51 nucleus.
V51_NUCLEAR_G = 1.47106


@dataclass(frozen=True)
class SpinConstants:
    """Fundamental constants entering the spin Hamiltonian.

    mu_B, mu_N: Bohr and nuclear magnetons over h, in MHz/G.
    g_N: nuclear g-factor (dimensionless).
    I: nuclear spin quantum number.
    """

    mu_B: float = BOHR_MAGNETON_MHZ_PER_G
    mu_N: float = NUCLEAR_MAGNETON_MHZ_PER_G
    g_N: float = V51_NUCLEAR_G
    I: float = 3.5

    def __post_init__(self):
        if self.mu_B <= 0 or self.mu_N <= 0:
            raise ValueError("magnetons must be positive")
        # Guard against unit slips: the two magnetons differ by the
        # proton-electron mass ratio, about 1836.
        ratio = self.mu_B / self.mu_N
        if abs(ratio / 1836.152673 - 1.0) > 1e-3:
            raise ValueError(
                f"mu_B/mu_N = {ratio:.3f} is not within 0.1% of 1836; "
                "check units (expected MHz/G for both)"
            )
        if self.I <= 0 or (2 * self.I) != int(2 * self.I):
            raise ValueError("I must be a positive integer or half-integer")

    @property
    def nuclear_dim(self) -> int:
        return int(2 * self.I + 1)


DEFAULT_CONSTANTS = SpinConstants()


@dataclass(frozen=True)
class KdParams:
    """Effective spin-1/2 parameters of one Kramers doublet.

    label: "g" for the ground doublet, "e" for the excited one.
    E_k: electronic energy offset of the doublet, MHz.
    g_z: electronic g-factor along the symmetry axis.
    a_zz, a_xx_yy, a_xz: hyperfine couplings, MHz.  The transverse and
    mixed terms enter as a_xx_yy*(sx*Ix + sy*Iy) and a_xz*(sx*Iz + sz*Ix).
    """

    label: str
    E_k: float
    g_z: float
    a_zz: float
    a_xx_yy: float
    a_xz: float

    def __post_init__(self):
        if self.label not in ("g", "e"):
            raise ValueError(f"label must be 'g' or 'e', got {self.label!r}")
        for name in ("E_k", "g_z", "a_zz", "a_xx_yy", "a_xz"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value != value:
                raise ValueError(f"{name} must be a finite number")


def _load_defaults() -> dict:
    text = resources.files("vsic.data").joinpath("kd_defaults.json").read_text()
    return json.loads(text)


def default_kd_params() -> tuple[KdParams, KdParams]:
    """Ground and excited doublet parameters of the telecom alpha line.

    Values are the bulk 4H-SiC vanadium parameters shipped with the
    package (see data/kd_defaults.json).
    """
    raw = _load_defaults()
    return KdParams(**raw["ground"]), KdParams(**raw["excited"])


def kd_params_from_dict(raw: dict) -> KdParams:
    """Build KdParams from a plain dict, rejecting unknown keys."""
    allowed = {"label", "E_k", "g_z", "a_zz", "a_xx_yy", "a_xz"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown doublet parameter key(s): {sorted(unknown)}")
    missing = allowed - set(raw)
    if missing:
        raise ConfigError(f"missing doublet parameter key(s): {sorted(missing)}")
    try:
        return KdParams(**raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def constants_from_dict(raw: dict) -> SpinConstants:
    """Build SpinConstants from a plain dict, rejecting unknown keys."""
    allowed = {"mu_B", "mu_N", "g_N", "I"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown constants key(s): {sorted(unknown)}")
    try:
        return SpinConstants(**raw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def constants_to_dict(constants: SpinConstants) -> dict:
    return asdict(constants)
