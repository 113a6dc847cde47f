"""Global fit of excitation spectra across fields and polarisations.

All spectra of a dataset share one linewidth gamma and one optical gap
delta_cr; every magnetic field contributes its own amplitude and offset
(detection efficiency drifts between field settings, but within one
setting both polarisations are recorded back to back).  The line
pattern at each field comes from the transition catalogue, so the fit
has 2 + 2 * n_fields free parameters regardless of how many lines the
catalogues contain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..transitions import Spectrum, SpectrumModelParams, TransitionLine, lorentzian_comb
from .lm import FitError, FitProblem, FitResult, LMConfig, levenberg_marquardt

POLARIZATIONS = ("+", "-")


@dataclass
class GlobalPleResult:
    """Named view of the shared-linewidth global fit.

    fit holds the raw parameter vector in the order
    [gamma, delta_cr, a(field_1).., a(field_F), o(field_1).., o(field_F)]
    with fields sorted ascending; the accessors below unpack it.
    """

    fit: FitResult
    fields: tuple[float, ...]

    @property
    def gamma(self) -> float:
        return float(self.fit.params[0])

    @property
    def delta_cr(self) -> float:
        return float(self.fit.params[1])

    def amplitude(self, b_gauss: float) -> float:
        return float(self.fit.params[2 + self.fields.index(b_gauss)])

    def offset(self, b_gauss: float) -> float:
        return float(self.fit.params[2 + len(self.fields) + self.fields.index(b_gauss)])

    @property
    def gamma_err(self) -> float:
        return float(self.fit.uncertainties[0])

    @property
    def delta_cr_err(self) -> float:
        return float(self.fit.uncertainties[1])

    def model_params(self, b_gauss: float) -> SpectrumModelParams:
        return SpectrumModelParams(
            gamma=self.gamma,
            delta_cr=self.delta_cr,
            amplitude_a=self.amplitude(b_gauss),
            offset_o=self.offset(b_gauss),
        )


def fit_ple_global(
    spectra: Mapping[tuple[float, str], Spectrum],
    catalog_provider: Callable[[float, str], Sequence[TransitionLine]],
    *,
    initial_gamma: float = 1000.0,
    initial_delta_cr: Optional[float] = None,
    config: Optional[LMConfig] = None,
) -> GlobalPleResult:
    """Fit gamma, delta_cr and per-field amplitude/offset to all spectra.

    spectra maps (field_gauss, polarization) to a Spectrum; every field
    must appear with both polarisations.  catalog_provider returns the
    line catalogue (frequencies relative to delta_cr) for a field and
    polarisation.  Weights are 1/errors^2 as stored on each Spectrum.
    """
    if not spectra:
        raise FitError("no spectra supplied")
    fields = sorted({key[0] for key in spectra})
    for b in fields:
        for pol in POLARIZATIONS:
            if (b, pol) not in spectra:
                raise FitError(f"missing polarization {pol!r} at field {b} G")
        if not np.array_equal(
            spectra[(b, "+")].frequencies, spectra[(b, "-")].frequencies
        ):
            raise FitError(f"polarisation grids differ at field {b} G")

    keys = [(b, pol) for b in fields for pol in POLARIZATIONS]
    catalogs = {}
    for key in keys:
        lines = list(catalog_provider(*key))
        catalogs[key] = (
            np.array([ln.frequency for ln in lines], dtype=float),
            np.array([ln.weight for ln in lines], dtype=float),
        )
    if all(freqs.size == 0 for freqs, _ in catalogs.values()):
        raise FitError("all catalogues are empty; nothing to fit")

    data = np.concatenate([spectra[key].counts for key in keys])
    weights = np.concatenate([1.0 / spectra[key].errors ** 2 for key in keys])
    grids = [spectra[key].frequencies for key in keys]

    n_fields = len(fields)

    def unpack(p):
        return p[0], p[1], p[2 : 2 + n_fields], p[2 + n_fields :]

    def model(p):
        gamma, delta_cr, amps, offs = unpack(p)
        parts = []
        for k, key in enumerate(keys):
            i_field = k // 2
            freqs, wts = catalogs[key]
            params = SpectrumModelParams(
                gamma=gamma,
                delta_cr=delta_cr,
                amplitude_a=amps[i_field],
                offset_o=offs[i_field],
            )
            parts.append(lorentzian_comb(grids[k], freqs, wts, params))
        return np.concatenate(parts)

    # Starting point: the argmax of the spectra summed over all fields
    # and polarisations marks the gap (per-spectrum excess if the grids
    # differ); amplitudes follow from peak height times the gamma guess.
    if initial_delta_cr is None:
        if all(np.array_equal(g, grids[0]) for g in grids[1:]):
            total = np.sum([spectra[key].counts for key in keys], axis=0)
            initial_delta_cr = float(grids[0][int(np.argmax(total))])
        else:
            best = None
            for key in keys:
                spectrum = spectra[key]
                excess = spectrum.counts - np.median(spectrum.counts)
                i = int(np.argmax(excess))
                if best is None or excess[i] > best[0]:
                    best = (float(excess[i]), float(spectrum.frequencies[i]))
            initial_delta_cr = best[1]
    amps0 = np.empty(n_fields)
    offs0 = np.empty(n_fields)
    for i, b in enumerate(fields):
        both = np.concatenate([spectra[(b, pol)].counts for pol in POLARIZATIONS])
        offs0[i] = max(float(np.median(both)), 0.0)
        peak = max(float(np.max(both)) - offs0[i], 1.0)
        amps0[i] = peak * initial_gamma / 1e3  # height * gamma, in GHz/s

    initial = np.concatenate([[initial_gamma, initial_delta_cr], amps0, offs0])
    lower = np.concatenate([[1e-3, -np.inf], np.zeros(2 * n_fields)])
    upper = np.full(initial.shape, np.inf)

    problem = FitProblem(
        model=model,
        data=data,
        initial=initial,
        weights=weights,
        bounds=(lower, upper),
    )
    result = levenberg_marquardt(problem, config)
    result.param_names = (
        ["gamma", "delta_cr"]
        + [f"amplitude_{b:g}G" for b in fields]
        + [f"offset_{b:g}G" for b in fields]
    )
    return GlobalPleResult(fit=result, fields=tuple(fields))
