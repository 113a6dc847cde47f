"""Command-line interface.

Subcommands are config-file driven: each takes a JSON config plus an
output directory, validates everything up front and only then writes
results.  Exit codes: 0 on success, 1 when an analysis fails (a fit
does not converge, no peak found), 2 for bad inputs (malformed config
or data files, unknown keys, missing paths).  Outputs are deterministic
for identical inputs: JSON keys are sorted and no timestamps or
machine-specific values are embedded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import charge as charge_mod
from . import io as io_mod
from . import synth
from .constants import (
    DEFAULT_CONSTANTS,
    constants_from_dict,
    default_kd_params,
    kd_params_from_dict,
)
from .detection import run_detection_pipeline
from .errors import ConfigError, InputError, VsicError
from .fitting import fit_exponential_decay, fit_lorentzian, fit_ple_global
from .fitting.lm import FitError
from .transitions import (
    SpectrumModelParams,
    field_catalog,
    simulate_spectrum,
)

EXIT_OK = 0
EXIT_ANALYSIS = 1
EXIT_INPUT = 2


def _check_keys(config: dict, allowed: set, context: str) -> None:
    unknown = set(config) - allowed
    if unknown:
        raise ConfigError(f"unknown {context} key(s): {sorted(unknown)}")


def _get(config: dict, key: str, default=None, required=False):
    if required and key not in config:
        raise ConfigError(f"missing required key {key!r}")
    return config.get(key, default)


def _doublets_from_config(config: dict, config_dir: Path):
    """Doublet parameters from the config, a params file, or the defaults."""
    constants = DEFAULT_CONSTANTS
    ground, excited = default_kd_params()
    raw = None
    if "params_file" in config:
        params_path = config_dir / config["params_file"]
        file_data = io_mod.load_json(params_path)
        if not isinstance(file_data, dict):
            raise ConfigError(f"params file {params_path} must hold a JSON object")
        _check_keys(file_data, {"constants", "ground", "excited"}, "params file")
        if "constants" in file_data:
            constants = constants_from_dict(file_data["constants"])
        raw = file_data
    if "constants" in config:
        constants = constants_from_dict(config["constants"])
    if "doublets" in config:
        raw = config["doublets"]
        _check_keys(raw, {"ground", "excited"}, "doublets")
    if raw is not None:
        if "ground" in raw:
            ground = kd_params_from_dict(raw["ground"])
        if "excited" in raw:
            excited = kd_params_from_dict(raw["excited"])
    return ground, excited, constants


def _float_list(value, key: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{key!r} must be a non-empty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key!r} must contain only numbers")


def _out_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate_spectrum(config: dict, out_dir: Path, config_dir: Path) -> int:
    """Noise-free spectrum CSVs and a line-catalogue JSON at given fields."""
    _check_keys(
        config,
        {
            "fields_gauss",
            "gamma_mhz",
            "delta_cr_mhz",
            "amplitudes_ghz_per_s",
            "offsets_per_s",
            "grid_span_mhz",
            "grid_step_mhz",
            "weight_floor",
            "doublets",
            "constants",
            "params_file",
        },
        "simulate-spectrum config",
    )
    fields = _float_list(_get(config, "fields_gauss", required=True), "fields_gauss")
    gamma = float(_get(config, "gamma_mhz", 1038.0))
    delta_cr = float(_get(config, "delta_cr_mhz", 234425594.0))
    amplitudes = _get(config, "amplitudes_ghz_per_s", [20.0] * len(fields))
    offsets = _get(config, "offsets_per_s", [25.0] * len(fields))
    if isinstance(amplitudes, (int, float)):
        amplitudes = [float(amplitudes)] * len(fields)
    if isinstance(offsets, (int, float)):
        offsets = [float(offsets)] * len(fields)
    amplitudes = _float_list(amplitudes, "amplitudes_ghz_per_s")
    offsets = _float_list(offsets, "offsets_per_s")
    if len(amplitudes) != len(fields) or len(offsets) != len(fields):
        raise ConfigError("amplitudes and offsets must match fields_gauss in length")
    span = float(_get(config, "grid_span_mhz", 3000.0))
    step = float(_get(config, "grid_step_mhz", 20.0))
    if span <= 0 or step <= 0:
        raise ConfigError("grid span and step must be positive")
    weight_floor = float(_get(config, "weight_floor", 1e-6))
    ground, excited, constants = _doublets_from_config(config, config_dir)

    out_dir = _out_dir(out_dir)
    grid = synth.default_grid(delta_cr, span, step)
    catalogs = []
    for b, amp, off in zip(fields, amplitudes, offsets):
        try:
            params = SpectrumModelParams(
                gamma=gamma, delta_cr=delta_cr, amplitude_a=amp, offset_o=off
            )
        except ValueError as exc:
            raise ConfigError(str(exc))
        for pol, name in (("+", "plus"), ("-", "minus")):
            catalog = field_catalog(
                ground, excited, b, pol, constants, weight_floor=weight_floor
            )
            spectrum = simulate_spectrum(catalog, params, grid)
            io_mod.write_spectrum_csv(out_dir / f"spectrum_{b:g}G_{name}.csv", spectrum)
            catalogs.append(
                {
                    "b_gauss": b,
                    "polarization": pol,
                    "lines": [
                        {
                            "frequency_mhz": ln.frequency,
                            "weight": ln.weight,
                            "gs_sigma": ln.gs_label[0],
                            "gs_m": ln.gs_label[1],
                            "es_sigma": ln.es_label[0],
                            "es_m": ln.es_label[1],
                            "kind": ln.kind,
                        }
                        for ln in catalog
                    ],
                }
            )
    io_mod.write_json(out_dir / "catalog.json", {"catalogs": catalogs})
    return EXIT_OK


def _report(fit, param_names=None) -> dict:
    """Fit report payload: params, uncertainties, chi2, convergence."""
    names = param_names if param_names is not None else fit.param_names
    return {
        "params": {name: float(value) for name, value in zip(names, fit.params)},
        "uncertainties": {
            name: float(err) for name, err in zip(names, fit.uncertainties)
        },
        "reduced_chi2": fit.reduced_chi2,
        "converged": bool(fit.converged),
        "iterations": fit.iterations,
    }


def cmd_fit(config: dict, out_dir: Path, config_dir: Path) -> int:
    """Fit a dataset; the 'task' key picks the model."""
    task = _get(config, "task", required=True)
    if task == "ple-global":
        _check_keys(
            config,
            {
                "task",
                "manifest",
                "initial_gamma_mhz",
                "weight_floor",
                "doublets",
                "constants",
                "params_file",
            },
            "fit config",
        )
        manifest = config_dir / _get(config, "manifest", required=True)
        dataset = io_mod.read_ple_dataset(manifest)
        ground, excited, constants = _doublets_from_config(config, config_dir)
        weight_floor = float(_get(config, "weight_floor", 1e-6))

        def provider(b, pol):
            return field_catalog(
                ground, excited, b, pol, constants, weight_floor=weight_floor
            )

        result = fit_ple_global(
            dataset,
            provider,
            initial_gamma=float(_get(config, "initial_gamma_mhz", 1000.0)),
        )
        names = ["gamma_mhz", "delta_cr_mhz"]
        names += [f"a_{b:g}G_ghz_per_s" for b in result.fields]
        names += [f"o_{b:g}G_per_s" for b in result.fields]
        fit = result.fit
        payload = _report(fit, names)
    elif task in ("decay", "antibunching", "lorentzian"):
        _check_keys(config, {"task", "data"}, "fit config")
        data_path = config_dir / _get(config, "data", required=True)
        times, values, errors = io_mod.read_trace_csv(data_path)
        if task == "lorentzian":
            fit = fit_lorentzian(times, values, errors)
        else:
            fit = fit_exponential_decay(times, values, errors, variant=task)
        payload = _report(fit)
    else:
        raise ConfigError(f"unknown fit task {task!r}")
    io_mod.write_json(_out_dir(out_dir) / "fit_report.json", payload)
    if not fit.converged:
        print(f"fit did not converge: {fit.message}", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


def cmd_detect(config: dict, out_dir: Path, config_dir: Path) -> int:
    """Run the emitter detection pipeline on a map stack."""
    _check_keys(
        config,
        {"stack", "threshold_sigma", "max_components", "bin_width_mhz", "lifetime_ns"},
        "detect config",
    )
    stack_path = config_dir / _get(config, "stack", required=True)
    stack = io_mod.load_stack_any(stack_path)
    result = run_detection_pipeline(
        stack,
        threshold_sigma=float(_get(config, "threshold_sigma", 5.0)),
        max_components=int(_get(config, "max_components", 3)),
        bin_width_mhz=float(_get(config, "bin_width_mhz", 50.0)),
        lifetime_ns=float(_get(config, "lifetime_ns", 167.0)),
    )
    out_dir = _out_dir(out_dir)
    io_mod.write_json(
        out_dir / "spots.json",
        {
            "n_spots": len(result.spots),
            "spots": [
                {
                    "row_px": float(spot.center[0]),
                    "col_px": float(spot.center[1]),
                    "snr": float(spot.snr),
                    "partial_aperture": spot.partial_aperture,
                    "peaks": [
                        {"center_mhz": c, "width_mhz": w, "amplitude": a}
                        for c, w, a in spot.peaks
                    ],
                }
                for spot in result.spots
            ],
        },
    )
    if result.stats is not None:
        stats = result.stats
        io_mod.write_json(
            out_dir / "stats.json",
            {
                "n_peaks": int(stats.centers.size),
                "mean_mhz": stats.mean,
                "std_mhz": stats.std,
                "eta": stats.eta,
                "n_modes": stats.n_modes,
                "lifetime_ns": result.params["lifetime_ns"],
                "bin_width_mhz": result.params["bin_width_mhz"],
            },
        )
        io_mod.write_histogram_csv(
            out_dir / "histogram.csv", stats.bin_edges, stats.histogram
        )
    else:
        io_mod.write_json(
            out_dir / "stats.json",
            {"n_peaks": 0, "mean_mhz": None, "std_mhz": None, "eta": None, "n_modes": 0},
        )
        io_mod.write_histogram_csv(
            out_dir / "histogram.csv", np.array([0.0, 0.0]), np.array([], dtype=int)
        )
    return EXIT_OK


def _rates_from_config(config: dict) -> charge_mod.RateParams:
    preset = _get(config, "preset")
    if preset is not None:
        presets = {"sample-a": charge_mod.SAMPLE_A_RATES, "sample-b": charge_mod.SAMPLE_B_RATES}
        if preset not in presets:
            raise ConfigError(f"unknown preset {preset!r}; use 'sample-a' or 'sample-b'")
        return presets[preset]
    raw = _get(config, "rates")
    if raw is None:
        raise ConfigError("charge config needs either 'preset' or 'rates'")
    allowed = {"k_pump", "k_dark", "sigma_ion", "r_det", "leak_fraction"}
    _check_keys(raw, allowed, "rates")
    try:
        return charge_mod.RateParams(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def cmd_charge(config: dict, out_dir: Path) -> int:
    """Simulate and analyse a pulsed charge-dynamics experiment."""
    _check_keys(
        config,
        {
            "experiment",
            "preset",
            "rates",
            "seed",
            "powers_uw",
            "delays_s",
            "repump_s",
            "probe_s",
            "green_uw",
            "telecom_uw",
            "bin_width_s",
            "repetitions",
            "background",
            "sequence",
        },
        "charge config",
    )
    experiment = _get(config, "experiment", required=True)
    rates = _rates_from_config(config)
    seed = int(_get(config, "seed", 0))
    background = float(_get(config, "background", 0.0))
    common = {
        "repump_s": float(_get(config, "repump_s", 0.3)),
        "green_uw": float(_get(config, "green_uw", 14.0)),
        "bin_width_s": float(_get(config, "bin_width_s", 0.005)),
        "repetitions": int(_get(config, "repetitions", 200)),
        "background": background,
    }
    out_dir = _out_dir(out_dir)
    if experiment == "power-series":
        powers = _float_list(_get(config, "powers_uw", required=True), "powers_uw")
        series = synth.gen_power_series(
            seed, rates, powers, probe_s=float(_get(config, "probe_s", 0.7)), **common
        )
        for power, times, counts in series:
            io_mod.write_trace_csv(out_dir / f"trace_power_{power:g}uW.csv", times, counts)
        analysis = charge_mod.analyze_power_series(series)
        payload = {
            "experiment": experiment,
            "dark_rate_per_s": analysis.intercept,
            "dark_rate_err_per_s": analysis.intercept_err,
            "ionisation_per_s_uw": analysis.slope,
            "ionisation_err_per_s_uw": analysis.slope_err,
            "rates": [
                {"power_uw": p, "rate_per_s": r, "rate_err_per_s": e}
                for p, r, e in analysis.rate_points
            ],
        }
        ok = analysis.converged
    elif experiment == "delay-sweep":
        delays = _float_list(_get(config, "delays_s", required=True), "delays_s")
        sweep = synth.gen_delay_sweep(
            seed,
            rates,
            delays,
            probe_s=float(_get(config, "probe_s", 0.3)),
            telecom_uw=float(_get(config, "telecom_uw", 2.2)),
            **common,
        )
        for delay, times, counts in sweep:
            io_mod.write_trace_csv(out_dir / f"trace_delay_{delay:g}s.csv", times, counts)
        analysis = charge_mod.analyze_delay_sweep(sweep)
        payload = {
            "experiment": experiment,
            "storage_time_s": analysis.storage_time_s,
            "storage_time_err_s": analysis.storage_time_err,
            "probe_tau_s": analysis.probe_tau_s,
            "peaks": [
                {"delay_s": d, "amplitude": a, "amplitude_err": e}
                for d, a, e in analysis.peak_points
            ],
        }
        ok = analysis.converged
    elif experiment == "trace":
        raw_seq = _get(config, "sequence", required=True)
        seq = charge_mod.sequence_from_dict(raw_seq)
        trace = charge_mod.simulate_pl_trace(rates, seq, seed, background=background)
        io_mod.write_trace_csv(out_dir / "trace.csv", trace.times, trace.counts)
        payload = {
            "experiment": experiment,
            "sequence": charge_mod.sequence_to_dict(seq),
            "total_counts": float(np.sum(trace.counts)),
            "expected_total_counts": float(np.sum(trace.expected)),
            "n_bins": int(trace.times.size),
        }
        ok = True
    else:
        raise ConfigError(f"unknown experiment {experiment!r}")
    io_mod.write_json(out_dir / "analysis.json", payload)
    if not ok:
        print(f"{experiment} analysis did not converge", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


def cmd_gen_synthetic(config: dict, out_dir: Path) -> int:
    """Generate a synthetic dataset and write it to disk."""
    dataset = _get(config, "dataset", required=True)
    seed = int(_get(config, "seed", 0))
    out_dir = _out_dir(out_dir)
    if dataset == "three-field":
        _check_keys(config, {"dataset", "seed", "integration_s"}, "gen-synthetic config")
        data = synth.gen_three_field_dataset(
            seed, integration_s=float(_get(config, "integration_s", 45.0))
        )
        manifest = io_mod.write_ple_dataset(out_dir, data)
        print(manifest)
    elif dataset == "emitter-stack":
        _check_keys(
            config,
            {"dataset", "seed", "kind", "n_emitters", "format"},
            "gen-synthetic config",
        )
        kind = _get(config, "kind", "enriched")
        fmt = _get(config, "format", "csv")
        stack, truth = synth.gen_emitter_stack(
            seed, kind, n_emitters=_get(config, "n_emitters")
        )
        if fmt == "csv":
            io_mod.write_stack_manifest(out_dir, stack)
        elif fmt == "binary":
            io_mod.save_stack(out_dir / "stack.bin", stack)
        else:
            raise ConfigError(f"unknown stack format {fmt!r}; use 'csv' or 'binary'")
        io_mod.write_json(
            out_dir / "truth.json",
            {
                "rows_px": [float(v) for v in truth.rows],
                "cols_px": [float(v) for v in truth.cols],
                "centers_mhz": [float(v) for v in truth.centers_mhz],
            },
        )
    elif dataset == "g2":
        _check_keys(
            config,
            {"dataset", "seed", "contrast", "t1_us", "noise"},
            "gen-synthetic config",
        )
        times, values, errors = synth.gen_g2_trace(
            seed,
            contrast=float(_get(config, "contrast", 0.828)),
            t1_us=float(_get(config, "t1_us", 0.048)),
            noise=float(_get(config, "noise", 0.06)),
        )
        io_mod.write_trace_csv(out_dir / "trace.csv", times, values, errors)
    else:
        raise ConfigError(f"unknown dataset {dataset!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsic",
        description=(
            "Spin-resolved spectra, emitter maps and charge dynamics for "
            "telecom vanadium centres in SiC"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate-spectrum", "fit", "detect", "charge", "gen-synthetic"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = io_mod.load_json(Path(args.config))
        if not isinstance(config, dict):
            raise ConfigError("config root must be a JSON object")
        if args.seed is not None:
            config["seed"] = args.seed
        out_dir = Path(args.out)
        config_dir = Path(args.config).resolve().parent
        if args.command == "simulate-spectrum":
            return cmd_simulate_spectrum(config, out_dir, config_dir)
        if args.command == "fit":
            return cmd_fit(config, out_dir, config_dir)
        if args.command == "detect":
            return cmd_detect(config, out_dir, config_dir)
        if args.command == "charge":
            return cmd_charge(config, out_dir)
        if args.command == "gen-synthetic":
            return cmd_gen_synthetic(config, out_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except (InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, VsicError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
