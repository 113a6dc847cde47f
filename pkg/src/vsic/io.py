"""File formats: spectrum and trace CSV, dataset manifests, map stacks.

CSV files use comma separators, '#' comment lines and an optional
header row; numbers are written with repr so a write/read round trip
is lossless.  Map stacks travel either as a JSON manifest plus one
2-D CSV per detuning, or as a compact binary container (magic "PLES").
JSON outputs are written with sorted keys so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .detection import PleMapStack
from .errors import ParseError
from .transitions import Spectrum

PathLike = Union[str, Path]

STACK_MAGIC = b"PLES"
STACK_VERSION = 1


def _float_row(row: list[str], n_cols: int, path, line_no: int) -> list[float]:
    if len(row) != n_cols:
        raise ParseError(
            f"expected {n_cols} columns, found {len(row)}", path=path, line=line_no
        )
    try:
        return [float(cell) for cell in row]
    except ValueError as exc:
        raise ParseError(f"non-numeric value: {exc}", path=path, line=line_no)


def _read_csv_columns(path: PathLike, n_cols: int) -> list[list[float]]:
    rows = []
    with open(path, "r", newline="") as handle:
        reader = csv.reader(handle)
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            stripped = [cell.strip() for cell in row]
            if line_no == 1 or not rows:
                # allow one header row of non-numeric labels
                try:
                    float(stripped[0])
                except ValueError:
                    continue
            rows.append(_float_row(stripped, n_cols, path, line_no))
    if not rows:
        raise ParseError("no data rows", path=path)
    return rows


def write_spectrum_csv(path: PathLike, spectrum: Spectrum) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["frequency_mhz", "counts_per_s", "error_per_s"])
        for f, c, e in zip(spectrum.frequencies, spectrum.counts, spectrum.errors):
            writer.writerow([repr(float(f)), repr(float(c)), repr(float(e))])


def read_spectrum_csv(path: PathLike) -> Spectrum:
    rows = _read_csv_columns(path, 3)
    data = np.array(rows, dtype=float)
    try:
        return Spectrum(frequencies=data[:, 0], counts=data[:, 1], errors=data[:, 2])
    except ValueError as exc:
        raise ParseError(str(exc), path=path)


def write_trace_csv(
    path: PathLike,
    times: np.ndarray,
    values: np.ndarray,
    errors=None,
    header: tuple[str, str] = ("t_s", "counts"),
) -> None:
    """Two- or three-column trace: time, value and optional error."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if errors is None:
            writer.writerow(list(header))
            for t, v in zip(times, values):
                writer.writerow([repr(float(t)), repr(float(v))])
        else:
            writer.writerow([*header, "error"])
            for t, v, e in zip(times, values, errors):
                writer.writerow([repr(float(t)), repr(float(v)), repr(float(e))])


def read_trace_csv(path: PathLike) -> tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Read a trace CSV; returns (times, values, errors or None)."""
    with open(path, "r", newline="") as handle:
        first_data = None
        for row in csv.reader(handle):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                float(row[0].strip())
            except ValueError:
                continue
            first_data = row
            break
    if first_data is None:
        raise ParseError("no data rows", path=path)
    n_cols = len(first_data)
    if n_cols not in (2, 3):
        raise ParseError(f"expected 2 or 3 columns, found {n_cols}", path=path)
    rows = _read_csv_columns(path, n_cols)
    data = np.array(rows, dtype=float)
    errors = data[:, 2] if n_cols == 3 else None
    return data[:, 0], data[:, 1], errors


def write_ple_dataset(
    directory: PathLike, dataset: dict[tuple[float, str], Spectrum]
) -> Path:
    """Write per-spectrum CSVs plus a JSON manifest; returns the manifest path.

    The manifest lists each field once with its two polarisation files:
    {"fields": [{"b_gauss": 0.0, "plus": "...", "minus": "..."}]}.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fields = sorted({key[0] for key in dataset})
    entries = []
    for b in fields:
        entry = {"b_gauss": float(b)}
        for pol, name in (("+", "plus"), ("-", "minus")):
            if (b, pol) not in dataset:
                raise ParseError(f"dataset missing polarization {pol!r} at {b} G")
            filename = f"spectrum_{b:g}G_{name}.csv"
            write_spectrum_csv(directory / filename, dataset[(b, pol)])
            entry[name] = filename
        entries.append(entry)
    manifest = directory / "dataset.json"
    write_json(manifest, {"fields": entries})
    return manifest


def read_ple_dataset(manifest_path: PathLike) -> dict[tuple[float, str], Spectrum]:
    manifest_path = Path(manifest_path)
    raw = load_json(manifest_path)
    if not isinstance(raw, dict) or "fields" not in raw:
        raise ParseError("manifest must be an object with a 'fields' list", path=manifest_path)
    dataset = {}
    for entry in raw["fields"]:
        unknown = set(entry) - {"b_gauss", "plus", "minus"}
        if unknown:
            raise ParseError(
                f"unknown manifest key(s): {sorted(unknown)}", path=manifest_path
            )
        try:
            b = float(entry["b_gauss"])
            plus = entry["plus"]
            minus = entry["minus"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad manifest entry: {exc}", path=manifest_path)
        dataset[(b, "+")] = read_spectrum_csv(manifest_path.parent / plus)
        dataset[(b, "-")] = read_spectrum_csv(manifest_path.parent / minus)
    if not dataset:
        raise ParseError("manifest lists no fields", path=manifest_path)
    return dataset


_STACK_MANIFEST_KEYS = {"pixel_size_um", "confocal_width_px", "detunings_mhz", "files"}


def write_map_csv(path: PathLike, image: np.ndarray) -> None:
    """One 2-D intensity map as plain CSV rows of floats."""
    image = np.asarray(image, dtype=float)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        for row in image:
            writer.writerow([repr(float(v)) for v in row])


def read_map_csv(path: PathLike) -> np.ndarray:
    with open(path, "r", newline="") as handle:
        first = None
        for row in csv.reader(handle):
            if row and not row[0].lstrip().startswith("#"):
                first = row
                break
    if first is None:
        raise ParseError("no data rows", path=path)
    rows = _read_csv_columns(path, len(first))
    return np.array(rows, dtype=float)


def write_stack_manifest(directory: PathLike, stack: PleMapStack) -> Path:
    """Map stack as a JSON manifest plus one CSV map per detuning.

    The manifest holds pixel_size_um, confocal_width_px, detunings_mhz
    and the list of map files, in detuning order; returns its path.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, detuning in enumerate(stack.detunings):
        name = f"map_{i:03d}.csv"
        write_map_csv(directory / name, stack.maps[i])
        files.append(name)
    manifest = directory / "stack.json"
    write_json(
        manifest,
        {
            "pixel_size_um": stack.pixel_size_um,
            "confocal_width_px": stack.confocal_width_px,
            "detunings_mhz": [float(d) for d in stack.detunings],
            "files": files,
        },
    )
    return manifest


def read_stack_manifest(manifest_path: PathLike) -> PleMapStack:
    manifest_path = Path(manifest_path)
    raw = load_json(manifest_path)
    if not isinstance(raw, dict):
        raise ParseError("stack manifest must be an object", path=manifest_path)
    unknown = set(raw) - _STACK_MANIFEST_KEYS
    if unknown:
        raise ParseError(
            f"unknown manifest key: {sorted(unknown)[0]!r}", path=manifest_path
        )
    missing = _STACK_MANIFEST_KEYS - set(raw)
    if missing:
        raise ParseError(
            f"manifest is missing {sorted(missing)[0]!r}", path=manifest_path
        )
    files = raw["files"]
    detunings = raw["detunings_mhz"]
    if len(files) != len(detunings):
        raise ParseError(
            "manifest lists different numbers of files and detunings",
            path=manifest_path,
        )
    maps = []
    shape = None
    for name in files:
        image = read_map_csv(manifest_path.parent / name)
        if shape is None:
            shape = image.shape
        elif image.shape != shape:
            raise ParseError(
                f"map {name!r} has shape {image.shape}, expected {shape}",
                path=manifest_path,
            )
        maps.append(image)
    try:
        return PleMapStack(
            maps=np.array(maps),
            detunings=np.asarray(detunings, dtype=float),
            pixel_size_um=float(raw["pixel_size_um"]),
            confocal_width_px=float(raw["confocal_width_px"]),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), path=manifest_path)


def load_stack_any(path: PathLike) -> PleMapStack:
    """Load a map stack from either supported container.

    JSON files (or directories holding stack.json) are read as CSV
    manifests; anything else as the binary format.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "stack.json"
    if path.suffix == ".json":
        return read_stack_manifest(path)
    return load_stack(path)


def write_histogram_csv(path: PathLike, edges: np.ndarray, counts: np.ndarray) -> None:
    """Histogram as bin_left_mhz, bin_right_mhz, count rows."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin_left_mhz", "bin_right_mhz", "count"])
        for left, right, count in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(left)), repr(float(right)), str(int(count))])


def save_stack(path: PathLike, stack: PleMapStack) -> None:
    """Binary map-stack container, little-endian.

    Layout: magic "PLES", u32 version, u32 n_maps, u32 n_rows, u32
    n_cols, f64 pixel_size_um, f64 confocal_width_px, f64 detunings
    [n_maps], f64 maps [n_maps * n_rows * n_cols, row-major].
    """
    n_maps, n_rows, n_cols = stack.maps.shape
    with open(path, "wb") as handle:
        handle.write(STACK_MAGIC)
        handle.write(
            struct.pack("<IIII", STACK_VERSION, n_maps, n_rows, n_cols)
        )
        handle.write(struct.pack("<dd", stack.pixel_size_um, stack.confocal_width_px))
        handle.write(np.ascontiguousarray(stack.detunings, dtype="<f8").tobytes())
        handle.write(np.ascontiguousarray(stack.maps, dtype="<f8").tobytes())


def load_stack(path: PathLike) -> PleMapStack:
    with open(path, "rb") as handle:
        blob = handle.read()
    header = struct.calcsize("<IIII") + struct.calcsize("<dd")
    if len(blob) < 4 + header:
        raise ParseError("file too short for a stack header", path=path)
    if blob[:4] != STACK_MAGIC:
        raise ParseError("bad magic; not a map-stack file", path=path)
    version, n_maps, n_rows, n_cols = struct.unpack_from("<IIII", blob, 4)
    if version != STACK_VERSION:
        raise ParseError(f"unsupported stack version {version}", path=path)
    pixel_size, confocal_width = struct.unpack_from("<dd", blob, 20)
    offset = 4 + header
    n_values = n_maps + n_maps * n_rows * n_cols
    expected = offset + 8 * n_values
    if len(blob) != expected:
        raise ParseError(
            f"truncated stack: expected {expected} bytes, found {len(blob)}", path=path
        )
    detunings = np.frombuffer(blob, dtype="<f8", count=n_maps, offset=offset)
    maps = np.frombuffer(
        blob, dtype="<f8", count=n_maps * n_rows * n_cols, offset=offset + 8 * n_maps
    ).reshape(n_maps, n_rows, n_cols)
    try:
        return PleMapStack(
            maps=maps.copy(),
            detunings=detunings.copy(),
            pixel_size_um=pixel_size,
            confocal_width_px=confocal_width,
        )
    except ValueError as exc:
        raise ParseError(str(exc), path=path)


def write_json(path: PathLike, obj) -> None:
    """Deterministic JSON: sorted keys, repr floats, trailing newline."""
    with open(path, "w") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")


def load_json(path: PathLike):
    try:
        with open(path, "r") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", path=path, line=exc.lineno)
