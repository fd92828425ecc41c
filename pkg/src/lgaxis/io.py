"""Readers and writers for scan maps, count quads and fit reports.

Floats are written with ``repr`` so every file reads back to identical values.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .chsh import CountQuad
from .errors import ValidationError
from .estimator import ExtremaReport, GeometryCandidate, GeometryFit
from .forward import EfficiencyProfile, ScanGrid, ScanMap

SCAN_FORMAT = "lgaxis-scan-map"
EXPECTED_FORMAT = "lgaxis-expected-map"
FIT_FORMAT = "lgaxis-geometry-fit"
QUAD_COLUMNS = ("theta_A", "theta_B", "c", "c_ab_perp", "c_a_perp_b", "c_perp_perp", "accumulation_s")
SINGLES_COLUMNS = ("singles_A", "singles_B")


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    if fmt not in ("csv", "json"):
        raise ValidationError("format", f"expected 'csv' or 'json', got {fmt!r}")
    return fmt


def _write_text(path: Path, text: str) -> None:
    # Fixed newline so output bytes do not depend on the platform.
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# scan maps
# --------------------------------------------------------------------------


def _header(grid: ScanGrid, dwell: float, metadata: Mapping[str, Any], kind: str) -> list[str]:
    lines = [f"# format={kind}",
             f"# x0_um={grid.x0!r}", f"# y0_um={grid.y0!r}", f"# step_um={grid.step!r}",
             f"# nx={grid.nx}", f"# ny={grid.ny}", f"# dwell_s={float(dwell)!r}"]
    meta = dict(metadata)
    if "seed" in meta:
        lines.append(f"# seed={int(meta.pop('seed'))}")
    for key in sorted(meta):
        lines.append(f"# meta.{key}={json.dumps(meta[key], sort_keys=True)}")
    return lines


def _csv_text(grid: ScanGrid, dwell: float, metadata, column: str, values: np.ndarray, kind: str,
              fmt_value) -> str:
    lines = _header(grid, dwell, metadata, kind)
    lines.append(f"x_um,y_um,{column}")
    xs, ys = grid.xs(), grid.ys()
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            lines.append(f"{float(xs[ix])!r},{float(ys[iy])!r},{fmt_value(values[iy, ix])}")
    return "\n".join(lines) + "\n"


def _parse_csv(text: str, column: str, source: str):
    header: dict[str, str] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    try:
        grid = ScanGrid(float(header.get("x0_um", "0")), float(header.get("y0_um", "0")),
                        float(header["step_um"]), int(header["nx"]), int(header["ny"]))
        dwell = float(header["dwell_s"])
    except KeyError as exc:
        raise ValidationError(exc.args[0], f"missing header line in {source}") from None
    except ValueError as exc:
        raise ValidationError("header", f"bad header value in {source}: {exc}") from None
    metadata: dict[str, Any] = {}
    if "seed" in header:
        metadata["seed"] = int(header["seed"])
    for key, value in header.items():
        if key.startswith("meta."):
            try:
                metadata[key[5:]] = json.loads(value)
            except json.JSONDecodeError:
                raise ValidationError(key, f"metadata is not valid JSON in {source}") from None

    rows = list(csv.reader(body))
    if not rows or [c.strip() for c in rows[0]] != ["x_um", "y_um", column]:
        raise ValidationError("columns", f"expected header 'x_um,y_um,{column}' in {source}")
    values = np.full(grid.shape, np.nan)
    seen = np.zeros(grid.shape, dtype=bool)
    for row in rows[1:]:
        if len(row) != 3:
            raise ValidationError("row", f"expected 3 fields, got {len(row)} in {source}")
        try:
            x, y, v = (float(s) for s in row)
        except ValueError:
            raise ValidationError("row", f"non-numeric value in {row!r} in {source}") from None
        ix = int(round((x - grid.x0) / grid.step))
        iy = int(round((y - grid.y0) / grid.step))
        if not (0 <= ix < grid.nx and 0 <= iy < grid.ny) or seen[iy, ix]:
            raise ValidationError("row", f"point ({x}, {y}) is off-grid or repeated in {source}")
        seen[iy, ix] = True
        values[iy, ix] = v
    if not seen.all():
        raise ValidationError("rows", f"{int((~seen).sum())} grid points missing in {source}")
    return grid, dwell, metadata, values


def _json_doc(grid: ScanGrid, dwell: float, metadata, column: str, values, kind: str) -> dict:
    meta = dict(metadata)
    doc = {"format": kind, "x0_um": grid.x0, "y0_um": grid.y0, "step_um": grid.step,
           "nx": grid.nx, "ny": grid.ny, "dwell_s": float(dwell)}
    if "seed" in meta:
        doc["seed"] = int(meta.pop("seed"))
    doc["metadata"] = meta
    doc[column] = np.asarray(values).tolist()
    return doc


def _parse_json(text: str, column: str, source: str):
    try:
        doc = json.loads(text)
        grid = ScanGrid(doc.get("x0_um", 0.0), doc.get("y0_um", 0.0), doc["step_um"], doc["nx"], doc["ny"])
        dwell = float(doc["dwell_s"])
        values = np.asarray(doc[column], dtype=np.float64)
    except json.JSONDecodeError as exc:
        raise ValidationError("json", f"invalid JSON in {source}: {exc}") from None
    except KeyError as exc:
        raise ValidationError(exc.args[0], f"missing field in {source}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError("json", f"bad value in {source}: {exc}") from None
    if values.shape != grid.shape:
        raise ValidationError(column, f"expected shape {grid.shape}, got {values.shape} in {source}")
    metadata = dict(doc.get("metadata", {}))
    if "seed" in doc:
        metadata["seed"] = int(doc["seed"])
    return grid, dwell, metadata, values


def scan_map_to_text(scan: ScanMap, fmt: str = "csv") -> str:
    if fmt == "json":
        doc = _json_doc(scan.grid, scan.dwell, scan.metadata, "counts", scan.counts, SCAN_FORMAT)
        return json.dumps(doc, sort_keys=True) + "\n"
    return _csv_text(scan.grid, scan.dwell, scan.metadata, "counts", scan.counts, SCAN_FORMAT,
                     lambda v: str(int(v)))


def scan_map_from_text(text: str, fmt: str = "csv", source: str = "<text>") -> ScanMap:
    parse = _parse_json if fmt == "json" else _parse_csv
    grid, dwell, metadata, values = parse(text, "counts", source)
    return ScanMap(grid, dwell, values, metadata)


def write_scan_map(scan: ScanMap, path, fmt: str | None = None) -> None:
    path = Path(path)
    _write_text(path, scan_map_to_text(scan, _format_of(path, fmt)))


def read_scan_map(path, fmt: str | None = None) -> ScanMap:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError("path", f"no such file: {path}") from None
    return scan_map_from_text(text, _format_of(path, fmt), str(path))


def write_expected_map(values: np.ndarray, grid: ScanGrid, dwell: float, path,
                       metadata: Mapping[str, Any] | None = None, fmt: str | None = None) -> None:
    """Noiseless expected counts (floats) in the scan-map layout."""
    path = Path(path)
    values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    metadata = metadata or {}
    if _format_of(path, fmt) == "json":
        doc = _json_doc(grid, dwell, metadata, "expected_counts", values, EXPECTED_FORMAT)
        _write_text(path, json.dumps(doc, sort_keys=True) + "\n")
    else:
        _write_text(path, _csv_text(grid, dwell, metadata, "expected_counts", values, EXPECTED_FORMAT,
                                    lambda v: repr(float(v))))


def read_expected_map(path, fmt: str | None = None):
    """Returns ``(values, grid, dwell, metadata)``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    parse = _parse_json if _format_of(path, fmt) == "json" else _parse_csv
    grid, dwell, metadata, values = parse(text, "expected_counts", str(path))
    return values, grid, dwell, metadata


# --------------------------------------------------------------------------
# count quads
# --------------------------------------------------------------------------


def quads_to_text(quads: Iterable[CountQuad]) -> str:
    quads = list(quads)
    singles = any(q.singles_a is not None or q.singles_b is not None for q in quads)
    cols = QUAD_COLUMNS + (SINGLES_COLUMNS if singles else ())
    lines = [",".join(cols)]
    for q in quads:
        row = [repr(q.theta_a), repr(q.theta_b), str(q.c), str(q.c_ab_perp), str(q.c_a_perp_b),
               str(q.c_perp_perp), repr(float(q.accumulation))]
        if singles:
            row += ["" if s is None else repr(float(s)) for s in (q.singles_a, q.singles_b)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def quads_from_text(text: str, source: str = "<text>") -> list[CountQuad]:
    from .config import parse_angle

    reader = csv.DictReader(line for line in io.StringIO(text) if line.strip() and not line.startswith("#"))
    missing = [c for c in QUAD_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise ValidationError(missing[0], f"missing column in {source}")
    quads = []
    for row in reader:
        def count(name):
            try:
                return int(row[name])
            except ValueError:
                raise ValidationError(name, f"not an integer: {row[name]!r} in {source}") from None

        def optional(name):
            v = (row.get(name) or "").strip()
            return float(v) if v else None

        quads.append(CountQuad(parse_angle(row["theta_A"], "theta_A"), parse_angle(row["theta_B"], "theta_B"),
                               count("c"), count("c_ab_perp"), count("c_a_perp_b"), count("c_perp_perp"),
                               accumulation=float(row["accumulation_s"]),
                               singles_a=optional("singles_A"), singles_b=optional("singles_B")))
    if not quads:
        raise ValidationError("rows", f"no count rows in {source}")
    return quads


def write_quads(quads: Iterable[CountQuad], path) -> None:
    _write_text(Path(path), quads_to_text(quads))


def read_quads(path) -> list[CountQuad]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError("counts", f"no such file: {path}") from None
    return quads_from_text(text, str(path))


def load_bell_counts() -> list[CountQuad]:
    """Measured four-setting coincidence counts bundled with the package."""
    text = resources.files("lgaxis").joinpath("data/bell_counts.csv").read_text(encoding="utf-8")
    return quads_from_text(text, "bell_counts.csv")


def reference_scenario_config() -> dict[str, Any]:
    text = resources.files("lgaxis").joinpath("data/reference_scenario.json").read_text(encoding="utf-8")
    return json.loads(text)


# --------------------------------------------------------------------------
# fit reports
# --------------------------------------------------------------------------


def _finite_or_none(v):
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def fit_to_dict(fit: GeometryFit) -> dict[str, Any]:
    """JSON-ready report; ``r_cut = inf`` (flat profile) is stored as ``null``."""
    prof = asdict(fit.profile)
    prof["r_cut"] = _finite_or_none(prof["r_cut"])
    best = fit.best
    return {
        "format": FIT_FORMAT,
        "extrema": asdict(fit.extrema),
        "located": asdict(fit.located) if fit.located is not None else None,
        "candidates": [asdict(c) for c in fit.candidates],
        "theta_sum": fit.theta_sum,
        "profile": prof,
        "chosen": fit.chosen,
        "theta_b": fit.theta_b,
        "delta": fit.delta,
        "aux_asymmetry": fit.aux_asymmetry,
        "predicted_asymmetry": fit.predicted_asymmetry,
        "flags": list(fit.flags),
        "residuals": [c.residual for c in fit.candidates],
        "best": {"r_b": best.r_b, "omega": best.omega, "axis_xy": best.axis_xy},
    }


def _extrema(d: Mapping[str, Any]) -> ExtremaReport:
    d = dict(d)
    for key in ("max_xy", "min_xy", "max_cell", "min_cell", "flags"):
        d[key] = tuple(d[key])
    return ExtremaReport(**d)


def fit_from_dict(doc: Mapping[str, Any]) -> GeometryFit:
    prof = dict(doc["profile"])
    if prof["r_cut"] is None:
        prof["r_cut"] = math.inf
    for key in ("table_r", "table_eta"):
        if prof.get(key) is not None:
            prof[key] = tuple(prof[key])
    cands = tuple(GeometryCandidate(**{**c, "axis_xy": tuple(c["axis_xy"])}) for c in doc["candidates"])

    def pair(v):
        return None if v is None else tuple(v)

    return GeometryFit(
        extrema=_extrema(doc["extrema"]), candidates=cands, theta_sum=doc["theta_sum"],
        profile=EfficiencyProfile(**prof), chosen=doc["chosen"], theta_b=doc["theta_b"],
        delta=doc["delta"], aux_asymmetry=pair(doc["aux_asymmetry"]),
        predicted_asymmetry=pair(doc["predicted_asymmetry"]),
        located=_extrema(doc["located"]) if doc.get("located") else None)


def fit_to_json(fit: GeometryFit) -> str:
    return json.dumps(fit_to_dict(fit), indent=2, sort_keys=True) + "\n"


def write_fit_report(fit: GeometryFit, path) -> None:
    _write_text(Path(path), fit_to_json(fit))


def read_fit_report(path) -> GeometryFit:
    return fit_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
