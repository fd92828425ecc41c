"""Plain-dict configuration layer: angle parsing, defaults and conversions.

Configs are JSON objects.  Angles may be numbers (radians) or strings such as
``"-pi/2"``, ``"3pi/4"``, ``"0.5"`` or ``"90deg"``.
"""
from __future__ import annotations

import json
import math
import re
from pathlib import Path
from typing import Any, Mapping

from .errors import ValidationError
from .forward import (
    DEFAULT_DWELL,
    DEFAULT_SEED,
    EfficiencyProfile,
    ExperimentConfig,
    ScanGrid,
)
from .lg import BeamGeometry, HologramPose, SourceState

_PI_FRACTION = re.compile(r"^([+-]?)\s*(\d*\.?\d*)\s*\*?\s*pi\s*(?:/\s*(\d*\.?\d+))?$")


def parse_angle(value: Any, field: str = "angle") -> float:
    """Radians from a number or a string; a trailing ``deg`` means degrees."""
    if isinstance(value, bool):
        raise ValidationError(field, f"not an angle: {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        text = value.strip().lower().replace("π", "pi")
        degrees = text.endswith("deg")
        if degrees:
            text = text[:-3].strip()
        m = _PI_FRACTION.match(text)
        try:
            if m:
                sign, coef, denom = m.groups()
                out = (float(coef) if coef not in ("", ".") else 1.0) * math.pi
                if denom:
                    out /= float(denom)
                if sign == "-":
                    out = -out
            else:
                out = float(text)
        except (ValueError, ZeroDivisionError):
            raise ValidationError(field, f"cannot parse angle {value!r}") from None
        if degrees:
            out = math.radians(out)
    else:
        raise ValidationError(field, f"not an angle: {value!r}")
    if not math.isfinite(out):
        raise ValidationError(field, f"angle must be finite, got {value!r}")
    return out


def parse_pair(value: Any, field: str) -> tuple[float, float]:
    """``"x,y"`` or a two-element sequence."""
    if isinstance(value, str):
        parts = value.split(",")
    else:
        try:
            parts = list(value)
        except TypeError:
            raise ValidationError(field, f"expected two numbers, got {value!r}") from None
    if len(parts) != 2:
        raise ValidationError(field, f"expected two numbers, got {value!r}")
    try:
        x, y = (float(p) for p in parts)
    except (TypeError, ValueError):
        raise ValidationError(field, f"expected two numbers, got {value!r}") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValidationError(field, "values must be finite")
    return x, y


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool):
        raise ValidationError(field, f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ValidationError(field, f"expected a number, got {value!r}") from None


def _integer(value: Any, field: str) -> int:
    if isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lstrip("+-").isdigit():
        return int(value)
    v = _number(value, field)
    if v != int(v):
        raise ValidationError(field, f"expected an integer, got {value!r}")
    return int(v)


# Flat keys shared by the config file and the command-line flags.
DEFAULTS: dict[str, Any] = {
    "axis": [-50.0, 0.0],
    "r_b": 200.0,
    "theta_b": "-pi/2",
    "delta": "pi",
    "omega": 400.0,
    "alpha_sq": 0.5,
    "eta0": 1.0,
    "r_cut": 1000.0,
    "eff_power": 2.0,
    "peak_rate": 100.0,
    "background_rate": 0.0,
    "x0": -1100.0,
    "y0": -1000.0,
    "step": 150.0,
    "nx": 14,
    "ny": 14,
    "dwell": DEFAULT_DWELL,
    "seed": DEFAULT_SEED,
    "shift_b": [0.0, 0.0],
}


def load_config_file(path: str | Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError("config", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError("config", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config", "top level must be a JSON object")
    return data


def layered(file_values: Mapping[str, Any] | None, overrides: Mapping[str, Any],
            defaults: Mapping[str, Any] = DEFAULTS) -> dict[str, Any]:
    """defaults < config file < overrides (``None`` overrides are skipped)."""
    out = dict(defaults)
    if file_values:
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ValidationError(sorted(unknown)[0], "unknown config key")
        out.update(file_values)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def profile_from(values: Mapping[str, Any]) -> EfficiencyProfile:
    return EfficiencyProfile(eta0=_number(values["eta0"], "eta0"),
                             r_cut=_number(values["r_cut"], "r_cut"),
                             power=_number(values["eff_power"], "eff_power"))


def experiment_from(values: Mapping[str, Any]) -> ExperimentConfig:
    return ExperimentConfig(
        axis_xy=parse_pair(values["axis"], "axis"),
        pose_b=HologramPose(_number(values["r_b"], "r_b"), parse_angle(values["theta_b"], "theta_b")),
        source=SourceState(_number(values["alpha_sq"], "alpha_sq"), parse_angle(values["delta"], "delta")),
        beam=BeamGeometry(_number(values["omega"], "omega")),
        profile=profile_from(values),
        peak_rate=_number(values["peak_rate"], "peak_rate"),
        background_rate=_number(values["background_rate"], "background_rate"),
        seed=seed_from(values["seed"]),
    )


def grid_from(values: Mapping[str, Any]) -> ScanGrid:
    return ScanGrid(_number(values["x0"], "x0"), _number(values["y0"], "y0"),
                    _number(values["step"], "step"), _integer(values["nx"], "nx"),
                    _integer(values["ny"], "ny"))


def seed_from(value: Any) -> int:
    seed = _integer(value, "seed")
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", f"must be an unsigned 64-bit integer, got {value!r}")
    return seed


def jsonable(values: Mapping[str, Any]) -> dict[str, Any]:
    """Copy with tuples turned into lists so the result survives a JSON round trip."""
    return json.loads(json.dumps(dict(values)))
