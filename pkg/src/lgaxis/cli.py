"""``lgaxis`` command line: simulate scans, estimate geometry, evaluate CHSH.

Exit codes: 0 success, 2 invalid input, 3 computation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from . import chsh as chsh_mod
from . import io as lgio
from .config import (
    DEFAULTS,
    experiment_from,
    grid_from,
    jsonable,
    layered,
    load_config_file,
    parse_angle,
    parse_pair,
    profile_from,
    seed_from,
)
from .errors import ComputationError, DegenerateInputError, ValidationError
from .estimator import DEFAULT_SMOOTHING, estimate_axis
from .forward import DEFAULT_SEED, EfficiencyProfile, analytic_map, shift_hologram_b, simulate_scan
from .lg import BeamGeometry, SourceState

EXIT_OK, EXIT_VALIDATION, EXIT_COMPUTATION = 0, 2, 3

CHSH_DEFAULTS: dict[str, Any] = {
    "r": 200.0,
    "omega": 400.0,
    "delta": 0.0,
    "alpha_sq": 0.5,
    "theta_a": "-pi/4",
    "theta_a_prime": "pi/4",
    "theta_b": "-pi/2",
    "theta_b_prime": 0.0,
    "peak_rate": 100.0,
    "accumulation": 5.0,
    "seed": DEFAULT_SEED,
}


def _expected_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}.expected{out.suffix or '.csv'}")


def _check_distinct(**paths: Path | None) -> None:
    seen: dict[Path, str] = {}
    for name, p in paths.items():
        if p is None:
            continue
        key = p.resolve()
        if key in seen:
            raise ValidationError(name, f"path {p} is also used for {seen[key]}")
        seen[key] = name


def _flags(args: argparse.Namespace, keys) -> dict[str, Any]:
    return {k: getattr(args, k, None) for k in keys}


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    file_values = load_config_file(args.config) if args.config else None
    values = layered(file_values, _flags(args, DEFAULTS))
    config = experiment_from(values)
    grid = grid_from(values)
    dwell = float(values["dwell"])
    shift = parse_pair(values["shift_b"], "shift_b")
    if shift != (0.0, 0.0):
        config = shift_hologram_b(config, shift)

    out = Path(args.out)
    fmt = args.format or ("json" if out.suffix.lower() == ".json" else "csv")
    expected_out = Path(args.analytic_out) if args.analytic_out else _expected_path(out)
    _check_distinct(out=out, analytic_out=expected_out, config=Path(args.config) if args.config else None)

    effective = jsonable(values)
    effective["seed"] = config.seed
    scan = simulate_scan(config, grid, dwell)
    scan = type(scan)(scan.grid, scan.dwell, scan.counts, {"seed": config.seed, "config": effective})
    lgio.write_scan_map(scan, out, fmt)
    expected = analytic_map(config, grid) * dwell
    lgio.write_expected_map(expected, grid, dwell, expected_out, {"config": effective}, fmt)

    counts = scan.counts
    iy_max, ix_max = divmod(int(counts.argmax()), grid.nx)
    iy_min, ix_min = divmod(int(counts.argmin()), grid.nx)
    print(f"wrote {out} ({grid.nx}x{grid.ny}, {fmt}) and {expected_out}")
    print(f"max cell: ({grid.point(ix_max, iy_max)[0]:g}, {grid.point(ix_max, iy_max)[1]:g}) um "
          f"counts={int(counts[iy_max, ix_max])}")
    print(f"min cell: ({grid.point(ix_min, iy_min)[0]:g}, {grid.point(ix_min, iy_min)[1]:g}) um "
          f"counts={int(counts[iy_min, ix_min])}")
    print(f"total counts: {int(counts.sum())}")
    return EXIT_OK


# --------------------------------------------------------------------------
# estimate
# --------------------------------------------------------------------------


def _read_profile_table(path: str) -> EfficiencyProfile:
    import numpy as np

    try:
        data = np.loadtxt(path, delimiter=",", comments="#", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError("profile_table", f"cannot read {path}: {exc}") from None
    if data.shape[1] != 2:
        raise ValidationError("profile_table", "expected two columns r_um,eta")
    return EfficiencyProfile(table_r=tuple(data[:, 0]), table_eta=tuple(data[:, 1]))


def cmd_estimate(args: argparse.Namespace) -> int:
    scan = lgio.read_scan_map(args.map)
    if args.profile_table:
        profile = _read_profile_table(args.profile_table)
    elif args.flat_efficiency:
        profile = EfficiencyProfile.flat()
    else:
        file_values = load_config_file(args.config) if args.config else None
        profile = profile_from(layered(file_values, _flags(args, ("eta0", "r_cut", "eff_power"))))
    aux = shift = None
    if args.aux_map:
        if args.aux_shift is None:
            raise ValidationError("aux_shift", "required together with --aux-map")
        aux = lgio.read_scan_map(args.aux_map)
        shift = parse_pair(args.aux_shift, "aux_shift")
    if args.smoothing < 0:
        raise ValidationError("smoothing", "must be >= 0")
    fit = estimate_axis(scan, profile, aux, shift, smoothing_radius=args.smoothing)
    text = lgio.fit_to_json(fit)
    if args.out:
        _check_distinct(map=Path(args.map), out=Path(args.out),
                        aux_map=Path(args.aux_map) if args.aux_map else None)
        lgio.write_fit_report(fit, args.out)
        best = fit.best
        print(f"wrote {args.out}: r_B={best.r_b:.1f} um omega={best.omega:.1f} um "
              f"axis=({best.axis_xy[0]:.1f}, {best.axis_xy[1]:.1f}) um")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --------------------------------------------------------------------------
# chsh
# --------------------------------------------------------------------------


def _settings_from(values) -> chsh_mod.ChshSettings:
    return chsh_mod.ChshSettings(*(parse_angle(values[k], k)
                                   for k in ("theta_a", "theta_a_prime", "theta_b", "theta_b_prime")))


def _chsh_report(settings, correlations, source: str) -> dict[str, Any]:
    s = chsh_mod.s_value(correlations)
    labels = ("E(a,b)", "E(a,b')", "E(a',b)", "E(a',b')")
    return {
        "source": source,
        "settings": {"theta_a": settings.theta_a, "theta_a_prime": settings.theta_a_prime,
                     "theta_b": settings.theta_b, "theta_b_prime": settings.theta_b_prime},
        "pairs": [{"label": lab, "theta_a": ta, "theta_b": tb, "E": e}
                  for lab, (ta, tb), e in zip(labels, settings.pairs(), correlations.as_tuple())],
        "S": s,
        "abs_S": abs(s),
    }


def cmd_chsh(args: argparse.Namespace) -> int:
    file_values = load_config_file(args.config) if args.config else None
    values = layered(file_values, _flags(args, CHSH_DEFAULTS), CHSH_DEFAULTS)
    if args.bundled or args.counts:
        quads = lgio.load_bell_counts() if args.bundled else lgio.read_quads(args.counts)
        settings = chsh_mod.infer_settings(quads)
        report = _chsh_report(settings, chsh_mod.correlations_from_quads(quads, settings),
                              "bundled" if args.bundled else str(args.counts))
    else:
        settings = _settings_from(values)
        beam = BeamGeometry(float(values["omega"]))
        source = SourceState(float(values["alpha_sq"]), parse_angle(values["delta"], "delta"))
        r = float(values["r"])
        if args.simulate:
            quads = chsh_mod.simulate_chsh_counts(settings, r, beam, source, float(values["peak_rate"]),
                                                  float(values["accumulation"]), seed_from(values["seed"]))
            if args.out:
                lgio.write_quads(quads, args.out)
            report = _chsh_report(settings, chsh_mod.correlations_from_quads(quads, settings), "simulated")
        else:
            if not r > 0:
                raise ValidationError("r", "must be > 0")
            report = _chsh_report(settings, chsh_mod.predicted_correlations(settings, r, beam, source),
                                  "model")
            report["visibility"] = chsh_mod.visibility(r, beam)
            report["optimal_radius"] = chsh_mod.optimal_radius(beam)
    if args.format == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for pair in report["pairs"]:
            print(f"{pair['label']:<9} theta_A={pair['theta_a']:+.6f} theta_B={pair['theta_b']:+.6f} "
                  f"E={pair['E']:+.5f}")
        print(f"S = {report['S']:+.5f}")
        print(f"|S| = {report['abs_S']:.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _angle_arg(text: str) -> float:
    try:
        return parse_angle(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lgaxis", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a noisy scan map and its expected counts")
    sim.add_argument("--config", help="JSON config file (flags override its values)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", default="scan.csv", help="noisy map path (default scan.csv)")
    sim.add_argument("--analytic-out", help="expected-count map path (default <out>.expected.<ext>)")
    sim.add_argument("--format", choices=("csv", "json"), help="default: from the --out suffix")
    sim.add_argument("--axis", help="optical axis x,y in um")
    sim.add_argument("--r-b", dest="r_b", type=float, help="hologram B dislocation radius, um")
    sim.add_argument("--theta-b", dest="theta_b", type=_angle_arg, help="hologram B azimuth")
    sim.add_argument("--delta", type=_angle_arg)
    sim.add_argument("--omega", type=float, help="beam radius, um")
    sim.add_argument("--alpha-sq", dest="alpha_sq", type=float)
    sim.add_argument("--eta0", type=float)
    sim.add_argument("--r-cut", dest="r_cut", type=float)
    sim.add_argument("--eff-power", dest="eff_power", type=float)
    sim.add_argument("--peak-rate", dest="peak_rate", type=float, help="cps at the maximum")
    sim.add_argument("--background-rate", dest="background_rate", type=float)
    sim.add_argument("--x0", type=float)
    sim.add_argument("--y0", type=float)
    sim.add_argument("--step", type=float)
    sim.add_argument("--nx", type=int)
    sim.add_argument("--ny", type=int)
    sim.add_argument("--dwell", type=float, help="seconds per grid point")
    sim.add_argument("--shift-b", dest="shift_b", help="displace hologram B by dx,dy um")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="fit axis and hologram-B geometry from a scan map")
    est.add_argument("map")
    est.add_argument("--aux-map", dest="aux_map", help="scan taken after moving hologram B")
    est.add_argument("--aux-shift", dest="aux_shift", help="that move, dx,dy um")
    est.add_argument("--config", help="JSON file supplying eta0/r_cut/eff_power")
    est.add_argument("--eta0", type=float)
    est.add_argument("--r-cut", dest="r_cut", type=float)
    est.add_argument("--eff-power", dest="eff_power", type=float)
    est.add_argument("--flat-efficiency", action="store_true", help="position-independent efficiency")
    est.add_argument("--profile-table", dest="profile_table", help="CSV r_um,eta measured profile")
    est.add_argument("--smoothing", type=int, default=DEFAULT_SMOOTHING, help="box radius in cells")
    est.add_argument("--out", help="report path (default: print to stdout)")
    est.add_argument("--format", choices=("json",), default="json")
    est.add_argument("--seed", type=int, help="accepted for symmetry; the estimator is deterministic")
    est.set_defaults(func=cmd_estimate)

    ch = sub.add_parser("chsh", help="CHSH S-value from counts or from the model")
    src = ch.add_mutually_exclusive_group()
    src.add_argument("--counts", help="count-quad CSV")
    src.add_argument("--bundled", action="store_true", help="use the bundled four-setting counts")
    src.add_argument("--simulate", action="store_true", help="draw Poisson counts from the model")
    ch.add_argument("--config", help="JSON file with model parameters")
    ch.add_argument("--r", type=float, help="dislocation radius on both sides, um")
    ch.add_argument("--omega", type=float)
    ch.add_argument("--delta", type=_angle_arg)
    ch.add_argument("--alpha-sq", dest="alpha_sq", type=float)
    ch.add_argument("--theta-a", dest="theta_a", type=_angle_arg)
    ch.add_argument("--theta-a-prime", dest="theta_a_prime", type=_angle_arg)
    ch.add_argument("--theta-b", dest="theta_b", type=_angle_arg)
    ch.add_argument("--theta-b-prime", dest="theta_b_prime", type=_angle_arg)
    ch.add_argument("--peak-rate", dest="peak_rate", type=float)
    ch.add_argument("--accumulation", type=float, help="seconds per setting pair")
    ch.add_argument("--seed", type=int)
    ch.add_argument("--out", help="write simulated quads here")
    ch.add_argument("--format", choices=("text", "json"), default="text")
    ch.set_defaults(func=cmd_chsh)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"lgaxis: invalid {exc.field}: {exc.message}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ComputationError, DegenerateInputError) as exc:
        print(f"lgaxis: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_COMPUTATION
    except OSError as exc:
        print(f"lgaxis: invalid path: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
