"""Command-line entry point ``flutterlab``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical divergence,
4 failed property check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_all
from .config import RunConfig, load_config, write_json, write_outputs, write_table
from .errors import BracketError, ConfigurationError, FlutterLabError, NumericalDivergenceError, ValidationError
from .simulation import Plant, find_flutter_speed, frequency_scan, integrate, metrics, sweep
from .wing import build_mode_shapes

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 2, 3, 4

log = logging.getLogger("flutterlab")


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_modes(args, cfg: RunConfig) -> int:
    modes = build_mode_shapes(cfg.wing, cfg.n_grid)
    path = write_table(_out_dir(args, cfg) / "modes.csv", ["z", "f", "f2", "phi", "phi1"], np.column_stack([modes.grid, modes.f, modes.f2, modes.phi, modes.phi1]))
    print(path)
    return EXIT_OK


def cmd_coeffs(args, cfg: RunConfig) -> int:
    sc = cfg.scenario()
    ss = sc.plant.state_space(cfg.speed.V0)
    header = ["id", "G", "H", "I", "J", "A", "B", "C", "D", "A_bar", "B_bar", "C_bar", "D_bar", "s1", "s2", "R1", "R2", "mu", "nu"]
    rows = []
    for i, (fs, c) in enumerate(zip(cfg.feathers, sc.plant.coeffs)):
        rows.append([fs.id, c.G, c.H, c.I, c.J, c.A, c.B, c.C, c.D, c.A_bar, c.B_bar, c.C_bar, c.D_bar, ss.s1[i], ss.s2[i], ss.R1[i], ss.R2[i], ss.mu[i], ss.nu[i]])
    out = _out_dir(args, cfg)
    write_table(out / "coeffs.csv", header, np.array(rows).reshape(-1, len(header)))
    modal = ss.modal.as_dict() | {"V": ss.V}
    write_json(out / "modal.json", modal)
    print(json.dumps(modal, indent=2))
    return EXIT_OK


def cmd_flutter_speed(args, cfg: RunConfig) -> int:
    modes = build_mode_shapes(cfg.wing, cfg.n_grid)
    V_flat = find_flutter_speed(cfg.wing, modes, cfg.V_lo, cfg.V_hi)
    plant = Plant(cfg.wing, modes, ())
    alpha = float(np.linalg.eigvals(plant.uncontrolled_matrix(V_flat)).real.max())
    result = {"V_flat": V_flat, "abscissa": alpha, "V_lo": cfg.V_lo, "V_hi": cfg.V_hi}
    write_json(_out_dir(args, cfg) / "flutter.json", result)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_freq_scan(args, cfg: RunConfig) -> int:
    grid = cfg.V_grid or tuple(np.linspace(cfg.V_lo, cfg.V_hi, 41))
    scan = frequency_scan(cfg.wing, build_mode_shapes(cfg.wing, cfg.n_grid), grid)
    rows = np.array([r[:5] + (float(r[5]),) for r in scan.rows()])
    path = write_table(_out_dir(args, cfg) / "freq_scan.csv", ["V", "re_bending", "im_bending", "re_torsion", "im_torsion", "ambiguous"], rows)
    print(path)
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    sc = cfg.scenario()
    rec = integrate(sc)
    met = metrics(rec, sc.resolved_goals, sc.t_1)
    for p in write_outputs(rec, met, _out_dir(args, cfg), cfg):
        log.info("wrote %s", p)
    print(json.dumps(met.as_dict(), indent=2))
    return EXIT_OK


def _parse_value(axis: str, text: str):
    if axis == "law":
        return text
    if axis in ("topology-k", "N"):
        return int(text)
    return float(text)


def cmd_sweep(args, cfg: RunConfig) -> int:
    axis = args.axis or cfg.sweep_axis
    if axis is None:
        raise ValidationError("sweep.axis", "no sweep axis given in the config or on the command line")
    values = [_parse_value(axis, v) for v in args.values.split(",")] if args.values else list(cfg.sweep_values)
    base = cfg.scenario()
    entries = sweep(base, axis, values, workers=args.workers, keep_records=True)
    out = _out_dir(args, cfg)
    summary = []
    for i, e in enumerate(entries):
        row = {"value": e.value, "error": e.error, "metrics": None if e.metrics is None else e.metrics.as_dict()}
        if e.record is not None:
            sub = replace(cfg, output_dir=str(out / f"{i:03d}"))
            write_outputs(e.record, e.metrics, out / f"{i:03d}", sub)
        summary.append(row)
    write_json(out / "sweep.json", {"axis": axis, "results": summary})
    print(json.dumps({"axis": axis, "results": summary}, indent=2))
    return EXIT_OK


def cmd_check(args, cfg: RunConfig) -> int:
    results = run_all(cfg.scenario(), quick=args.quick)
    for r in results:
        print(r.line())
    out = _out_dir(args, cfg)
    write_json(out / "check.json", [{"name": r.name, "passed": r.passed, "worst": r.worst, "tolerance": r.tolerance} for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


COMMANDS = {
    "modes": cmd_modes,
    "coeffs": cmd_coeffs,
    "flutter-speed": cmd_flutter_speed,
    "freq-scan": cmd_freq_scan,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flutterlab", description="Wing flutter suppression lab with feather actuators.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration (or a run manifest)")
        p.add_argument("--out", help="output directory (defaults to output.dir in the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--axis", choices=["V", "gain", "law", "topology-k", "N"])
            p.add_argument("--values", help="comma-separated sweep values")
            p.add_argument("--workers", type=int, help="parallel scenarios (default: FLUTTERLAB_THREADS or 1)")
        if name == "check":
            p.add_argument("--quick", action="store_true", help="run reduced sample counts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (ValidationError, ConfigurationError, BracketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FlutterLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
