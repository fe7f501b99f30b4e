"""Regenerate the shipped reference configuration and its frozen values.

Run from the repository root::

    python3 scripts/provision_reference.py

The wing and feather layout below are design inputs.  Everything else
(flutter speed, test speed, per-law gains, thresholds derived from the
initial energy) is computed here and written to ``src/flutterlab/data``.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from flutterlab.config import from_dict, write_json
from flutterlab.control import ControlConfig, closed_loop_matrix, spectral_abscissa, tune_gains
from flutterlab.dynamics import total_energy
from flutterlab.simulation import Plant, find_flutter_speed, frequency_scan, integrate, metrics
from flutterlab.wing import build_mode_shapes, cantilever_root

DATA = Path(__file__).resolve().parents[1] / "src" / "flutterlab" / "data"

WING = {"l": 6.0, "b": 1.8, "x0": 0.4, "sigma_T": 0.1, "m": 100.0, "J_m": 24.0, "EJ": 2.7e7, "GJ_K": 2.8e6, "Cy_alpha": 2 * np.pi, "rho": 1.225}
# chordwise extents as chord fractions: trailing-edge and mid-chord feathers
CHORD = {"T": (0.75, 1.0), "M": (0.1, 0.6)}
STRIPS = "TTMM"  # outer half-span split into four strips, root to tip
BETA_LIMIT = 0.3
X0 = [0.01, 0.0, 0.005, 0.0]
SPEED_FACTOR = 1.1
DT = 1e-3


def feathers() -> list[dict]:
    l, b = WING["l"], WING["b"]
    out = []
    for s, kind in enumerate(STRIPS):
        z_lo, z_hi = l / 2 + s * l / 8, l / 2 + (s + 1) * l / 8
        for side in ("lower", "upper"):
            out.append(
                {
                    "id": len(out) + 1,
                    "side": side,
                    "z_lo": z_lo,
                    "z_hi": z_hi,
                    "x_star": CHORD[kind][0] * b,
                    "x_k": CHORD[kind][1] * b,
                    "beta_min": 0.0 if side == "lower" else -BETA_LIMIT,
                    "beta_max": BETA_LIMIT if side == "lower" else 0.0,
                }
            )
    return out


def base_config() -> dict:
    return {
        "wing": WING,
        "modes": {"n_grid": 1001},
        "feathers": feathers(),
        "topology": {"kind": "complete", "k": 2},
        "control": {"law": "C", "gamma": None, "gamma_table": {}, "saturation": True, "law_c_form": "rates"},
        "scenario": {"speed": {"V0": 100.0}, "x0": X0, "dt": DT, "T": 20.0, "output_stride": 10, "E_abort": 1e9},
        "goals": {"chi": "auto", "lambda": "auto", "E_star": 1.0, "eps_star": 1.0, "eps_beta": BETA_LIMIT, "eps_dstar": 2.0},
        "analysis": {"V_lo": 50.0, "V_hi": 200.0},
    }


def main() -> None:
    data = base_config()
    cfg = from_dict(data)
    modes = build_mode_shapes(cfg.wing, cfg.n_grid)
    V_flat = find_flutter_speed(cfg.wing, modes, 100.0, 170.0)
    V = SPEED_FACTOR * V_flat
    plant = Plant(cfg.wing, modes, cfg.feathers)
    ss = plant.state_space(V)
    E0 = total_energy(plant.modal, X0)

    sc = replace(cfg, speed=replace(cfg.speed, V0=V)).scenario()
    topo, gp = sc.topology, sc.resolved_goals
    groups = [i // 2 for i in range(len(cfg.feathers))]  # one gain per strip
    table, abscissa = {}, {}
    for law in "ABC":
        g, a = tune_gains(ss, ControlConfig(law), topo, gp, groups, max_modulus=2.0 / DT)
        table[law] = [float(f"{v:.6g}") for v in g]
        abscissa[law] = spectral_abscissa(closed_loop_matrix(ss, ControlConfig(law), topo, gp, np.array(table[law])))
    open_loop = spectral_abscissa(plant.uncontrolled_matrix(V), exclude_structural=False)

    # thresholds: energy bound at twice the initial energy, abort far above it
    E_star = float(f"{2.0 * E0:.6g}")
    data["control"]["gamma_table"] = table
    data["scenario"].update({"speed": {"V0": V}, "V_flat": V_flat, "E_abort": float(f"{1e4 * E0:.6g}")})
    data["goals"]["E_star"] = E_star
    data["analysis"].update({"V_lo": 100.0, "V_hi": 170.0, "V_grid": [float(v) for v in np.round(np.linspace(0.0, 1.3 * V_flat, 27), 6)]})
    cfg = from_dict(data)

    runs = {}
    for law in ("none", "A", "B", "C"):
        s = replace(cfg.scenario(), control=replace(cfg.control, law=law))
        rec = integrate(s)
        m = metrics(rec, s.resolved_goals, s.t_1)
        runs[law] = m.as_dict() | {"E_T": float(rec.E[-1]), "L_max_after": float(rec.L[rec.t >= (m.t_damp or 0)].max())}
    scan = frequency_scan(cfg.wing, modes, [0.5 * V_flat, 0.95 * V_flat])
    chi, lam = cfg.scenario().resolved_goals.chi, cfg.scenario().resolved_goals.lambda_

    (DATA / "reference.json").write_text(json.dumps(data, indent=2) + "\n")
    values = {
        "lambda_root": cantilever_root(),
        "V_flat": V_flat,
        "V_test": V,
        "E0": E0,
        "open_loop_abscissa": open_loop,
        "closed_loop_abscissa": abscissa,
        "chi": chi,
        "lambda": lam,
        "gap_0.5": float(scan.gap[0]),
        "gap_0.95": float(scan.gap[1]),
        "runs": runs,
    }
    write_json(DATA / "reference_values.json", values)
    print(json.dumps(values, indent=2))


if __name__ == "__main__":
    main()
