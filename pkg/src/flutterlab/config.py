"""Run configuration: strict JSON schema, validation and result persistence."""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .control import LAWS, TOPOLOGIES, ControlConfig
from .dynamics import GoalParams
from .errors import ConfigurationError, FlutterLabError, ValidationError
from .feathers import FeatherSpec, check_overlaps
from .simulation import SWEEP_AXES, Scenario, SimRecord, SpeedProfile, SuppressionMetrics
from .wing import MIN_GRID, WingParams

FLOAT_FMT = "%.17g"
MANIFEST_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_profile = {
    "oneOf": [
        _num,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["z", "values"],
            "properties": {"z": {"type": "array", "items": _num, "minItems": 2}, "values": {"type": "array", "items": _num, "minItems": 2}},
        },
    ]
}
_gains = {"type": "array", "items": _pos}
_auto_num = {"oneOf": [{"const": "auto"}, {"type": "number", "minimum": 0}]}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["wing", "feathers", "control", "scenario", "goals"],
    "properties": {
        "wing": {
            "type": "object",
            "additionalProperties": False,
            "required": ["l", "b", "x0", "sigma_T", "m", "J_m", "EJ", "GJ_K", "Cy_alpha", "rho"],
            "properties": {
                "l": _num,
                "b": _profile,
                "x0": _profile,
                "sigma_T": _profile,
                "m": _profile,
                "J_m": _profile,
                "EJ": _profile,
                "GJ_K": _profile,
                "Cy_alpha": _num,
                "rho": _num,
            },
        },
        "modes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_grid": {"type": "integer", "minimum": MIN_GRID}},
        },
        "feathers": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "side", "z_lo", "z_hi", "x_star", "x_k", "beta_min", "beta_max"],
                "properties": {
                    "id": {"type": "integer"},
                    "side": {"enum": ["upper", "lower"]},
                    "z_lo": _num,
                    "z_hi": _num,
                    "x_star": _num,
                    "x_k": _num,
                    "beta_min": _num,
                    "beta_max": _num,
                },
            },
        },
        "topology": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"kind": {"enum": list(TOPOLOGIES)}, "k": {"type": "integer", "minimum": 1}},
        },
        "control": {
            "type": "object",
            "additionalProperties": False,
            "required": ["law"],
            "properties": {
                "law": {"enum": list(LAWS)},
                "gamma": {"oneOf": [{"type": "null"}, _gains]},
                "gamma_table": {"type": "object", "additionalProperties": False, "properties": {k: _gains for k in LAWS}},
                "saturation": {"type": "boolean"},
                "law_c_form": {"enum": ["rates", "positions"]},
            },
        },
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["speed", "x0"],
            "properties": {
                "speed": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["V0"],
                    "properties": {"V0": _num, "V1": {"oneOf": [{"type": "null"}, _num]}, "t_ramp": _num},
                },
                "V_flat": {"oneOf": [{"type": "null"}, _pos]},
                "x0": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "beta0": {"oneOf": [{"type": "null"}, {"type": "array", "items": _num}]},
                "dt": _pos,
                "T": _pos,
                "output_stride": {"type": "integer", "minimum": 1},
                "E_abort": _pos,
            },
        },
        "goals": {
            "type": "object",
            "additionalProperties": False,
            "required": ["E_star"],
            "properties": {
                "chi": _auto_num,
                "lambda": _auto_num,
                "E_star": _pos,
                "eps_star": _pos,
                "eps_beta": _pos,
                "eps_dstar": _pos,
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "V_lo": {"type": "number", "minimum": 0},
                "V_hi": _pos,
                "V_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["axis", "values"],
            "properties": {"axis": {"enum": list(SWEEP_AXES)}, "values": {"type": "array"}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


def _profile_in(value):
    if isinstance(value, dict):
        return (tuple(value["z"]), tuple(value["values"]))
    return float(value)


def _profile_out(value):
    if isinstance(value, tuple):
        return {"z": list(value[0]), "values": list(value[1])}
    return value


@dataclass(frozen=True)
class RunConfig:
    """Fully validated experiment description."""

    wing: WingParams
    feathers: tuple[FeatherSpec, ...]
    control: ControlConfig
    goals: GoalParams
    speed: SpeedProfile
    x0: tuple[float, ...]
    n_grid: int = 1001
    topology_kind: str = "complete"
    topology_k: int = 2
    auto_chi: bool = True
    auto_lambda: bool = True
    beta0: tuple[float, ...] | None = None
    dt: float = 1e-3
    T: float = 20.0
    output_stride: int = 10
    E_abort: float = 1e6
    V_flat: float | None = None
    V_lo: float = 1.0
    V_hi: float = 300.0
    V_grid: tuple[float, ...] = ()
    sweep_axis: str | None = None
    sweep_values: tuple = ()
    output_dir: str = "out"
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def scenario(self) -> Scenario:
        auto = self.auto_chi and self.auto_lambda
        return Scenario(
            wing=self.wing,
            feathers=self.feathers,
            control=self.control,
            goals=self.goals,
            speed=self.speed,
            x0=self.x0,
            beta0=self.beta0,
            dt=self.dt,
            T=self.T,
            output_stride=self.output_stride,
            E_abort=self.E_abort,
            topology_kind=self.topology_kind,
            topology_k=self.topology_k,
            n_grid=self.n_grid,
            auto_chi_lambda=auto,
            V_flat=self.V_flat,
        )

    def to_dict(self) -> dict[str, Any]:
        w = self.wing
        out: dict[str, Any] = {
            "wing": {n: _profile_out(getattr(w, n)) for n in ("l", "b", "x0", "sigma_T", "m", "J_m", "EJ", "GJ_K", "Cy_alpha", "rho")},
            "modes": {"n_grid": self.n_grid},
            "feathers": [
                {
                    "id": f.id,
                    "side": f.side,
                    "z_lo": f.z_lo,
                    "z_hi": f.z_hi,
                    "x_star": f.x_star,
                    "x_k": f.x_k,
                    "beta_min": f.beta_min,
                    "beta_max": f.beta_max,
                }
                for f in self.feathers
            ],
            "topology": {"kind": self.topology_kind, "k": self.topology_k},
            "control": {
                "law": self.control.law,
                "gamma": None if self.control.gamma is None else list(self.control.gamma),
                "gamma_table": {k: list(v) for k, v in self.control.gamma_table.items()},
                "saturation": self.control.saturation,
                "law_c_form": self.control.law_c_form,
            },
            "scenario": {
                "speed": {"V0": self.speed.V0, "V1": self.speed.V1, "t_ramp": self.speed.t_ramp},
                "V_flat": self.V_flat,
                "x0": list(self.x0),
                "beta0": None if self.beta0 is None else list(self.beta0),
                "dt": self.dt,
                "T": self.T,
                "output_stride": self.output_stride,
                "E_abort": self.E_abort,
            },
            "goals": {
                "chi": "auto" if self.auto_chi else self.goals.chi,
                "lambda": "auto" if self.auto_lambda else self.goals.lambda_,
                "E_star": self.goals.E_star,
                "eps_star": self.goals.eps_star,
                "eps_beta": self.goals.eps_beta,
                "eps_dstar": self.goals.eps_dstar,
            },
            "analysis": {"V_lo": self.V_lo, "V_hi": self.V_hi, "V_grid": list(self.V_grid)},
            "output": {"dir": self.output_dir},
        }
        if self.sweep_axis is not None:
            out["sweep"] = {"axis": self.sweep_axis, "values": list(self.sweep_values)}
        return out


def _path(parts: Sequence) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _invariant(prefix: str, exc: Exception) -> ValidationError:
    msg = str(exc)
    name, sep, rest = msg.partition(": ")
    if sep and name.replace("/", "").replace("_", "").isalnum():
        return ValidationError(f"{prefix}.{name}", rest)
    return ValidationError(prefix, msg)


def from_dict(data: dict[str, Any]) -> RunConfig:
    """Validate a parsed configuration and build a :class:`RunConfig`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ValidationError(_path(err.absolute_path), err.message)

    w = data["wing"]
    try:
        wing = WingParams(**{k: (_profile_in(v) if k not in ("l", "Cy_alpha", "rho") else float(v)) for k, v in w.items()})
    except ConfigurationError as exc:
        raise _invariant("wing", exc) from None

    feathers = []
    for i, fd in enumerate(data["feathers"]):
        try:
            fs = FeatherSpec(**fd)
        except ConfigurationError as exc:
            raise _invariant(f"feathers[{i}]", exc) from None
        problems = fs.violations(wing)
        if problems:
            raise _invariant(f"feathers[{i}]", ConfigurationError(problems[0]))
        feathers.append(fs)
    ids = [f.id for f in feathers]
    if len(set(ids)) != len(ids):
        raise ValidationError("feathers", "feather ids must be unique")
    n = len(feathers)

    topo = data.get("topology", {})
    kind, k = topo.get("kind", "complete"), topo.get("k", 2)
    if n >= 2 and kind != "complete" and k >= n:
        raise ValidationError("topology.k", f"need k < N = {n}")

    c = data["control"]
    gamma = c.get("gamma")
    table = {law: tuple(float(v) for v in g) for law, g in c.get("gamma_table", {}).items()}
    if gamma is not None and len(gamma) != n:
        raise ValidationError("control.gamma", f"expected {n} gains, got {len(gamma)}")
    for law, g in table.items():
        if len(g) != n:
            raise ValidationError(f"control.gamma_table.{law}", f"expected {n} gains, got {len(g)}")
    if c["law"] == "C" and n < 2:
        raise ValidationError("control.law", "law C needs at least two feathers")
    control = ControlConfig(
        law=c["law"],
        gamma=None if gamma is None else tuple(float(v) for v in gamma),
        gamma_table=table,
        saturation=c.get("saturation", True),
        law_c_form=c.get("law_c_form", "rates"),
    )

    g = data["goals"]
    chi, lam = g.get("chi", "auto"), g.get("lambda", "auto")
    try:
        goals = GoalParams(
            chi=0.0 if chi == "auto" else float(chi),
            lambda_=0.0 if lam == "auto" else float(lam),
            E_star=float(g["E_star"]),
            eps_star=float(g.get("eps_star", 1.0)),
            eps_beta=float(g.get("eps_beta", 0.1)),
            eps_dstar=float(g.get("eps_dstar", max(2.0, float(g.get("eps_star", 1.0))))),
        )
    except ConfigurationError as exc:
        raise ValidationError("goals", str(exc)) from None
    if (chi == "auto") != (lam == "auto"):
        raise ValidationError("goals", "chi and lambda must both be 'auto' or both be numbers")

    s = data["scenario"]
    sp = s["speed"]
    try:
        speed = SpeedProfile(float(sp["V0"]), None if sp.get("V1") is None else float(sp["V1"]), float(sp.get("t_ramp", 0.0)))
    except ConfigurationError as exc:
        raise ValidationError("scenario.speed", str(exc)) from None
    beta0 = s.get("beta0")
    if beta0 is not None and len(beta0) != n:
        raise ValidationError("scenario.beta0", f"expected {n} angles, got {len(beta0)}")
    dt, T = float(s.get("dt", 1e-3)), float(s.get("T", 20.0))
    if not T > dt:
        raise ValidationError("scenario.T", "horizon must exceed the time step")
    E_abort = float(s.get("E_abort", 1e6))
    if not E_abort > goals.E_star:
        raise ValidationError("scenario.E_abort", "must exceed goals.E_star")

    a = data.get("analysis", {})
    V_lo, V_hi = float(a.get("V_lo", 1.0)), float(a.get("V_hi", 300.0))
    if not V_lo < V_hi:
        raise ValidationError("analysis.V_hi", "must exceed analysis.V_lo")
    V_grid = tuple(float(v) for v in a.get("V_grid", ()))
    if any(b <= a_ for a_, b in zip(V_grid, V_grid[1:])):
        raise ValidationError("analysis.V_grid", "must be strictly ascending")

    sw = data.get("sweep")
    n_grid = data.get("modes", {}).get("n_grid", 1001)
    if n_grid % 2 == 0:
        raise ValidationError("modes.n_grid", "must be odd")

    if len(feathers) > 1:
        check_overlaps(feathers)

    return RunConfig(
        wing=wing,
        feathers=tuple(feathers),
        control=control,
        goals=goals,
        speed=speed,
        x0=tuple(float(v) for v in s["x0"]),
        n_grid=n_grid,
        topology_kind=kind,
        topology_k=k,
        auto_chi=chi == "auto",
        auto_lambda=lam == "auto",
        beta0=None if beta0 is None else tuple(float(v) for v in beta0),
        dt=dt,
        T=T,
        output_stride=s.get("output_stride", 10),
        E_abort=E_abort,
        V_flat=s.get("V_flat"),
        V_lo=V_lo,
        V_hi=V_hi,
        V_grid=V_grid,
        sweep_axis=None if sw is None else sw["axis"],
        sweep_values=() if sw is None else tuple(sw["values"]),
        output_dir=data.get("output", {}).get("dir", "out"),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration (or a run manifest)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(str(path), f"cannot read configuration: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(str(path), f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if isinstance(data, dict) and "manifest_version" in data:
        data = data.get("config")
    if not isinstance(data, dict):
        raise ValidationError("<root>", "configuration must be a JSON object")
    return from_dict(data)


def _atomic_write(path: Path, writer) -> None:
    """Write via a temporary sibling file and rename it into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_header(n: int) -> list[str]:
    return ["t", "x1", "x2", "x3", "x4", "E", "L", "L_tilde"] + [f"beta_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, n + 1)]


def write_table(path, header: Sequence[str], rows) -> Path:
    """Atomically write a numeric CSV table with a header row."""
    path = Path(path)
    data = np.atleast_2d(np.asarray(rows, dtype=float)).reshape(-1, len(header))

    def writer(fh):
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")

    _atomic_write(path, writer)
    return path


def write_json(path, obj) -> Path:
    path = Path(path)

    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            return clean(v.item())
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    _atomic_write(path, lambda fh: fh.write(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"))
    return path


def write_outputs(record: SimRecord, metrics: SuppressionMetrics, out_dir, config: RunConfig | None = None) -> list[Path]:
    """Write ``timeseries.csv``, ``metrics.json`` and ``manifest.json``."""
    from . import __version__

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = np.column_stack([record.t, record.x, record.E, record.L, record.L_tilde, record.beta, record.u])
        paths = [write_table(out / "timeseries.csv", csv_header(record.N), rows)]
        met = metrics.as_dict() | {"rows": record.n_rows}
        paths.append(write_json(out / "metrics.json", met))
        manifest = {
            "manifest_version": MANIFEST_VERSION,
            "package_version": __version__,
            "files": ["timeseries.csv", "metrics.json"],
            "config": None if config is None else config.to_dict(),
        }
        paths.append(write_json(out / "manifest.json", manifest))
    except OSError as exc:
        raise FlutterLabError(f"cannot write outputs to {exc.filename or out}: {exc.strerror or exc}") from exc
    return paths
