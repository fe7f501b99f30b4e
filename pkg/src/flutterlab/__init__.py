"""Wing flutter suppression lab with distributed feather actuators."""

from .control import ControlConfig, Topology, build_topology, law_A, law_B, law_C, sg_gradient
from .dynamics import GoalParams, PlantState, StateSpace, assemble, rhs, rhs_oracle, total_energy
from .errors import (
    AssemblyError,
    BracketError,
    ConfigurationError,
    DomainError,
    FlutterLabError,
    NumericalDivergenceError,
    TopologyError,
    ValidationError,
)
from .feathers import FeatherCoeffs, FeatherSpec, feather_coeffs
from .simulation import Scenario, SimRecord, SpeedProfile, SuppressionMetrics, find_flutter_speed, integrate, metrics, sweep
from .wing import ModalCoefficients, ModeShapes, WingParams, build_mode_shapes, evaluate_at_speed, modal_integrals

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "BracketError",
    "ConfigurationError",
    "ControlConfig",
    "DomainError",
    "FeatherCoeffs",
    "FeatherSpec",
    "FlutterLabError",
    "GoalParams",
    "ModalCoefficients",
    "ModeShapes",
    "NumericalDivergenceError",
    "PlantState",
    "Scenario",
    "SimRecord",
    "SpeedProfile",
    "StateSpace",
    "SuppressionMetrics",
    "Topology",
    "TopologyError",
    "ValidationError",
    "WingParams",
    "assemble",
    "build_mode_shapes",
    "build_topology",
    "evaluate_at_speed",
    "feather_coeffs",
    "find_flutter_speed",
    "integrate",
    "law_A",
    "law_B",
    "law_C",
    "metrics",
    "modal_integrals",
    "rhs",
    "rhs_oracle",
    "sg_gradient",
    "sweep",
    "total_energy",
]
