"""Feather actuators: geometry, thin-airfoil coefficients and modal projections.

A feather is a rigid strip on the upper or lower wing surface, spanning
``[z_lo, z_hi]`` spanwise and ``[x_star, x_k]`` chordwise.  Deflecting it
by ``beta`` creates a running lift ``A V^2 beta + B V beta_dot`` and moment
``C V^2 beta + D V beta_dot``.  Chordwise positions are mapped to the
Glauert angle ``psi`` by ``x = b/2 (1 - cos psi)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .wing import ModeShapes, WingParams, quad

STRIP_POINTS = 201


class FeatherOverlapWarning(UserWarning):
    """Two feathers on the same surface cover a common patch of the wing."""


@dataclass(frozen=True)
class FeatherSpec:
    """Geometry and deflection limits of one feather.

    Lower-surface feathers deflect in ``[0, beta_max]``; upper-surface
    feathers in ``[beta_min, 0]``.  A positive angle locally raises the
    angle of attack on either surface.
    """

    id: int
    side: str  # "upper" or "lower"
    z_lo: float
    z_hi: float
    x_star: float
    x_k: float
    beta_min: float
    beta_max: float

    def __post_init__(self):
        for problem in self.violations():
            raise ConfigurationError(problem)

    @property
    def z_anchor(self) -> float:
        return 0.5 * (self.z_lo + self.z_hi)

    @property
    def x_anchor(self) -> float:
        return 0.5 * (self.x_star + self.x_k)

    @property
    def width(self) -> float:
        return self.z_hi - self.z_lo

    def violations(self, wing: WingParams | None = None) -> list[str]:
        """Messages for every broken invariant; pass ``wing`` to check extents."""
        out = []
        if self.side not in ("upper", "lower"):
            out.append(f"side: expected 'upper' or 'lower', got {self.side!r}")
        if not 0 <= self.z_lo < self.z_hi:
            out.append("z_lo/z_hi: need 0 <= z_lo < z_hi")
        if not 0 <= self.x_star <= self.x_k:
            out.append("x_star/x_k: need 0 <= x_star <= x_k")
        if self.side == "lower" and not (self.beta_min == 0 and self.beta_max > 0):
            out.append("beta_min/beta_max: lower-surface interval must be [0, beta_plus] with beta_plus > 0")
        if self.side == "upper" and not (self.beta_max == 0 and self.beta_min < 0):
            out.append("beta_min/beta_max: upper-surface interval must be [beta_minus, 0] with beta_minus < 0")
        if wing is not None:
            if self.z_hi > wing.l:
                out.append("z_hi: feather extends past the wing tip")
            if self.x_k > float(wing.sample("b", self.z_anchor)):
                out.append("x_k: feather extends past the trailing edge")
        return out


@dataclass(frozen=True)
class FeatherCoeffs:
    """Aerodynamic influence coefficients of one feather.

    ``G, H, I, J`` are dimensionless; ``A, B, C, D`` are per unit span and
    ``A_bar .. D_bar`` are their projections on the bending (``A, B``) and
    torsion (``C, D``) modes.  The speed-dependent input columns live in
    :class:`flutterlab.dynamics.StateSpace`.
    """

    G: float
    H: float
    I: float  # noqa: E741
    J: float
    A: float
    B: float
    C: float
    D: float
    A_bar: float
    B_bar: float
    C_bar: float
    D_bar: float


def chord_to_psi(x, b):
    """Glauert angle of chordwise station ``x`` on a chord of length ``b``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > b):
        raise DomainError(f"chordwise position must lie in [0, {b}], got {x}")
    psi = np.arccos(np.clip(1.0 - 2.0 * x / b, -1.0, 1.0))
    return float(psi) if psi.ndim == 0 else psi


def shape_coeffs(psi_star: float, psi_k: float) -> tuple[float, float, float, float]:
    """Thin-airfoil shape coefficients ``(G, H, I, J)`` of a flap on ``[psi_star, psi_k]``."""
    if not 0.0 <= psi_star <= psi_k <= np.pi:
        raise DomainError(f"need 0 <= psi_star <= psi_k <= pi, got ({psi_star}, {psi_k})")
    d_psi = psi_k - psi_star
    d_sin = np.sin(psi_k) - np.sin(psi_star)
    d_sin2 = np.sin(2 * psi_k) - np.sin(2 * psi_star)
    d_sin3 = np.sin(3 * psi_k) - np.sin(3 * psi_star)
    c = np.cos(psi_star)
    G = (d_psi - d_sin) / np.pi
    H = (c * d_psi - d_sin) / (2 * np.pi) - c * d_sin + 0.5 * (d_psi + 0.5 * d_sin2)
    I = (2 * d_sin + d_sin2) / 8  # noqa: E741
    J = -(-2 * c * d_sin + d_psi) / 16 - (0.5 - c) * d_sin2 / 16 - (d_sin + d_sin3 / 3) / 16
    return float(G), float(H), float(I), float(J)


def strip_coeffs(wing: WingParams, feather: FeatherSpec) -> tuple[float, float, float, float]:
    """Running force/moment coefficients ``(A, B, C, D)`` of a feather.

    Chord quantities are taken at the feather's span anchor.  The same
    formulas serve both surfaces; the sign of the load is set by the sign
    of ``beta``.
    """
    problems = feather.violations(wing)
    if problems:
        raise DomainError(f"feather {feather.id}: " + "; ".join(problems))
    b = float(wing.sample("b", feather.z_anchor))
    x0 = float(wing.sample("x0", feather.z_anchor))
    G, H, I, J = shape_coeffs(chord_to_psi(feather.x_star, b), chord_to_psi(feather.x_k, b))
    cy, rho = wing.Cy_alpha, wing.rho
    arm = x0 / b - 0.25
    A = cy * G * rho * b**2
    B = cy * H * rho * b**3
    C = -(I + cy * arm * G) * rho * b**2
    D = -(J + cy * arm * H) * rho * b**3
    return A, B, C, D


def strip_mode_integrals(feather: FeatherSpec, modes: ModeShapes, n: int = STRIP_POINTS) -> tuple[float, float]:
    """Integrals of ``f`` and ``phi`` over the feather's span extent."""
    if feather.z_lo < 0 or feather.z_hi > modes.l * (1 + 1e-12):
        raise DomainError(f"feather {feather.id}: strip [{feather.z_lo}, {feather.z_hi}] outside span")
    z = np.linspace(feather.z_lo, feather.z_hi, n)
    return quad(modes.f_at(z), z), quad(modes.phi_at(z), z)


def feather_modal_coeffs(strip: Sequence[float], feather: FeatherSpec, modes: ModeShapes) -> tuple[float, float, float, float]:
    """Project strip coefficients on the modes: ``(A_bar, B_bar, C_bar, D_bar)``."""
    A, B, C, D = strip
    int_f, int_phi = strip_mode_integrals(feather, modes)
    return A * int_f, B * int_f, C * int_phi, D * int_phi


def feather_coeffs(wing: WingParams, feather: FeatherSpec, modes: ModeShapes) -> FeatherCoeffs:
    """All speed-independent coefficients of one feather."""
    b = float(wing.sample("b", feather.z_anchor))
    shape = shape_coeffs(chord_to_psi(feather.x_star, b), chord_to_psi(feather.x_k, b))
    strip = strip_coeffs(wing, feather)
    return FeatherCoeffs(*shape, *strip, *feather_modal_coeffs(strip, feather, modes))


def feather_loads(coeffs: FeatherCoeffs, V: float, beta: float, beta_dot: float) -> tuple[float, float]:
    """Running lift and moment ``(q_u, m_u)`` produced by one feather."""
    if V < 0:
        raise DomainError(f"airspeed must be non-negative, got {V}")
    q_u = coeffs.A * V**2 * beta + coeffs.B * V * beta_dot
    m_u = coeffs.C * V**2 * beta + coeffs.D * V * beta_dot
    return q_u, m_u


def generalized_forces(coeffs: Sequence[FeatherCoeffs], V: float, beta, beta_dot) -> tuple[float, float]:
    """Modal force ``Q`` and moment ``M`` summed over all feathers."""
    beta = np.asarray(beta, dtype=float)
    beta_dot = np.asarray(beta_dot, dtype=float)
    if beta.shape != (len(coeffs),) or beta_dot.shape != beta.shape:
        raise ValueError("beta and beta_dot must have one entry per feather")
    if not coeffs:
        return 0.0, 0.0
    Ab, Bb, Cb, Db = (np.array([getattr(c, n) for c in coeffs]) for n in ("A_bar", "B_bar", "C_bar", "D_bar"))
    Q = float(V**2 * Ab @ beta + V * Bb @ beta_dot)
    M = float(V**2 * Cb @ beta + V * Db @ beta_dot)
    return Q, M


def check_overlaps(feathers: Sequence[FeatherSpec]) -> list[tuple[int, int]]:
    """Warn about and return id pairs of same-surface feathers that overlap."""
    pairs = []
    for i, a in enumerate(feathers):
        for b in feathers[i + 1 :]:
            if a.side != b.side:
                continue
            span = min(a.z_hi, b.z_hi) - max(a.z_lo, b.z_lo)
            chord = min(a.x_k, b.x_k) - max(a.x_star, b.x_star)
            if span > 0 and chord > 0:
                pairs.append((a.id, b.id))
    if pairs:
        warnings.warn(f"overlapping feathers (loads are superposed): {pairs}", FeatherOverlapWarning, stacklevel=2)
    return pairs
