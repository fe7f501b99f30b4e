"""Half-wing structural model, cantilever mode shapes and Galerkin modal integrals.

The wing is a cantilevered beam clamped at the root (z = 0) and free at the
tip (z = l).  Perturbations are expanded on one bending mode ``f`` and one
torsion mode ``phi``::

    y1(z, t) = q(t) f(z),    Theta1(z, t) = r(t) phi(z)

Projecting the coupled bending/torsion equations on ``f`` and ``phi`` gives
a pair of second-order ODEs whose coefficients are computed here.
Coefficients that carry the airspeed are stored with the velocity factored
out (``*_hat``) so a single set of integrals serves every speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .errors import ConfigurationError, DomainError

# A spanwise property is either a constant or a table (z points, values).
Profile = Union[float, Tuple[Sequence[float], Sequence[float]]]

MIN_GRID = 201


def _is_table(value) -> bool:
    return isinstance(value, (tuple, list)) and len(value) == 2 and np.ndim(value[0]) == 1


@dataclass(frozen=True)
class WingParams:
    """Spanwise constants of the half-wing.

    Any of ``b, x0, sigma_T, m, J_m, EJ, GJ_K`` may be given as a
    ``(z_points, values)`` table; values are linearly interpolated.
    ``Cy_alpha`` and ``rho`` are always scalars.
    """

    l: float  # half-span, m
    b: Profile  # chord, m
    x0: Profile  # leading edge to stiffness centre, m
    sigma_T: Profile  # stiffness centre to gravity centre, m (positive aft)
    m: Profile  # linear mass, kg/m
    J_m: Profile  # linear mass moment of inertia about the stiffness axis, kg m
    EJ: Profile  # bending stiffness, N m^2
    GJ_K: Profile  # torsional stiffness, N m^2
    Cy_alpha: float  # lift-curve slope, 1/rad
    rho: float  # air density, kg/m^3

    def __post_init__(self):
        for problem in self.violations():
            raise ConfigurationError(problem)

    def sample(self, name: str, z) -> np.ndarray:
        """Evaluate property ``name`` at span positions ``z``."""
        value = getattr(self, name)
        z = np.asarray(z, dtype=float)
        if _is_table(value):
            zt, vt = (np.asarray(v, dtype=float) for v in value)
            return np.interp(z, zt, vt)
        return np.full(z.shape, float(value))

    @property
    def is_uniform(self) -> bool:
        return not any(_is_table(getattr(self, n)) for n in ("b", "x0", "sigma_T", "m", "J_m", "EJ", "GJ_K"))

    def violations(self) -> list[str]:
        """Return a message per violated invariant (empty when valid)."""
        out = []
        if not (np.isfinite(self.l) and self.l > 0):
            return ["l: half-span must be positive"]
        z = np.linspace(0.0, self.l, 257)
        for name in ("b", "m", "J_m", "EJ", "GJ_K"):
            if not np.all(self.sample(name, z) > 0):
                out.append(f"{name}: must be strictly positive")
        for name in ("Cy_alpha", "rho"):
            if not getattr(self, name) > 0:
                out.append(f"{name}: must be strictly positive")
        if out:
            return out
        b = self.sample("b", z)
        x0 = self.sample("x0", z)
        sig = self.sample("sigma_T", z)
        if not np.all((x0 > 0) & (x0 < b)):
            out.append("x0: stiffness centre must lie strictly inside the chord (0 < x0 < b)")
        if not np.all(np.abs(sig) < b):
            out.append("sigma_T: |sigma_T| must be smaller than the chord")
        m = self.sample("m", z)
        if not np.all(self.sample("J_m", z) > m * sig**2):
            out.append("J_m: inertia matrix not positive definite (need J_m > m sigma_T^2)")
        return out


def cantilever_root(lo: float = 1.5, hi: float = 2.5) -> float:
    """First root of ``cosh(x) cos(x) = -1`` (uniform clamped-free beam)."""
    return brentq(lambda x: np.cosh(x) * np.cos(x) + 1.0, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class ModeShapes:
    """First bending and torsion modes sampled on a uniform span grid.

    Both modes are normalised to unit tip value.  Derivative arrays come
    from closed forms, so ``f4`` is exactly ``(lam/l)**4 * f``.
    """

    l: float
    lam: float
    sigma: float
    scale: float
    grid: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)
    f1: np.ndarray = field(repr=False)
    f2: np.ndarray = field(repr=False)
    f3: np.ndarray = field(repr=False)
    f4: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    phi1: np.ndarray = field(repr=False)
    phi2: np.ndarray = field(repr=False)

    def f_at(self, z, deriv: int = 0):
        k = self.lam / self.l
        s = k * np.asarray(z, dtype=float)
        ch, c, sh, sn = np.cosh(s), np.cos(s), np.sinh(s), np.sin(s)
        sg = self.sigma
        if deriv == 0:
            v = ch - c - sg * (sh - sn)
        elif deriv == 1:
            v = sh + sn - sg * (ch - c)
        elif deriv == 2:
            v = ch + c - sg * (sh + sn)
        elif deriv == 3:
            v = sh - sn - sg * (ch + c)
        elif deriv == 4:
            v = ch - c - sg * (sh - sn)
        else:
            raise ValueError("deriv must be 0..4")
        return k**deriv * v / self.scale

    def phi_at(self, z, deriv: int = 0):
        k = np.pi / (2.0 * self.l)
        s = k * np.asarray(z, dtype=float)
        # d^n/ds^n sin(s) = sin(s + n pi/2)
        return k**deriv * np.sin(s + deriv * np.pi / 2.0)

    def boundary_residuals(self) -> dict[str, float]:
        """Absolute residuals of the clamped-free boundary conditions."""
        l = self.l
        return {
            "f(0)": abs(float(self.f_at(0.0))),
            "f'(0)": abs(float(self.f_at(0.0, 1))),
            "phi(0)": abs(float(self.phi_at(0.0))),
            "f''(l)": abs(float(self.f_at(l, 2))),
            "f'''(l)": abs(float(self.f_at(l, 3))),
            "phi'(l)": abs(float(self.phi_at(l, 1))),
        }


def build_mode_shapes(wing: WingParams, n_grid: int = 1001) -> ModeShapes:
    """Sample the first clamped-free bending mode and first torsion mode."""
    if n_grid < MIN_GRID or n_grid % 2 == 0:
        raise ConfigurationError(f"n_grid must be odd and >= {MIN_GRID}, got {n_grid}")
    lam = cantilever_root()
    sigma = (np.cosh(lam) + np.cos(lam)) / (np.sinh(lam) + np.sin(lam))
    scale = np.cosh(lam) - np.cos(lam) - sigma * (np.sinh(lam) - np.sin(lam))
    z = np.linspace(0.0, wing.l, n_grid)
    proto = ModeShapes(wing.l, lam, sigma, scale, *([z] * 9))
    return replace(
        proto,
        f=proto.f_at(z),
        f1=proto.f_at(z, 1),
        f2=proto.f_at(z, 2),
        f3=proto.f_at(z, 3),
        f4=proto.f_at(z, 4),
        phi=proto.phi_at(z),
        phi1=proto.phi_at(z, 1),
        phi2=proto.phi_at(z, 2),
    )


def quad(values, z) -> float:
    """Composite Simpson rule on a uniform grid with an odd point count."""
    return float(simpson(values, x=z))


@dataclass(frozen=True)
class ModalCoefficients:
    """Galerkin coefficients of the two-mode model.

    Velocity-free coefficients are stored directly; velocity-dependent ones
    are stored reduced (``a12 = V * a12_hat``, ``b13 = V**2 * b13_hat``,
    ``b23 = V**2 * b23_1_hat + b23_2``).  The evaluated view is selected
    with :func:`evaluate_at_speed`.
    """

    a11: float
    a13: float
    b11: float
    b21: float
    b23_2: float
    a12_hat: float
    b12_hat: float
    b13_hat: float
    a22_hat: float
    b22_hat: float
    b23_1_hat: float
    V: float = 0.0

    @property
    def a21(self) -> float:
        return -self.b11

    @property
    def a12(self) -> float:
        return self.V * self.a12_hat

    @property
    def b12(self) -> float:
        return self.V * self.b12_hat

    @property
    def a22(self) -> float:
        return self.V * self.a22_hat

    @property
    def b22(self) -> float:
        return self.V * self.b22_hat

    @property
    def b13(self) -> float:
        return self.V**2 * self.b13_hat

    @property
    def b23(self) -> float:
        return self.V**2 * self.b23_1_hat + self.b23_2

    @property
    def inertia(self) -> np.ndarray:
        return np.array([[self.a11, self.b11], [self.a21, self.b21]])

    def as_dict(self) -> dict[str, float]:
        names = ("a11", "a12", "a13", "b11", "b12", "b13", "a21", "a22", "b21", "b22", "b23", "b23_2")
        return {n: float(getattr(self, n)) for n in names}


def modal_integrals(wing: WingParams, modes: ModeShapes) -> ModalCoefficients:
    """Compute the twelve modal integrals on the mode grid (velocity-free)."""
    if not np.isclose(modes.l, wing.l, rtol=1e-12):
        raise ConfigurationError("mode shapes were built for a different span")
    z = modes.grid
    f, phi = modes.f, modes.phi
    b = wing.sample("b", z)
    x0 = wing.sample("x0", z)
    m = wing.sample("m", z)
    sig = wing.sample("sigma_T", z)
    Jm = wing.sample("J_m", z)
    EJ = wing.sample("EJ", z)
    GJ = wing.sample("GJ_K", z)
    cy, rho = wing.Cy_alpha, wing.rho
    Q = lambda y: quad(y, z)  # noqa: E731

    # strong forms (EJ f'')'' and (GJ phi')'; stiffness derivatives vanish for constant tables
    dEJ = np.gradient(EJ, z, edge_order=2)
    d2EJ = np.gradient(dEJ, z, edge_order=2)
    dGJ = np.gradient(GJ, z, edge_order=2)
    bending_force = d2EJ * modes.f2 + 2.0 * dEJ * modes.f3 + EJ * modes.f4
    torsion_moment = dGJ * modes.phi1 + GJ * modes.phi2

    return ModalCoefficients(
        a11=Q(m * f**2),
        a13=Q(bending_force * f),
        b11=-Q(m * sig * f * phi),
        b21=-Q(Jm * phi**2),
        b23_2=Q(torsion_moment * phi),
        a12_hat=cy * rho * Q(b * f**2),
        b12_hat=-cy * rho * Q((0.75 * b - x0) * b * f * phi),
        b13_hat=-cy * rho * Q(b * f * phi),
        a22_hat=-cy * rho * Q((x0 - b / 4.0) * b * f * phi),
        b22_hat=-np.pi / 16.0 * rho * Q(b**3 * phi**2) + cy * rho * Q(b * (x0 - b / 4.0) * (0.75 * b - x0) * phi**2),
        b23_1_hat=cy * rho * Q(b * (x0 - b / 4.0) * phi**2),
    )


def bending_strain_integral(wing: WingParams, modes: ModeShapes) -> float:
    """Weak form of the bending stiffness term, int EJ (f'')^2 dz."""
    return quad(wing.sample("EJ", modes.grid) * modes.f2**2, modes.grid)


def torsion_strain_integral(wing: WingParams, modes: ModeShapes) -> float:
    """Weak form of the torsion stiffness term, int GJ_K (phi')^2 dz."""
    return quad(wing.sample("GJ_K", modes.grid) * modes.phi1**2, modes.grid)


def evaluate_at_speed(coeffs: ModalCoefficients, V: float) -> ModalCoefficients:
    """Return the coefficient view at airspeed ``V`` (m/s)."""
    if not np.isfinite(V) or V < 0:
        raise DomainError(f"airspeed must be a non-negative number, got {V}")
    return replace(coeffs, V=float(V))
