"""First-order plant, its brute-force oracle, energy and goal functionals.

State layout: ``x = (q, q_dot, r, r_dot)`` followed by the ``N`` feather
angles ``beta``; the feather rates are the controls, ``beta_dot = u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AssemblyError, ConfigurationError
from .feathers import FeatherCoeffs, FeatherSpec, generalized_forces
from .wing import ModalCoefficients, ModeShapes, WingParams, quad


@dataclass(frozen=True)
class StateSpace:
    """Linear plant at a fixed airspeed.

    ``A4`` is the uncontrolled 4x4 matrix whose second and fourth rows are
    ``C1`` and ``C2``.  Per-feather columns: ``R1, R2`` multiply ``beta``
    and ``s1, s2`` multiply ``u``.  ``mu, nu`` are the position-feedback
    coefficients used by law A.
    """

    V: float
    modal: ModalCoefficients = field(repr=False)
    d: np.ndarray = field(repr=False)
    C1: np.ndarray = field(repr=False)
    C2: np.ndarray = field(repr=False)
    R1: np.ndarray = field(repr=False)
    R2: np.ndarray = field(repr=False)
    s1: np.ndarray = field(repr=False)
    s2: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.R1)

    @property
    def A4(self) -> np.ndarray:
        return np.array([[0.0, 1.0, 0.0, 0.0], self.C1, [0.0, 0.0, 0.0, 1.0], self.C2])

    @property
    def R(self) -> np.ndarray:
        """4xN matrix mapping ``beta`` into the state derivative."""
        out = np.zeros((4, self.N))
        out[1], out[3] = self.R1, self.R2
        return out

    @property
    def S(self) -> np.ndarray:
        """4xN matrix mapping ``u`` into the state derivative."""
        out = np.zeros((4, self.N))
        out[1], out[3] = self.s1, self.s2
        return out


@dataclass
class PlantState:
    """Time, modal state and feather angles."""

    t: float
    x: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        if self.x.shape != (4,):
            raise ValueError(f"x must have 4 entries, got shape {self.x.shape}")


@dataclass(frozen=True)
class GoalParams:
    """Goal weights and the thresholds used to judge a run."""

    chi: float = 0.0
    lambda_: float = 0.0
    E_star: float = 1.0
    eps_star: float = 1.0
    eps_beta: float = 0.1
    eps_dstar: float = 2.0

    def __post_init__(self):
        if self.chi < 0 or self.lambda_ < 0:
            raise ConfigurationError("chi and lambda_ must be non-negative")
        if min(self.E_star, self.eps_star, self.eps_beta, self.eps_dstar) <= 0:
            raise ConfigurationError("E_star, eps_star, eps_beta and eps_dstar must be positive")
        if self.eps_dstar < self.eps_star:
            raise ConfigurationError("eps_dstar must not be smaller than eps_star")


def inverse_inertia(modal: ModalCoefficients) -> np.ndarray:
    """Closed-form inverse of the modal inertia matrix."""
    a11, b11, a21, b21 = modal.a11, modal.b11, modal.a21, modal.b21
    det = a11 * b21 - a21 * b11
    if det == 0 or abs(det) <= 1e-14 * abs(a11 * b21):
        raise AssemblyError("modal inertia matrix is singular (need J_m > m sigma_T^2)")
    return np.array([[b21, -b11], [-a21, a11]]) / det


def assemble(modal: ModalCoefficients, feathers: Sequence[FeatherCoeffs], V: float | None = None) -> StateSpace:
    """Reduce the two-mode system to first-order form at airspeed ``V``."""
    if V is None:
        V = modal.V
    if modal.V != V:
        raise AssemblyError(f"modal coefficients evaluated at V={modal.V}, asked to assemble at V={V}")
    d = inverse_inertia(modal)
    K1 = np.array([modal.a13, modal.a12, modal.b13, modal.b12])
    K2 = np.array([0.0, modal.a22, modal.b23, modal.b22])
    C1 = -d[0, 0] * K1 - d[0, 1] * K2
    C2 = -d[1, 0] * K1 - d[1, 1] * K2
    Ab, Bb, Cb, Db = (np.array([getattr(c, n) for c in feathers], dtype=float) for n in ("A_bar", "B_bar", "C_bar", "D_bar"))
    R1 = V**2 * (Ab * d[0, 0] + Cb * d[0, 1])
    R2 = V**2 * (Ab * d[1, 0] + Cb * d[1, 1])
    s1 = V * (Bb * d[0, 0] + Db * d[0, 1])
    s2 = V * (Bb * d[1, 0] + Db * d[1, 1])
    mu = modal.a11 * s1 - modal.a21 * s2
    nu = -(modal.a21 * s1 + modal.b21 * s2)
    return StateSpace(V=float(V), modal=modal, d=d, C1=C1, C2=C2, R1=R1, R2=R2, s1=s1, s2=s2, mu=mu, nu=nu)


def _check_dims(n: int, beta, u) -> None:
    if np.shape(beta) != (n,) or np.shape(u) != (n,):
        raise ValueError(f"beta and u must have {n} entries, got {np.shape(beta)} and {np.shape(u)}")


def plant_derivative(ss: StateSpace, x: np.ndarray, beta: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives ``(x_dot, beta_dot)`` without building a PlantState."""
    x1, x2, x3, x4 = x
    F1 = ss.R1 @ beta + ss.s1 @ u
    F2 = ss.R2 @ beta + ss.s2 @ u
    xd = np.array([x2, ss.C1 @ x + F1, x4, ss.C2 @ x + F2])
    return xd, np.asarray(u, dtype=float)


def rhs(ss: StateSpace, state: PlantState, u) -> np.ndarray:
    """Stacked derivative ``(x1_dot .. x4_dot, beta_dot)``."""
    u = np.asarray(u, dtype=float)
    _check_dims(ss.N, state.beta, u)
    xd, bd = plant_derivative(ss, state.x, state.beta, u)
    return np.concatenate([xd, bd])


def rhs_oracle(modal: ModalCoefficients, feathers: Sequence[FeatherCoeffs], state: PlantState, u) -> np.ndarray:
    """Same contract as :func:`rhs`, solving the second-order system directly.

    Generalized feather loads are summed from the coefficient definitions
    and the 2x2 inertia system is solved by elimination at every call.
    """
    u = np.asarray(u, dtype=float)
    _check_dims(len(feathers), state.beta, u)
    V = modal.V
    q, qd, r, rd = state.x
    Q, M = generalized_forces(feathers, V, state.beta, u)
    rhs1 = Q - modal.a12 * qd - modal.a13 * q - modal.b12 * rd - modal.b13 * r
    rhs2 = M - modal.a22 * qd - modal.b22 * rd - modal.b23 * r
    a, b, c, d = modal.a11, modal.b11, modal.a21, modal.b21
    if a == 0:
        raise AssemblyError("a11 vanishes")
    # eliminate qdd from the second row
    piv = d - c * b / a
    if piv == 0:
        raise AssemblyError("modal inertia matrix is singular")
    rdd = (rhs2 - c / a * rhs1) / piv
    qdd = (rhs1 - b * rdd) / a
    return np.concatenate([[qd, qdd, rd, rdd], u])


def total_energy(modal: ModalCoefficients, x) -> float:
    """Mechanical energy of the modal state (kinetic plus strain)."""
    x1, x2, x3, x4 = x
    return float(
        0.5 * modal.a13 * x1**2
        + 0.5 * modal.a11 * x2**2
        - 0.5 * modal.b23_2 * x3**2
        - 0.5 * modal.b21 * x4**2
        - modal.a21 * x2 * x4
    )


def energy_matrix(modal: ModalCoefficients) -> np.ndarray:
    """Symmetric ``P`` with ``total_energy(x) = x @ P @ x``."""
    P = np.diag([0.5 * modal.a13, 0.5 * modal.a11, -0.5 * modal.b23_2, -0.5 * modal.b21])
    P[1, 3] = P[3, 1] = -0.5 * modal.a21
    return P


def energy_quadrature(wing: WingParams, modes: ModeShapes, x) -> float:
    """Beam energy evaluated from its spanwise integrals at a modal state.

    Reconstructs ``y1 = x1 f``, ``Theta1 = x3 phi`` and their rates on the
    mode grid and integrates the kinetic and strain energy densities.
    """
    x1, x2, x3, x4 = x
    z = modes.grid
    y_t = x2 * modes.f
    th_t = x4 * modes.phi
    y_zz = x1 * modes.f2
    th_z = x3 * modes.phi1
    density = (
        0.5 * wing.sample("m", z) * y_t**2
        + 0.5 * wing.sample("J_m", z) * th_t**2
        - wing.sample("m", z) * wing.sample("sigma_T", z) * y_t * th_t
        + 0.5 * wing.sample("EJ", z) * y_zz**2
        + 0.5 * wing.sample("GJ_K", z) * th_z**2
    )
    return quad(density, z)


def goal_L(x, gp: GoalParams) -> float:
    """Network deviation functional in closed form."""
    x1, x2, x3, x4 = x
    return 0.5 * (gp.chi * (x1**2 + x2**2) + gp.lambda_ * (x3**2 + x4**2))


def goal_L_pairwise(x, weights, f_anchor, phi_anchor) -> float:
    """Network deviation functional as the explicit weighted double sum.

    ``f_anchor`` and ``phi_anchor`` hold the mode values at each feather's
    anchor, i.e. the diagonals of the local output maps.
    """
    x = np.asarray(x, dtype=float)
    W = np.asarray(weights, dtype=float)
    n = len(f_anchor)
    total = 0.0
    for i in range(n):
        wi = np.array([f_anchor[i], f_anchor[i], phi_anchor[i], phi_anchor[i]]) * x
        for j in range(n):
            if W[i, j] > 0:
                wj = np.array([f_anchor[j], f_anchor[j], phi_anchor[j], phi_anchor[j]]) * x
                total += W[i, j] * float(np.sum((wi - wj) ** 2))
    return 0.5 * total


def disagreement(beta, weights) -> float:
    """``sum_ij w_ij (beta_i - beta_j)^2`` over all ordered pairs."""
    beta = np.asarray(beta, dtype=float)
    diff = beta[:, None] - beta[None, :]
    return float(np.sum(np.asarray(weights) * diff**2))


def goal_L_tilde(x, beta, topo, gp: GoalParams) -> float:
    """Deviation functional extended with the feather disagreement term."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (topo.N,):
        raise ValueError(f"beta must have {topo.N} entries")
    return goal_L(x, gp) + 0.5 * disagreement(beta, topo.weights)


def ltilde_rate(ss: StateSpace, x, beta, u, weights, gp: GoalParams) -> float:
    """Time derivative of the extended functional along the plant flow."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    _check_dims(ss.N, beta, u)
    xd, _ = plant_derivative(ss, x, beta, u)
    W = np.asarray(weights)
    pair = float(np.sum(W * (beta[:, None] - beta[None, :]) * (u[:, None] - u[None, :])))
    return gp.chi * (x[0] * xd[0] + x[1] * xd[1]) + gp.lambda_ * (x[2] * xd[2] + x[3] * xd[3]) + pair


def anchor_modes(modes: ModeShapes, feathers: Sequence[FeatherSpec]) -> tuple[np.ndarray, np.ndarray]:
    """Mode values ``(f, phi)`` at each feather anchor."""
    z = np.array([fs.z_anchor for fs in feathers], dtype=float)
    if np.any(z < 0) or np.any(z > modes.l):
        raise ValueError("feather anchors must lie within the span")
    return modes.f_at(z), modes.phi_at(z)


def chi_lambda(topo, modes: ModeShapes, feathers: Sequence[FeatherSpec]) -> tuple[float, float]:
    """Topology constants weighting bending and torsion deviations."""
    fa, pa = anchor_modes(modes, feathers)
    W = np.asarray(topo.weights)
    chi = float(np.sum(W * (fa[:, None] - fa[None, :]) ** 2))
    lam = float(np.sum(W * (pa[:, None] - pa[None, :]) ** 2))
    return chi, lam
