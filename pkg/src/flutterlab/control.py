"""Speed-gradient feather control laws, agent network and stability analysis.

Three laws are provided:

* ``A``: ``u_i = -gamma_i (mu_i x1 + nu_i x3)``, position feedback with
  constant coefficients;
* ``B``: ``u_p = -gamma_p (chi s1_p x1 + lambda s2_p x3)``, which keeps
  bending and torsion feedback separate;
* ``C``: ``u_p = -gamma_p (chi s1_p x2 + lambda s2_p x4)
  - 2 gamma_p sum_j w_pj (beta_p - beta_j)``, the proportional
  speed-gradient law of the extended functional with a consensus term.

The laws read ``s1, s2, mu, nu`` from a :class:`~flutterlab.dynamics.StateSpace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .dynamics import GoalParams, StateSpace
from .errors import ConfigurationError, TopologyError
from .feathers import FeatherSpec

LAWS = ("A", "B", "C", "none")
TOPOLOGIES = ("ring", "grid", "complete")
SINKHORN_TOL = 1e-9
SINKHORN_MAX_ITER = 500


@dataclass(frozen=True)
class Topology:
    """Symmetric, zero-diagonal agent weights with unit row sums."""

    weights: np.ndarray = field(repr=False)
    kind: str = "custom"

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise TopologyError("weights must be a square matrix")
        if np.any(W < 0) or np.any(np.diag(W) != 0):
            raise TopologyError("weights must be non-negative with a zero diagonal")
        if not np.array_equal(W, W.T):
            raise TopologyError("weights must be exactly symmetric")
        if np.any(np.abs(W.sum(axis=1) - 1.0) > SINKHORN_TOL):
            raise TopologyError("every row of weights must sum to one")
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    @property
    def neighbors(self) -> list[np.ndarray]:
        return [np.flatnonzero(row > 0) for row in self.weights]

    @property
    def laplacian(self) -> np.ndarray:
        """Weighted graph Laplacian ``diag(W 1) - W``."""
        return np.diag(self.weights.sum(axis=1)) - self.weights


def sinkhorn(adjacency, tol: float = SINKHORN_TOL, max_iter: int = SINKHORN_MAX_ITER) -> np.ndarray:
    """Symmetric diagonal scaling ``D A D`` with unit row sums.

    Uses the symmetric fixed point ``d <- sqrt(d / (A d))``.  Raises
    :class:`TopologyError` when the row sums do not reach ``tol``.
    """
    A = np.asarray(adjacency, dtype=float)
    if np.any(A.sum(axis=1) == 0):
        raise TopologyError("isolated agent: a row of the adjacency matrix is empty")
    d = np.ones(A.shape[0])
    for _ in range(max_iter):
        d = np.sqrt(d / (A @ d))
        W = d[:, None] * A * d[None, :]
        W = 0.5 * (W + W.T)
        if np.max(np.abs(W.sum(axis=1) - 1.0)) <= tol:
            return W
    raise TopologyError(f"Sinkhorn balancing did not reach {tol:g} in {max_iter} iterations")


def _ring_adjacency(n: int, k: int) -> np.ndarray:
    if k % 2 and n % 2:
        raise TopologyError("a ring with odd k needs an even number of agents")
    A = np.zeros((n, n))
    for i in range(n):
        for off in range(1, k // 2 + 1):
            A[i, (i + off) % n] = A[i, (i - off) % n] = 1
        if k % 2:
            A[i, (i + n // 2) % n] = 1
    return A


def _grid_adjacency(feathers: Sequence[FeatherSpec], k: int) -> np.ndarray:
    n = len(feathers)
    A = np.zeros((n, n))
    for side in ("lower", "upper"):
        idx = sorted((i for i, f in enumerate(feathers) if f.side == side), key=lambda i: (feathers[i].z_anchor, i))
        for a, i in enumerate(idx):
            for off in range(1, max(k // 2, 1) + 1):
                if a + off < len(idx):
                    A[i, idx[a + off]] = A[idx[a + off], i] = 1
    for i, fi in enumerate(feathers):
        for j, fj in enumerate(feathers):
            if fi.side != fj.side and np.isclose(fi.z_anchor, fj.z_anchor):
                A[i, j] = 1
    return A


def build_topology(feathers: Sequence[FeatherSpec], kind: str = "complete", k: int = 2) -> Topology:
    """Agent network over the feathers.

    ``ring`` links each feather to its ``k`` nearest neighbours in span
    order; ``grid`` links span neighbours on the same surface and the
    opposite-surface feather at the same span station; ``complete`` links
    all pairs.  Regular graphs get weights ``1/degree``; others are
    Sinkhorn-balanced.
    """
    n = len(feathers)
    if n < 2:
        raise TopologyError("a network needs at least two agents")
    if kind not in TOPOLOGIES:
        raise TopologyError(f"unknown topology {kind!r}, expected one of {TOPOLOGIES}")
    if kind != "complete" and not 1 <= k < n:
        raise TopologyError(f"neighbour count k must satisfy 1 <= k < N, got k={k}, N={n}")
    order = sorted(range(n), key=lambda i: (feathers[i].z_anchor, feathers[i].side, i))
    if kind == "complete":
        A = np.ones((n, n)) - np.eye(n)
    elif kind == "ring":
        ring = _ring_adjacency(n, k)
        A = np.zeros((n, n))
        A[np.ix_(order, order)] = ring
    else:
        A = _grid_adjacency(feathers, k)
    deg = A.sum(axis=1)
    if np.all(deg == deg[0]) and deg[0] > 0:
        W = A / deg[0]
    else:
        W = sinkhorn(A)
    return Topology(W, kind)


@dataclass(frozen=True)
class ControlConfig:
    """Law selection, gains and saturation flag.

    ``gamma`` holds the gains of the active law.  When it is ``None`` the
    gains are looked up in ``gamma_table`` by law name, falling back to
    ones.  ``law_c_form`` picks the state fed to law C: ``"rates"``
    (``x2, x4``) or ``"positions"`` (``x1, x3``).
    """

    law: str = "none"
    gamma: tuple[float, ...] | None = None
    gamma_table: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    saturation: bool = True
    law_c_form: str = "rates"

    def __post_init__(self):
        if self.law not in LAWS:
            raise ConfigurationError(f"law must be one of {LAWS}, got {self.law!r}")
        if self.law_c_form not in ("rates", "positions"):
            raise ConfigurationError("law_c_form must be 'rates' or 'positions'")
        for g in [self.gamma, *self.gamma_table.values()]:
            if g is not None and not all(v > 0 for v in g):
                raise ConfigurationError("all gains must be strictly positive")

    def gains(self, n: int) -> np.ndarray:
        g = self.gamma if self.gamma is not None else self.gamma_table.get(self.law)
        if g is None:
            return np.ones(n)
        g = np.asarray(g, dtype=float)
        if g.shape != (n,):
            raise ConfigurationError(f"law {self.law}: expected {n} gains, got {g.size}")
        return g


@dataclass(frozen=True)
class AgentView:
    """What feather ``i`` sees: its output map, local deviation and angles."""

    i: int
    Phi_i: np.ndarray
    w_i: np.ndarray
    beta_i: float
    neighbor_beta: dict[int, float]


def agent_view(i: int, x, beta, topo: Topology, f_anchor, phi_anchor) -> AgentView:
    Phi = np.array([f_anchor[i], f_anchor[i], phi_anchor[i], phi_anchor[i]], dtype=float)
    nb = {int(j): float(beta[j]) for j in topo.neighbors[i]}
    return AgentView(i, Phi, Phi * np.asarray(x, dtype=float), float(beta[i]), nb)


def consensus_term(beta, weights) -> np.ndarray:
    """``sum_j w_pj (beta_p - beta_j)`` per agent; exactly zero when all angles agree."""
    beta = np.asarray(beta, dtype=float)
    return np.sum(weights * (beta[:, None] - beta[None, :]), axis=1)


def law_A(x, inputs: StateSpace, gamma) -> np.ndarray:
    """Constant-coefficient position feedback."""
    return -np.asarray(gamma) * (inputs.mu * x[0] + inputs.nu * x[2])


def law_B(x, inputs: StateSpace, gamma, gp: GoalParams) -> np.ndarray:
    """Position feedback with separate bending and torsion channels."""
    return -np.asarray(gamma) * (gp.chi * inputs.s1 * x[0] + gp.lambda_ * inputs.s2 * x[2])


def law_C(x, beta, topo: Topology, inputs: StateSpace, gamma, gp: GoalParams, form: str = "rates") -> np.ndarray:
    """Proportional speed-gradient law with neighbour consensus."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (topo.N,) or inputs.N != topo.N:
        raise ValueError("beta, topology and plant inputs must agree on N")
    xb, xt = (x[1], x[3]) if form == "rates" else (x[0], x[2])
    g = np.asarray(gamma)
    return -g * (gp.chi * inputs.s1 * xb + gp.lambda_ * inputs.s2 * xt) - 2.0 * g * consensus_term(beta, topo.weights)


def sg_gradient(x, beta, topo: Topology, inputs: StateSpace, gp: GoalParams) -> np.ndarray:
    """Gradient in ``u`` of the rate of the extended functional."""
    beta = np.asarray(beta, dtype=float)
    return gp.chi * inputs.s1 * x[1] + gp.lambda_ * inputs.s2 * x[3] + 2.0 * consensus_term(beta, topo.weights)


def control(cfg: ControlConfig, x, beta, inputs: StateSpace, topo: Topology | None, gp: GoalParams, gamma=None) -> np.ndarray:
    """Dispatch to the configured law."""
    if gamma is None:
        gamma = cfg.gains(inputs.N)
    if cfg.law == "A":
        return law_A(x, inputs, gamma)
    if cfg.law == "B":
        return law_B(x, inputs, gamma, gp)
    if cfg.law == "C":
        return law_C(x, beta, topo, inputs, gamma, gp, cfg.law_c_form)
    return np.zeros(inputs.N)


def feather_bounds(feathers: Sequence[FeatherSpec]) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([f.beta_min for f in feathers], dtype=float)
    hi = np.array([f.beta_max for f in feathers], dtype=float)
    return lo, hi


def saturate(beta, u, feathers: Sequence[FeatherSpec] | None = None, *, lo=None, hi=None) -> np.ndarray:
    """Zero the rates that would push a feather further past its limit.

    Bounds come from ``feathers`` or directly from ``lo``/``hi``.  The
    complementary clamp of ``beta`` is applied by the integrator after
    each full step.
    """
    if feathers is not None:
        lo, hi = feather_bounds(feathers)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    blocked = ((beta >= hi) & (u > 0)) | ((beta <= lo) & (u < 0))
    return np.where(blocked, 0.0, u)


def feedback_gains(cfg: ControlConfig, inputs: StateSpace, topo: Topology | None, gp: GoalParams, gamma=None):
    """Matrices ``(Kx, Kb)`` with ``u = Kx x + Kb beta`` for the configured law."""
    n = inputs.N
    g = cfg.gains(n) if gamma is None else np.asarray(gamma, dtype=float)
    Kx = np.zeros((n, 4))
    Kb = np.zeros((n, n))
    if cfg.law == "A":
        Kx[:, 0], Kx[:, 2] = -g * inputs.mu, -g * inputs.nu
    elif cfg.law == "B":
        Kx[:, 0], Kx[:, 2] = -g * gp.chi * inputs.s1, -g * gp.lambda_ * inputs.s2
    elif cfg.law == "C":
        cb, ct = (1, 3) if cfg.law_c_form == "rates" else (0, 2)
        Kx[:, cb], Kx[:, ct] = -g * gp.chi * inputs.s1, -g * gp.lambda_ * inputs.s2
        Kb = -2.0 * g[:, None] * topo.laplacian
    return Kx, Kb


def closed_loop_matrix(ss: StateSpace, cfg: ControlConfig, topo: Topology | None, gp: GoalParams, gamma=None) -> np.ndarray:
    """Unsaturated ``(4+N)``-state closed-loop matrix."""
    Kx, Kb = feedback_gains(cfg, ss, topo, gp, gamma)
    S, R = ss.S, ss.R
    top = np.hstack([ss.A4 + S @ Kx, R + S @ Kb])
    bottom = np.hstack([Kx, Kb])
    return np.vstack([top, bottom])


def structural_nullity(M, rtol: float = 1e-10) -> int:
    """Numerical nullity of ``M`` from its singular values."""
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv <= rtol * sv[0])) if sv[0] > 0 else len(sv)


def spectral_abscissa(M, exclude_structural: bool = True) -> float:
    """Largest real part among the eigenvalues of ``M``.

    With ``exclude_structural`` the ``k`` eigenvalues closest to zero are
    dropped, ``k`` being the nullity of ``M``.  Such zeros come from
    conserved combinations of feather angles and carry no dynamics.
    """
    ev = np.linalg.eigvals(M)
    if exclude_structural:
        k = structural_nullity(M)
        ev = ev[np.argsort(np.abs(ev), kind="stable")][k:]
    return float(ev.real.max()) if ev.size else -np.inf


def tune_gains(
    ss: StateSpace,
    cfg: ControlConfig,
    topo: Topology | None,
    gp: GoalParams,
    groups: Sequence[int],
    starts: Sequence[float] = (-3.0, 0.0, 3.0, 6.0),
    max_iter: int = 1500,
    log_bounds: tuple[float, float] = (-7.0, 7.0),
    max_modulus: float | None = None,
) -> tuple[np.ndarray, float]:
    """Choose per-group gains minimising the closed-loop spectral abscissa.

    Feathers sharing a ``groups`` label share a gain.  Each start seeds a
    Nelder-Mead search over log-gains; the best result is returned as
    ``(gains, abscissa)``.  Log-gains are clipped to ``log_bounds``.
    ``max_modulus`` caps the largest eigenvalue magnitude, e.g. to keep a
    fixed-step integrator inside its stability region.
    """
    groups = np.asarray(groups)
    labels, inverse = np.unique(groups, return_inverse=True)

    def objective(p):
        g = np.exp(np.clip(p, *log_bounds))[inverse]
        M = closed_loop_matrix(ss, cfg, topo, gp, g)
        excess = 0.0 if max_modulus is None else max(0.0, np.abs(np.linalg.eigvals(M)).max() - max_modulus)
        return spectral_abscissa(M) + excess

    best = None
    for s in starts:
        res = minimize(objective, np.full(len(labels), s), method="Nelder-Mead", options={"maxiter": max_iter})
        if best is None or res.fun < best.fun:
            best = res
    gains = np.exp(np.clip(best.x, *log_bounds))[inverse]
    return gains, spectral_abscissa(closed_loop_matrix(ss, cfg, topo, gp, gains))
