"""Time integration, flutter boundary search, frequency scans and sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .control import ControlConfig, Topology, build_topology, feather_bounds, feedback_gains, saturate
from .dynamics import GoalParams, StateSpace, assemble, chi_lambda, disagreement, energy_matrix
from .errors import BracketError, ConfigurationError, NumericalDivergenceError
from .feathers import FeatherCoeffs, FeatherSpec, feather_coeffs
from .wing import ModalCoefficients, ModeShapes, WingParams, build_mode_shapes, evaluate_at_speed, modal_integrals

THREADS_ENV = "FLUTTERLAB_THREADS"
COMPLETED = "completed"
ABORTED = "aborted-divergent"
SWEEP_AXES = ("V", "gain", "law", "topology-k", "N")


@dataclass(frozen=True)
class SpeedProfile:
    """Constant airspeed, or a linear ramp from ``V0`` to ``V1`` over ``t_ramp``."""

    V0: float
    V1: float | None = None
    t_ramp: float = 0.0

    def __post_init__(self):
        if self.V0 < 0 or (self.V1 is not None and self.V1 < 0):
            raise ConfigurationError("airspeeds must be non-negative")
        if self.V1 is not None and self.t_ramp <= 0:
            raise ConfigurationError("a ramp needs t_ramp > 0")

    @property
    def is_constant(self) -> bool:
        return self.V1 is None or self.V1 == self.V0

    def __call__(self, t: float) -> float:
        if self.is_constant:
            return self.V0
        return self.V0 + (self.V1 - self.V0) * min(max(t / self.t_ramp, 0.0), 1.0)

    def crossing_time(self, V_flat: float) -> float | None:
        """First time the profile reaches ``V_flat`` (``None`` if never)."""
        if self.V0 >= V_flat:
            return 0.0
        if self.is_constant or self.V1 < V_flat:
            return None
        return self.t_ramp * (V_flat - self.V0) / (self.V1 - self.V0)


class Plant:
    """Speed-independent model data with on-demand state-space assembly."""

    def __init__(self, wing: WingParams, modes: ModeShapes, feathers: Sequence[FeatherSpec]):
        self.wing = wing
        self.modes = modes
        self.feathers = tuple(feathers)
        self.modal: ModalCoefficients = modal_integrals(wing, modes)
        self.coeffs: tuple[FeatherCoeffs, ...] = tuple(feather_coeffs(wing, f, modes) for f in self.feathers)

    def state_space(self, V: float, with_feathers: bool = True) -> StateSpace:
        return assemble(evaluate_at_speed(self.modal, V), self.coeffs if with_feathers else (), V)

    def uncontrolled_matrix(self, V: float) -> np.ndarray:
        return self.state_space(V, with_feathers=False).A4


@dataclass(frozen=True)
class Scenario:
    """Everything needed for one reproducible run.

    ``goals.chi`` and ``goals.lambda_`` are recomputed from the topology
    when ``auto_chi_lambda`` is set.
    """

    wing: WingParams
    feathers: tuple[FeatherSpec, ...]
    control: ControlConfig
    goals: GoalParams
    speed: SpeedProfile
    x0: tuple[float, float, float, float]
    beta0: tuple[float, ...] | None = None
    dt: float = 1e-3
    T: float = 20.0
    output_stride: int = 10
    E_abort: float = 1e6
    topology_kind: str = "complete"
    topology_k: int = 2
    n_grid: int = 1001
    auto_chi_lambda: bool = True
    V_flat: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "feathers", tuple(self.feathers))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.beta0 is not None:
            object.__setattr__(self, "beta0", tuple(float(v) for v in self.beta0))
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T > self.dt:
            raise ConfigurationError("T must exceed dt")
        if self.output_stride < 1:
            raise ConfigurationError("output_stride must be at least 1")
        if not self.E_abort > self.goals.E_star:
            raise ConfigurationError("E_abort must exceed E_star")
        if len(self.x0) != 4:
            raise ConfigurationError("x0 must have four entries")
        if self.beta0 is not None and len(self.beta0) != len(self.feathers):
            raise ConfigurationError("beta0 must have one entry per feather")

    @property
    def N(self) -> int:
        return len(self.feathers)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @cached_property
    def modes(self) -> ModeShapes:
        return build_mode_shapes(self.wing, self.n_grid)

    @cached_property
    def plant(self) -> Plant:
        return Plant(self.wing, self.modes, self.feathers)

    @cached_property
    def topology(self) -> Topology | None:
        if self.N < 2:
            return None
        return build_topology(self.feathers, self.topology_kind, self.topology_k)

    @cached_property
    def resolved_goals(self) -> GoalParams:
        if not self.auto_chi_lambda or self.topology is None:
            return self.goals
        chi, lam = chi_lambda(self.topology, self.modes, self.feathers)
        return replace(self.goals, chi=chi, lambda_=lam)

    @property
    def t_1(self) -> float:
        """Time the speed profile reaches the flutter speed.

        Zero when the flutter speed is unknown or never reached, so a
        subcritical run is judged over its whole horizon.
        """
        if self.V_flat is None:
            return 0.0
        t = self.speed.crossing_time(self.V_flat)
        return 0.0 if t is None else t


@dataclass
class SimRecord:
    """Sampled trajectory of one run."""

    t: np.ndarray
    x: np.ndarray
    beta: np.ndarray
    u: np.ndarray
    E: np.ndarray
    L: np.ndarray
    L_tilde: np.ndarray
    status: str = COMPLETED
    T: float = 0.0
    dt: float = 0.0

    @property
    def n_rows(self) -> int:
        return len(self.t)

    @property
    def N(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class SuppressionMetrics:
    """Outcome of a run judged against the energy and goal thresholds."""

    t_damp: float | None
    E_max: float
    hold: bool
    L_ok: bool
    Ltilde_ok: bool
    status: str = COMPLETED
    T: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            "t_damp": self.t_damp,
            "E_max": self.E_max,
            "hold": self.hold,
            "L_ok": self.L_ok,
            "Ltilde_ok": self.Ltilde_ok,
            "status": self.status,
            "T": self.T,
        }


class _Loop:
    """Closed-loop vector field on the stacked state ``z = (x, beta)``."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.n = sc.N
        self.topo = sc.topology
        self.gp = sc.resolved_goals
        self.gamma = sc.control.gains(self.n)
        self.lo, self.hi = feather_bounds(sc.feathers)
        self.sat = sc.control.saturation and self.n > 0
        self.P = energy_matrix(sc.plant.modal)
        self._cache_V = None
        if sc.speed.is_constant:
            self._set_speed(sc.speed.V0)

    def _set_speed(self, V: float) -> None:
        if V == self._cache_V:
            return
        ss = self.sc.plant.state_space(V)
        n = self.n
        M0 = np.zeros((4 + n, 4 + n))
        M0[:4, :4] = ss.A4
        M0[:4, 4:] = ss.R
        Bu = np.vstack([ss.S, np.eye(n)])
        Kx, Kb = feedback_gains(self.sc.control, ss, self.topo, self.gp, self.gamma)
        self.M0, self.Bu, self.K = M0, Bu, np.hstack([Kx, Kb])
        self._cache_V = V

    def control(self, z: np.ndarray) -> np.ndarray:
        u = self.K @ z
        if self.sat:
            u = saturate(z[4:], u, lo=self.lo, hi=self.hi)
        return u

    def __call__(self, t: float, z: np.ndarray) -> np.ndarray:
        self._set_speed(self.sc.speed(t))
        return self.M0 @ z + self.Bu @ self.control(z)

    def energy(self, z: np.ndarray) -> float:
        x = z[:4]
        return float(x @ self.P @ x)


def integrate(sc: Scenario) -> SimRecord:
    """Fixed-step RK4 with the control re-evaluated at every stage.

    Feather angles are clamped to their limits after each full step when
    saturation is on.  The run stops early, with status
    ``"aborted-divergent"``, once the energy exceeds ``E_abort``.
    """
    loop = _Loop(sc)
    n, dt, stride = sc.N, sc.dt, sc.output_stride
    z = np.concatenate([sc.x0, sc.beta0 if sc.beta0 is not None else np.zeros(n)])
    if loop.sat:
        z[4:] = np.clip(z[4:], loop.lo, loop.hi)
    W = loop.topo.weights if loop.topo is not None else np.zeros((n, n))
    gp = loop.gp
    rows: list[tuple] = []

    def record(t: float, z: np.ndarray) -> None:
        loop._set_speed(sc.speed(t))
        x = z[:4]
        L = 0.5 * (gp.chi * (x[0] ** 2 + x[1] ** 2) + gp.lambda_ * (x[2] ** 2 + x[3] ** 2))
        rows.append((t, x.copy(), z[4:].copy(), loop.control(z), loop.energy(z), L, L + 0.5 * disagreement(z[4:], W)))

    status = COMPLETED
    record(0.0, z)
    # overflow is reported through NumericalDivergenceError instead
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, sc.n_steps + 1):
            t = (step - 1) * dt
            k1 = loop(t, z)
            k2 = loop(t + 0.5 * dt, z + 0.5 * dt * k1)
            k3 = loop(t + 0.5 * dt, z + 0.5 * dt * k2)
            k4 = loop(t + dt, z + dt * k3)
            z = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if loop.sat:
                z[4:] = np.clip(z[4:], loop.lo, loop.hi)
            if not np.all(np.isfinite(z)):
                raise NumericalDivergenceError(f"non-finite state at step {step} (t={step * dt:g} s)", step)
            if loop.energy(z) > sc.E_abort:
                record(step * dt, z)
                status = ABORTED
                break
            if step % stride == 0:
                record(step * dt, z)

    t, x, beta, u, E, L, Lt = (np.array(col) for col in zip(*rows))
    return SimRecord(
        t=t,
        x=x.reshape(-1, 4),
        beta=beta.reshape(len(rows), n),
        u=u.reshape(len(rows), n),
        E=E,
        L=L,
        L_tilde=Lt,
        status=status,
        T=sc.T,
        dt=dt,
    )


def metrics(rec: SimRecord, gp: GoalParams, t_1: float = 0.0) -> SuppressionMetrics:
    """Judge a record against ``E_star``, ``eps_star`` and ``eps_dstar``.

    ``t_damp`` is the earliest sample time at or after ``t_1`` from which
    the energy stays within ``E_star`` up to the end of the record.
    """
    E_max = float(np.max(rec.E)) if rec.E.size else 0.0
    if rec.status != COMPLETED or rec.E.size == 0:
        return SuppressionMetrics(None, E_max, False, False, False, rec.status, rec.T)
    above = rec.E > gp.E_star
    after = rec.t >= t_1
    # last violation at or after t_1; settle at the next sample
    bad = np.flatnonzero(above & after)
    start = np.flatnonzero(after)
    if start.size == 0:
        return SuppressionMetrics(None, E_max, False, False, False, rec.status, rec.T)
    idx = start[0] if bad.size == 0 else bad[-1] + 1
    if idx >= rec.n_rows:
        return SuppressionMetrics(None, E_max, False, False, False, rec.status, rec.T)
    t_damp = float(rec.t[idx])
    tail = rec.t >= t_damp
    L_ok = bool(np.all(rec.L[tail] <= gp.eps_star))
    Lt_ok = bool(np.all(rec.L_tilde[tail] <= gp.eps_dstar))
    return SuppressionMetrics(t_damp, E_max, True, L_ok, Lt_ok, rec.status, rec.T)


def flutter_margin(plant: Plant, V: float) -> float:
    """Spectral abscissa of the uncontrolled 4x4 plant at ``V``."""
    return float(np.linalg.eigvals(plant.uncontrolled_matrix(V)).real.max())


def find_flutter_speed(
    wing: WingParams,
    modes: ModeShapes,
    V_lo: float,
    V_hi: float,
    alpha_tol: float = 1e-8,
    max_iter: int = 200,
) -> float:
    """Airspeed at which the uncontrolled plant becomes neutrally stable.

    Bisects the spectral abscissa until its magnitude drops below
    ``alpha_tol``.  Requires stability at ``V_lo`` and instability at ``V_hi``.
    """
    plant = Plant(wing, modes, ())
    a_lo, a_hi = flutter_margin(plant, V_lo), flutter_margin(plant, V_hi)
    if not (a_lo < 0 < a_hi):
        raise BracketError(f"no stability change in [{V_lo}, {V_hi}]: abscissa {a_lo:.3g} -> {a_hi:.3g}")
    lo, hi = float(V_lo), float(V_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        a = flutter_margin(plant, mid)
        if abs(a) < alpha_tol or mid in (lo, hi):
            return mid
        lo, hi = (mid, hi) if a < 0 else (lo, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class FrequencyScan:
    """Tracked upper-half-plane eigenvalues per airspeed.

    ``bending`` and ``torsion`` hold one complex eigenvalue per grid
    speed; ``ambiguous`` flags rows where tracking could not separate the
    branches cleanly.
    """

    V: np.ndarray
    bending: np.ndarray
    torsion: np.ndarray
    ambiguous: np.ndarray = field(repr=False)

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.bending.imag - self.torsion.imag)

    def rows(self) -> list[tuple[float, float, float, float, float, bool]]:
        return [
            (float(v), float(b.real), float(b.imag), float(t.real), float(t.imag), bool(a))
            for v, b, t, a in zip(self.V, self.bending, self.torsion, self.ambiguous)
        ]


def _upper_pair(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ev, vec = np.linalg.eig(A)
    order = np.lexsort((-ev.real, -ev.imag))[:2]
    return ev[order], vec[:, order]


def frequency_scan(wing: WingParams, modes: ModeShapes, V_grid: Sequence[float], rel_ambiguity: float = 1e-3) -> FrequencyScan:
    """Track the bending and torsion eigenvalue branches over ``V_grid``.

    Branches are labelled at the first speed by which mode dominates the
    eigenvector's energy, then continued by nearest-neighbour matching.
    """
    V_grid = np.asarray(V_grid, dtype=float)
    if V_grid.ndim != 1 or V_grid.size == 0 or np.any(np.diff(V_grid) <= 0):
        raise ConfigurationError("V_grid must be a non-empty ascending sequence")
    plant = Plant(wing, modes, ())
    P = energy_matrix(plant.modal)
    bend = np.empty(V_grid.size, dtype=complex)
    tors = np.empty(V_grid.size, dtype=complex)
    flags = np.zeros(V_grid.size, dtype=bool)
    for k, V in enumerate(V_grid):
        ev, vec = _upper_pair(plant.uncontrolled_matrix(V))
        if k == 0:
            share = [np.real(np.conj(v[:2]) @ P[:2, :2] @ v[:2]) / np.real(np.conj(v) @ P @ v) for v in vec.T]
            b_idx = int(np.argmax(share))
            pair = (ev[b_idx], ev[1 - b_idx])
            flags[k] = abs(share[0] - share[1]) < 0.2
        else:
            prev = np.array([bend[k - 1], tors[k - 1]])
            cost = np.abs(prev[:, None] - ev[None, :])
            _, col = linear_sum_assignment(cost)
            pair = (ev[col[0]], ev[col[1]])
            straight, swapped = cost[0, col[0]] + cost[1, col[1]], cost[0, col[1]] + cost[1, col[0]]
            scale = max(abs(ev[0]), abs(ev[1]), 1.0)
            flags[k] = abs(ev[0] - ev[1]) < rel_ambiguity * scale or abs(swapped - straight) < rel_ambiguity * scale
        bend[k], tors[k] = pair
    return FrequencyScan(V_grid, bend, tors, flags)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def scenario_variant(base: Scenario, axis: str, value) -> Scenario:
    """Copy of ``base`` with one parameter changed."""
    if axis == "V":
        return replace(base, speed=SpeedProfile(float(value)))
    if axis == "gain":
        g = base.control.gains(base.N) * float(value)
        return replace(base, control=replace(base.control, gamma=tuple(g)))
    if axis == "law":
        return replace(base, control=replace(base.control, law=str(value), gamma=None))
    if axis == "topology-k":
        return replace(base, topology_k=int(value))
    if axis == "N":
        n = int(value)
        if not 1 <= n <= base.N:
            raise ConfigurationError(f"N must lie in [1, {base.N}]")
        g = base.control.gains(base.N)[:n]
        beta0 = None if base.beta0 is None else base.beta0[:n]
        return replace(
            base,
            feathers=base.feathers[:n],
            beta0=beta0,
            control=replace(base.control, gamma=tuple(g)),
            topology_k=min(base.topology_k, max(n - 1, 1)),
        )
    raise ConfigurationError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")


@dataclass
class SweepEntry:
    value: Any
    metrics: SuppressionMetrics | None
    record: SimRecord | None = field(default=None, repr=False)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_scenario(sc: Scenario) -> tuple[SimRecord, SuppressionMetrics]:
    rec = integrate(sc)
    return rec, metrics(rec, sc.resolved_goals, sc.t_1)


def sweep(base: Scenario, axis: str, values: Sequence, workers: int | None = None, keep_records: bool = False) -> list[SweepEntry]:
    """Evaluate ``base`` for each value of ``axis``; results follow ``values`` order.

    Failures are captured per entry.  Worker count defaults to the
    ``FLUTTERLAB_THREADS`` environment variable.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}, expected one of {SWEEP_AXES}")
    values = list(values)

    def one(value) -> SweepEntry:
        try:
            rec, met = run_scenario(scenario_variant(base, axis, value))
            return SweepEntry(value, met, rec if keep_records else None)
        except Exception as exc:  # noqa: BLE001 - recorded, sweep continues
            return SweepEntry(value, None, None, f"{type(exc).__name__}: {exc}")

    workers = workers or _threads()
    if workers == 1 or len(values) <= 1:
        return [one(v) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, values))
