"""Property suites run by ``flutterlab check``.

Each check draws random states from a seeded generator and returns a
:class:`CheckResult` with the worst observed error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from types import SimpleNamespace
from typing import Callable

import numpy as np

from .control import ControlConfig, Topology, build_topology, law_C, sg_gradient
from .dynamics import GoalParams, PlantState, assemble, disagreement, energy_matrix, ltilde_rate, rhs, rhs_oracle
from .feathers import FeatherSpec
from .simulation import Plant, Scenario, SpeedProfile, integrate
from .wing import bending_strain_integral, evaluate_at_speed, torsion_strain_integral


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} {self.detail}".rstrip()


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(b), np.linalg.norm(a), np.finfo(float).tiny)
    return float(np.linalg.norm(a - b) / scale)


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _random_state(rng, n):
    x = rng.normal(size=4) * np.array([0.05, 1.0, 0.02, 1.0])
    beta = rng.uniform(-0.3, 0.3, size=n)
    return x, beta


def check_oracle(plant: Plant, speeds, draws: int = 1000, seed: int = 1, tol: float = 1e-10) -> CheckResult:
    """First-order plant against direct solution of the second-order system."""
    rng = np.random.default_rng(seed)
    n = len(plant.coeffs)
    worst = 0.0
    for k in range(draws):
        V = float(speeds[k % len(speeds)])
        modal = evaluate_at_speed(plant.modal, V)
        ss = assemble(modal, plant.coeffs, V)
        x, beta = _random_state(rng, n)
        u = rng.normal(size=n)
        st = PlantState(0.0, x, beta)
        worst = max(worst, rel_err(rhs(ss, st, u), rhs_oracle(modal, plant.coeffs, st, u)))
    return CheckResult("rhs matches second-order oracle", worst <= tol, worst, tol, f"draws={draws}")


def check_integration_by_parts(plant: Plant, tol: float = 1e-6) -> CheckResult:
    """Weak and strong forms of the stiffness integrals agree."""
    e1 = abs(bending_strain_integral(plant.wing, plant.modes) - plant.modal.a13) / abs(plant.modal.a13)
    e2 = abs(torsion_strain_integral(plant.wing, plant.modes) + plant.modal.b23_2) / abs(plant.modal.b23_2)
    worst = max(e1, e2)
    return CheckResult("integration-by-parts identities", worst <= tol, worst, tol, f"bending={e1:.2e} torsion={e2:.2e}")


def check_descent(plant: Plant, V: float, topo: Topology, gp: GoalParams, gamma, draws: int = 1000, seed: int = 2, tol: float = 1e-9) -> CheckResult:
    """Law C lowers the rate of the extended functional by ``sum gamma g^2``."""
    rng = np.random.default_rng(seed)
    ss = plant.state_space(V)
    n = ss.N
    zero = np.zeros(n)
    worst, strict = 0.0, True
    for _ in range(draws):
        x, beta = _random_state(rng, n)
        u = law_C(x, beta, topo, ss, gamma, gp)
        g = sg_gradient(x, beta, topo, ss, gp)
        lhs = ltilde_rate(ss, x, beta, u, topo.weights, gp)
        r0 = ltilde_rate(ss, x, beta, zero, topo.weights, gp)
        drop = float(np.sum(gamma * g**2))
        scale = max(abs(lhs), abs(r0), drop, np.finfo(float).tiny)
        worst = max(worst, abs(lhs - (r0 - drop)) / scale)
        if np.any(g != 0) and not lhs < r0:
            strict = False
    return CheckResult("speed-gradient descent identity", worst <= tol and strict, worst, tol, f"strict={strict}")


def check_gradient(plant: Plant, V: float, topo: Topology, gp: GoalParams, draws: int = 200, seed: int = 3, h: float = 1e-6, tol: float = 1e-6) -> CheckResult:
    """Analytic gradient against central finite differences in ``u``."""
    rng = np.random.default_rng(seed)
    ss = plant.state_space(V)
    n = ss.N
    worst = 0.0
    for _ in range(draws):
        x, beta = _random_state(rng, n)
        u0 = rng.normal(size=n)
        fd = np.empty(n)
        for p in range(n):
            e = np.zeros(n)
            e[p] = h
            fd[p] = (ltilde_rate(ss, x, beta, u0 + e, topo.weights, gp) - ltilde_rate(ss, x, beta, u0 - e, topo.weights, gp)) / (2 * h)
        worst = max(worst, rel_err(fd, sg_gradient(x, beta, topo, ss, gp)))
    return CheckResult("gradient matches finite differences", worst <= tol, worst, tol, f"draws={draws}")


def _line_feathers(n: int) -> list[FeatherSpec]:
    return [FeatherSpec(i + 1, "lower", i, i + 1.0, 0.0, 1.0, 0.0, 1.0) for i in range(n)]


def check_consensus(sizes=(4, 8, 16), kinds=("ring", "complete"), steps: int = 2000, dt: float = 1e-3, seed: int = 4, tol: float = 1e-9) -> CheckResult:
    """Pure consensus flow conserves the mean angle and shrinks disagreement."""
    rng = np.random.default_rng(seed)
    worst, monotone = 0.0, True
    gp = GoalParams(0.0, 0.0)
    for n in sizes:
        for kind in kinds:
            topo = build_topology(_line_feathers(n), kind, 2)
            gamma = np.full(n, 1.5)
            idle = SimpleNamespace(s1=np.zeros(n), s2=np.zeros(n), N=n)  # modal channels switched off
            beta = rng.uniform(-0.3, 0.3, size=n)
            total0, dis = beta.sum(), disagreement(beta, topo.weights)
            flow = lambda b: law_C(np.zeros(4), b, topo, idle, gamma, gp)  # noqa: E731
            for _ in range(steps):
                beta = rk4_step(flow, beta, dt)
                d = disagreement(beta, topo.weights)
                if d > dis:
                    monotone = False
                dis = d
            worst = max(worst, abs(beta.sum() - total0) / (steps * dt))
    return CheckResult("consensus flow conserves sum and decreases spread", worst <= tol and monotone, worst, tol, f"monotone={monotone}")


def check_energy(plant: Plant, samples: int = 100_000, seed: int = 5) -> CheckResult:
    """Minimum energy over random unit states is positive."""
    rng = np.random.default_rng(seed)
    P = energy_matrix(plant.modal)
    X = rng.normal(size=(samples, 4))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    e_min = float(np.min(np.einsum("ij,jk,ik->i", X, P, X)))
    return CheckResult("energy positive definite", e_min > 0, e_min, 0.0, "(worst = min energy)")


def check_conservation(sc: Scenario, steps: int = 10_000, dt: float = 2.5e-4, tol: float = 1e-6) -> CheckResult:
    """At zero airspeed with idle feathers the energy is conserved.

    RK4 damps an oscillator of frequency ``w`` by about ``(w dt)^6 / 72``
    per step, so ``dt`` must resolve the torsion mode: at ``w dt = 0.09``
    the drift over ten thousand steps is already of order ``1e-5``.
    """
    s = replace(sc, speed=SpeedProfile(0.0), control=replace(sc.control, law="none"), dt=dt, T=steps * dt, output_stride=1, E_abort=1e300)
    rec = integrate(s)
    drift = float(np.max(np.abs(rec.E - rec.E[0])) / rec.E[0])
    return CheckResult("zero-speed energy conservation", drift < tol, drift, tol, f"steps={steps}")


def run_all(sc: Scenario, quick: bool = False) -> list[CheckResult]:
    """Run every property suite on a scenario's plant."""
    plant = sc.plant
    V = sc.speed.V0
    topo = sc.topology
    gp = sc.resolved_goals
    k = 10 if quick else 1
    results = [
        check_oracle(plant, [0.0, 0.5 * V, V, 1.5 * V], draws=1000 // k),
        check_integration_by_parts(plant),
        check_energy(plant, samples=100_000 // k),
        check_conservation(sc, steps=10_000 // k),
        check_consensus(),
    ]
    if topo is not None:
        gamma = ControlConfig("C", gamma_table=sc.control.gamma_table).gains(sc.N)
        results.insert(2, check_descent(plant, V, topo, gp, gamma, draws=1000 // k))
        results.insert(3, check_gradient(plant, V, topo, gp, draws=200 // k))
    return results
