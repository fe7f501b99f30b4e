from dataclasses import replace

import numpy as np
import pytest

from flutterlab.control import ControlConfig
from flutterlab.errors import BracketError, ConfigurationError, NumericalDivergenceError
from flutterlab.simulation import (
    ABORTED,
    COMPLETED,
    Plant,
    SimRecord,
    SpeedProfile,
    find_flutter_speed,
    flutter_margin,
    frequency_scan,
    integrate,
    metrics,
    scenario_variant,
    sweep,
)
from flutterlab.wing import build_mode_shapes

from conftest import make_wing


def uncontrolled(sc, V, **kw):
    return replace(sc, speed=SpeedProfile(V), control=replace(sc.control, law="none"), **kw)


def terminal(sc, dt, T, V=0.0):
    s = uncontrolled(sc, V, dt=dt, T=T, output_stride=int(round(T / dt)))
    return integrate(s).x[-1]


# integration ---------------------------------------------------------------

def test_zero_speed_conserves_energy(ref_scenario):
    s = uncontrolled(ref_scenario, 0.0, dt=2.5e-4, T=2.5, output_stride=1, E_abort=1e300)
    rec = integrate(s)
    assert rec.n_rows == 10_001
    assert np.max(np.abs(rec.E - rec.E[0])) / rec.E[0] < 1e-6


def test_subcritical_run_decays(ref_scenario, ref_values):
    rec = integrate(uncontrolled(ref_scenario, 0.5 * ref_values["V_flat"]))
    assert rec.status == COMPLETED
    assert rec.E[-1] < rec.E[0]


def test_rk4_convergence_order(ref_scenario):
    ref = terminal(ref_scenario, 1.25e-4, 1.0)
    errs = [np.linalg.norm(terminal(ref_scenario, dt, 1.0) - ref) for dt in (2e-3, 1e-3, 5e-4)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.8)


def test_step_halving_short_horizon(ref_scenario, ref_values):
    # 25 steps at dt = 8e-4; over long horizons the torsion phase error dominates
    V = 0.5 * ref_values["V_flat"]
    a, b = terminal(ref_scenario, 8e-4, 0.02, V), terminal(ref_scenario, 4e-4, 0.02, V)
    assert np.linalg.norm(a - b) / np.linalg.norm(b) < 1e-6


def test_record_shape_and_time(ref_scenario):
    s = replace(ref_scenario, T=0.5, output_stride=10)
    rec = integrate(s)
    assert rec.n_rows == 51
    assert np.all(np.diff(rec.t) > 0)
    assert len({len(rec.t), len(rec.x), len(rec.beta), len(rec.u), len(rec.E), len(rec.L), len(rec.L_tilde)}) == 1


def test_saturation_keeps_angles_in_box(ref_scenario):
    s = replace(ref_scenario, T=2.0, x0=(0.2, 0.0, 0.1, 0.0), E_abort=1e12, control=replace(ref_scenario.control, law="B"))
    rec = integrate(s)
    lo = np.array([f.beta_min for f in s.feathers])
    hi = np.array([f.beta_max for f in s.feathers])
    assert np.all(rec.beta >= lo) and np.all(rec.beta <= hi)


def test_beta0_is_clamped(ref_scenario):
    s = replace(ref_scenario, T=0.01, beta0=tuple([0.5, 0.1] * 4), control=replace(ref_scenario.control, law="none"))
    b = integrate(s).beta[0]
    assert b[0] == 0.3 and b[1] == 0.0


def test_abort_on_energy(ref_scenario, ref_values):
    rec = integrate(uncontrolled(ref_scenario, ref_values["V_test"]))
    assert rec.status == ABORTED
    assert rec.E[-1] > ref_scenario.E_abort
    assert rec.t[-1] < ref_scenario.T


def test_non_finite_state_raises(ref_scenario):
    s = replace(ref_scenario, dt=0.05, T=200.0, E_abort=np.inf, control=replace(ref_scenario.control, law="none"))
    with pytest.raises(NumericalDivergenceError) as info:
        integrate(s)
    assert info.value.step > 0


def test_ramp_profile():
    p = SpeedProfile(100.0, 150.0, 10.0)
    assert p(0) == 100.0 and p(5) == 125.0 and p(20) == 150.0
    assert p.crossing_time(120.0) == pytest.approx(4.0)
    assert p.crossing_time(160.0) is None
    assert SpeedProfile(130.0).crossing_time(120.0) == 0.0
    with pytest.raises(ConfigurationError):
        SpeedProfile(100.0, 150.0)


def test_ramp_run_sets_t_1(ref_scenario, ref_values):
    Vf = ref_values["V_flat"]
    s = replace(ref_scenario, speed=SpeedProfile(0.9 * Vf, 1.1 * Vf, 4.0), T=6.0)
    assert s.t_1 == pytest.approx(2.0)
    met = metrics(integrate(s), s.resolved_goals, s.t_1)
    assert met.t_damp is not None and met.t_damp >= s.t_1


def test_scenario_invariants(ref_scenario):
    with pytest.raises(ConfigurationError):
        replace(ref_scenario, dt=0.0)
    with pytest.raises(ConfigurationError):
        replace(ref_scenario, T=1e-4)
    with pytest.raises(ConfigurationError):
        replace(ref_scenario, E_abort=1.0)


def test_identical_runs_are_bit_identical(ref_scenario):
    s = replace(ref_scenario, T=1.0)
    a, b = integrate(s), integrate(replace(s))
    for name in ("t", "x", "beta", "u", "E", "L", "L_tilde"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


# metrics -------------------------------------------------------------------

def make_record(E, status=COMPLETED, n=2):
    E = np.asarray(E, dtype=float)
    k = len(E)
    z = np.zeros((k, n))
    return SimRecord(np.arange(k) * 0.1, np.zeros((k, 4)), z, z, E, np.zeros(k), np.zeros(k), status, 0.1 * (k - 1), 0.1)


def test_metrics_zero_energy(ref_scenario):
    met = metrics(make_record(np.zeros(5)), ref_scenario.resolved_goals)
    assert met.t_damp == 0.0 and met.hold and met.L_ok and met.Ltilde_ok


def test_metrics_aborted(ref_scenario):
    met = metrics(make_record([1.0, 1e9], status=ABORTED), ref_scenario.resolved_goals)
    assert met.t_damp is None and not met.hold and met.E_max == 1e9


def test_metrics_settling_time():
    from flutterlab.dynamics import GoalParams

    gp = GoalParams(E_star=1.0)
    met = metrics(make_record([0.5, 2.0, 3.0, 0.9, 0.2]), gp)
    assert met.t_damp == pytest.approx(0.3) and met.E_max == 3.0
    assert metrics(make_record([0.5, 2.0, 3.0, 0.9, 0.2]), gp, t_1=0.35).t_damp == pytest.approx(0.4)
    never = metrics(make_record([0.5, 2.0]), gp)
    assert never.t_damp is None and not never.hold


# flutter boundary and frequency scan ---------------------------------------

def test_flutter_speed_brackets(wing, modes, ref_values):
    Vf = find_flutter_speed(wing, modes, 100.0, 170.0)
    assert Vf == pytest.approx(ref_values["V_flat"], rel=1e-9)
    plant = Plant(wing, modes, ())
    assert abs(flutter_margin(plant, Vf)) < 1e-8
    assert flutter_margin(plant, Vf - 1) < 0 < flutter_margin(plant, Vf + 1)


def test_flutter_bracket_error(wing, modes):
    with pytest.raises(BracketError):
        find_flutter_speed(wing, modes, 10.0, 50.0)


def test_eigen_residuals(plant, ref_values):
    A = plant.uncontrolled_matrix(ref_values["V_flat"])
    ev, vec = np.linalg.eig(A)
    for lam, v in zip(ev, vec.T):
        assert np.linalg.norm(A @ v - lam * v) < 1e-9 * np.linalg.norm(v)


def test_decoupled_wing_assembly():
    wing = make_wing(sigma_T=0.0)
    plant = Plant(wing, build_mode_shapes(wing, 201), ())
    ss = plant.state_space(80.0, with_feathers=False)
    m = ss.modal
    np.testing.assert_allclose(ss.C1, -np.array([m.a13, m.a12, m.b13, m.b12]) / m.a11, rtol=1e-14)
    np.testing.assert_allclose(ss.C2, -np.array([0.0, m.a22, m.b23, m.b22]) / m.b21, rtol=1e-14)


def test_zero_speed_frequencies_solve_quartic(wing, modes):
    scan = frequency_scan(wing, modes, [0.0])
    m = Plant(wing, modes, ()).modal
    # det([[a13 - s a11, -s b11], [-s a21, b23_2 - s b21]]) = 0 with s = w^2
    coeffs = [m.a11 * m.b21 - m.b11 * m.a21, -(m.a13 * m.b21 + m.a11 * m.b23_2), m.a13 * m.b23_2]
    w = np.sort(np.sqrt(np.roots(coeffs).real))
    assert abs(scan.bending[0].real) < 1e-9 * w[0] and abs(scan.torsion[0].real) < 1e-9 * w[1]
    np.testing.assert_allclose(sorted([scan.bending[0].imag, scan.torsion[0].imag]), w, rtol=1e-10)


def test_scan_coalescence(wing, modes, ref_values):
    Vf = ref_values["V_flat"]
    scan = frequency_scan(wing, modes, [0.5 * Vf, 0.95 * Vf])
    assert scan.gap[1] < scan.gap[0]
    np.testing.assert_allclose(scan.gap, [ref_values["gap_0.5"], ref_values["gap_0.95"]], rtol=1e-9)


def test_scan_branches_are_conjugate_symmetric(wing, modes, ref_cfg):
    plant = Plant(wing, modes, ())
    for V in ref_cfg.V_grid:
        ev = np.linalg.eigvals(plant.uncontrolled_matrix(V))
        np.testing.assert_allclose(np.sort_complex(ev), np.sort_complex(np.conj(ev)), atol=1e-12 * np.abs(ev).max())
    scan = frequency_scan(wing, modes, ref_cfg.V_grid)
    assert np.all(scan.bending.imag > 0) and np.all(scan.torsion.imag > 0)


def test_scan_rejects_unsorted_grid(wing, modes):
    with pytest.raises(ConfigurationError):
        frequency_scan(wing, modes, [10.0, 5.0])


# sweeps --------------------------------------------------------------------

def test_sweep_over_laws(ref_scenario):
    out = sweep(replace(ref_scenario, T=0.5), "law", ["A", "B", "C"])
    assert [e.value for e in out] == ["A", "B", "C"]
    assert all(e.metrics is not None and not e.failed for e in out)


def test_sweep_empty(ref_scenario):
    assert sweep(ref_scenario, "V", []) == []


def test_sweep_unknown_axis(ref_scenario):
    with pytest.raises(ConfigurationError):
        sweep(ref_scenario, "dt", [1e-3])


def test_sweep_records_failures_and_continues(ref_scenario):
    out = sweep(replace(ref_scenario, T=0.2), "N", [4, 0, 8])
    assert [e.failed for e in out] == [False, True, False]
    assert "ConfigurationError" in out[1].error


def test_parallel_sweep_matches_sequential(ref_scenario, ref_values):
    base = replace(ref_scenario, T=1.0)
    values = [0.6 * ref_values["V_flat"], ref_values["V_test"], 0.9 * ref_values["V_flat"], 120.0]
    seq = sweep(base, "V", values, workers=1, keep_records=True)
    par = sweep(base, "V", values, workers=4, keep_records=True)
    assert [e.value for e in par] == values
    for a, b in zip(seq, par):
        assert a.record.x.tobytes() == b.record.x.tobytes()
        assert a.metrics == b.metrics


@pytest.mark.parametrize("law", ["A", "B"])
def test_speed_sweep_across_flutter(ref_scenario, ref_values, law):
    Vf = ref_values["V_flat"]
    base = replace(ref_scenario, T=5.0, control=replace(ref_scenario.control, law=law))
    below, above = sweep(base, "V", [0.8 * Vf, 1.1 * Vf])
    assert below.metrics.t_damp == 0.0
    assert above.metrics.t_damp > 0.0 and above.metrics.hold


def test_scenario_variants(ref_scenario):
    assert scenario_variant(ref_scenario, "gain", 2.0).control.gains(8) == pytest.approx(2 * ref_scenario.control.gains(8))
    assert scenario_variant(ref_scenario, "topology-k", 4).topology_k == 4
    small = scenario_variant(ref_scenario, "N", 3)
    assert small.N == 3 and small.topology.N == 3
