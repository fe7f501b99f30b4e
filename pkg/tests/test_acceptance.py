"""Acceptance suite on the shipped reference configuration.

Every test prints one ``PASS``/``FAIL`` line for its criterion and then
asserts it at the stated tolerance.
"""

from dataclasses import replace

import numpy as np
import pytest

from flutterlab.checks import (
    check_consensus,
    check_conservation,
    check_descent,
    check_energy,
    check_gradient,
    check_integration_by_parts,
    check_oracle,
)
from flutterlab.config import write_outputs
from flutterlab.control import ControlConfig
from flutterlab.simulation import ABORTED, COMPLETED, Plant, SpeedProfile, find_flutter_speed, flutter_margin, frequency_scan, integrate, metrics, sweep


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>2} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
        return passed

    return emit


def uncontrolled(sc, V):
    return replace(sc, speed=SpeedProfile(V), control=replace(sc.control, law="none"), E_abort=np.inf)


def test_01_oracle_equivalence(plant, ref_values, report):
    Vf = ref_values["V_flat"]
    r = check_oracle(plant, [0.0, 0.5 * Vf, Vf, 1.1 * Vf, 1.5 * Vf], draws=1000, tol=1e-10)
    assert report(1, "rhs matches the second-order oracle", r.passed, f"worst rel {r.worst:.2e}, tol 1e-10")


def test_02_integration_by_parts(plant, report):
    assert plant.modes.grid.size == 1001
    r = check_integration_by_parts(plant, tol=1e-6)
    assert report(2, "strain integrals equal a13 and -b23_2", r.passed, f"worst rel {r.worst:.2e}, tol 1e-6")


def test_03_speed_gradient_descent(ref_scenario, ref_values, report):
    sc = ref_scenario
    gamma = ControlConfig("C", gamma_table=sc.control.gamma_table).gains(sc.N)
    r = check_descent(sc.plant, ref_values["V_test"], sc.topology, sc.resolved_goals, gamma, draws=1000, tol=1e-9)
    assert report(3, "law C descent identity with strict decrease", r.passed, f"worst rel {r.worst:.2e}, tol 1e-9, {r.detail}")


def test_04_gradient(ref_scenario, ref_values, report):
    sc = ref_scenario
    r = check_gradient(sc.plant, ref_values["V_test"], sc.topology, sc.resolved_goals, draws=200, h=1e-6, tol=1e-6)
    assert report(4, "sg_gradient matches central differences", r.passed, f"worst rel {r.worst:.2e}, tol 1e-6")


def test_05_flutter_boundary(ref_cfg, ref_scenario, ref_values, report):
    sc = ref_scenario
    Vf = find_flutter_speed(sc.wing, sc.modes, ref_cfg.V_lo, ref_cfg.V_hi)
    plant = Plant(sc.wing, sc.modes, ())
    alpha = flutter_margin(plant, Vf)
    runs = {}
    for factor in (0.95, 1.05):
        rec = integrate(uncontrolled(sc, factor * Vf))
        runs[factor] = (rec.status, rec.t[-1], rec.E[-1] / rec.E[0])
    decays = runs[0.95][0] == COMPLETED and runs[0.95][2] < 1.0
    grows = runs[1.05][0] == COMPLETED and runs[1.05][2] > 10.0
    eig_agree = flutter_margin(plant, 0.95 * Vf) < 0 < flutter_margin(plant, 1.05 * Vf)
    ok = abs(alpha) < 1e-8 and decays and grows and eig_agree and runs[0.95][1] == runs[1.05][1] == 20.0
    detail = f"V_flat={Vf:.6f}, |alpha|={abs(alpha):.1e}, E(T)/E(0) = {runs[0.95][2]:.3g} at 0.95 and {runs[1.05][2]:.3g} at 1.05"
    assert report(5, "flutter speed converges and time-domain verdicts agree", ok, detail)
    assert Vf == pytest.approx(ref_values["V_flat"], rel=1e-9)


def test_06_frequency_coalescence(ref_scenario, ref_values, report):
    sc = ref_scenario
    Vf = ref_values["V_flat"]
    scan = frequency_scan(sc.wing, sc.modes, [0.5 * Vf, 0.95 * Vf])
    ok = scan.gap[1] < scan.gap[0]
    assert report(6, "bending/torsion frequency gap narrows toward V_flat", ok, f"gap {scan.gap[0]:.4f} -> {scan.gap[1]:.4f} rad/s")


def test_07_suppression(ref_scenario, ref_values, report):
    sc = ref_scenario
    assert sc.speed.V0 == pytest.approx(1.1 * ref_values["V_flat"], rel=1e-12)
    results = {}
    for law in ("none", "A", "B", "C"):
        s = replace(sc, control=replace(sc.control, law=law))
        rec = integrate(s)
        results[law] = (rec.status, metrics(rec, s.resolved_goals, s.t_1))
    controlled = all(
        st == COMPLETED and m.t_damp is not None and m.hold and m.T == 20.0
        for st, m in (results[k] for k in "ABC")
    )
    ok = controlled and results["none"][0] == ABORTED
    detail = ", ".join(f"{k}: t_damp={results[k][1].t_damp}" for k in "ABC") + f", none: {results['none'][0]}"
    assert report(7, "laws A, B, C hold E <= E_star at 1.1 V_flat; uncontrolled diverges", ok, detail)


def test_08_consensus(report):
    r = check_consensus(sizes=(4, 8, 16), kinds=("ring", "complete"), tol=1e-9)
    assert report(8, "consensus flow conserves sum(beta) and shrinks disagreement", r.passed, f"worst drift {r.worst:.2e}/s, {r.detail}")


def test_09_energy(ref_scenario, report):
    pd = check_energy(ref_scenario.plant, samples=100_000)
    cons = check_conservation(ref_scenario, steps=10_000, tol=1e-6)
    ok = pd.passed and cons.passed
    assert report(9, "energy positive definite and conserved at V = 0", ok, f"min unit energy {pd.worst:.3g}, drift {cons.worst:.2e}")


def test_10_determinism(ref_cfg, ref_scenario, tmp_path, report):
    sc = replace(ref_scenario, T=5.0)

    def csv_bytes(rec, where):
        write_outputs(rec, metrics(rec, sc.resolved_goals, sc.t_1), where, ref_cfg)
        return (where / "timeseries.csv").read_bytes()

    a = csv_bytes(integrate(sc), tmp_path / "a")
    b = csv_bytes(integrate(sc), tmp_path / "b")
    laws = ["A", "B", "C", "none"]
    seq = sweep(sc, "law", laws, workers=1, keep_records=True)
    par = sweep(sc, "law", laws, workers=4, keep_records=True)
    same_sweep = all(
        csv_bytes(s.record, tmp_path / f"s{i}") == csv_bytes(p.record, tmp_path / f"p{i}") for i, (s, p) in enumerate(zip(seq, par))
    )
    assert report(10, "repeated and parallel runs give byte-identical CSV", a == b and same_sweep, f"{len(laws)} parallel scenarios")
