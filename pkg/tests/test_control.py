from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from flutterlab.control import (
    ControlConfig,
    Topology,
    agent_view,
    build_topology,
    closed_loop_matrix,
    control,
    feedback_gains,
    law_A,
    law_B,
    law_C,
    saturate,
    sg_gradient,
    sinkhorn,
    spectral_abscissa,
    structural_nullity,
)
from flutterlab.dynamics import GoalParams, anchor_modes, ltilde_rate, rhs, PlantState
from flutterlab.errors import ConfigurationError, TopologyError
from flutterlab.feathers import FeatherSpec


def line(n, side="lower"):
    return [FeatherSpec(i + 1, side, float(i), i + 1.0, 0.0, 1.0, 0.0, 0.3) for i in range(n)]


@pytest.fixture(scope="module")
def ss(plant, ref_values):
    return plant.state_space(ref_values["V_test"])


@pytest.fixture(scope="module")
def gp(ref_scenario):
    return ref_scenario.resolved_goals


# topology ------------------------------------------------------------------

def test_complete_graph_weights():
    W = build_topology(line(4), "complete").weights
    off = ~np.eye(4, dtype=bool)
    assert np.all(W[off] == 1 / 3) and np.all(np.diag(W) == 0)
    assert np.array_equal(W, W.T)


def test_ring_weights():
    topo = build_topology(line(6), "ring", 2)
    for i, nb in enumerate(topo.neighbors):
        assert sorted(nb) == sorted([(i - 1) % 6, (i + 1) % 6])
        assert np.all(topo.weights[i, nb] == 0.5)


def test_ring_follows_span_order():
    fs = line(6)[::-1]
    topo = build_topology(fs, "ring", 2)
    # list index 0 is the outboard feather; its span neighbour is index 1
    assert 1 in topo.neighbors[0] and 5 in topo.neighbors[0]


def test_irregular_grid_is_balanced(ref_cfg):
    topo = build_topology(ref_cfg.feathers, "grid", 2)
    A = topo.weights > 0
    assert len(set(A.sum(axis=1))) > 1  # really irregular
    assert np.array_equal(topo.weights, topo.weights.T)
    np.testing.assert_allclose(topo.weights.sum(axis=1), 1.0, atol=1e-9)


def test_sinkhorn_failure_raises():
    star = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float)
    with pytest.raises(TopologyError, match="Sinkhorn"):
        sinkhorn(star)


@pytest.mark.parametrize(
    "kind, k, n",
    [("ring", 0, 4), ("ring", 4, 4), ("mesh", 2, 4), ("complete", 2, 1)],
)
def test_topology_preconditions(kind, k, n):
    with pytest.raises(TopologyError):
        build_topology(line(n), kind, k)


def test_topology_invariants():
    with pytest.raises(TopologyError):
        Topology(np.array([[0, 1.0], [0.5, 0]]))
    with pytest.raises(TopologyError):
        Topology(np.array([[1.0, 0], [0, 1.0]]))
    with pytest.raises(TopologyError):
        Topology(np.array([[0, 0.5], [0.5, 0]]))


def test_laplacian_rows_sum_to_zero(ref_scenario):
    L = ref_scenario.topology.laplacian
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-15)


# laws ----------------------------------------------------------------------

def test_law_A_examples(ss):
    g = np.linspace(0.5, 2.0, ss.N)
    assert np.all(law_A(np.zeros(4), ss, g) == 0)
    np.testing.assert_array_equal(law_A(np.array([1.0, 0, 0, 0]), ss, g), -g * ss.mu)


def test_law_B_examples(ss, gp):
    g = np.linspace(0.5, 2.0, ss.N)
    x = np.array([0.3, -1.0, 0.2, 4.0])
    assert np.all(law_B(np.zeros(4), ss, g, gp) == 0)
    assert np.all(law_B(x, ss, g, GoalParams(0.0, 0.0)) == 0)
    np.testing.assert_array_equal(law_B(np.array([0, 0, 1.0, 0]), ss, g, gp), -g * (gp.lambda_ * ss.s2))


def test_law_C_examples(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    g = np.linspace(0.5, 2.0, ss.N)
    assert np.all(law_C(np.zeros(4), np.full(ss.N, 0.1), topo, ss, g, gp) == 0)
    beta = rng.uniform(0, 0.3, ss.N)
    u = law_C(np.array([0.4, 0.0, -0.1, 0.0]), beta, topo, ss, g, gp)
    assert np.any(u != 0)  # consensus keeps acting at zero modal rates
    assert np.sum(u / g) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(ValueError):
        law_C(np.zeros(4), beta[:-1], topo, ss, g, gp)


def test_law_C_position_form(ss, gp, ref_scenario):
    topo = ref_scenario.topology
    g = np.ones(ss.N)
    x = np.array([0.2, 0.0, -0.1, 0.0])
    u = law_C(x, np.zeros(ss.N), topo, ss, g, gp, form="positions")
    np.testing.assert_allclose(u, -(gp.chi * ss.s1 * 0.2 - gp.lambda_ * ss.s2 * 0.1), rtol=1e-15)


def test_descent_identity(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    g = np.linspace(0.5, 3.0, ss.N)
    zero = np.zeros(ss.N)
    for _ in range(200):
        x = rng.normal(size=4)
        beta = rng.uniform(-0.3, 0.3, ss.N)
        grad = sg_gradient(x, beta, topo, ss, gp)
        lhs = ltilde_rate(ss, x, beta, law_C(x, beta, topo, ss, g, gp), topo.weights, gp)
        r0 = ltilde_rate(ss, x, beta, zero, topo.weights, gp)
        drop = np.sum(g * grad**2)
        assert lhs == pytest.approx(r0 - drop, rel=1e-9, abs=1e-12 * max(abs(r0), drop))
        assert lhs < r0


def test_gradient_finite_difference(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    h = 1e-6
    for _ in range(20):
        x = rng.normal(size=4)
        beta = rng.uniform(-0.3, 0.3, ss.N)
        u0 = rng.normal(size=ss.N)
        fd = np.array(
            [
                (ltilde_rate(ss, x, beta, u0 + h * e, topo.weights, gp) - ltilde_rate(ss, x, beta, u0 - h * e, topo.weights, gp)) / (2 * h)
                for e in np.eye(ss.N)
            ]
        )
        grad = sg_gradient(x, beta, topo, ss, gp)
        assert np.linalg.norm(fd - grad) <= 1e-6 * np.linalg.norm(grad)


def test_gradient_examples(ss, gp, ref_scenario):
    topo = ref_scenario.topology
    assert np.all(sg_gradient(np.zeros(4), np.full(ss.N, 0.2), topo, ss, gp) == 0)
    x = np.array([0.0, 1.0, 0.0, -2.0])
    beta = np.linspace(0, 0.3, ss.N)
    doubled = SimpleNamespace(s1=2 * ss.s1, s2=2 * ss.s2, N=ss.N)
    base = sg_gradient(x, beta, topo, ss, gp)
    cons = sg_gradient(np.zeros(4), beta, topo, ss, gp)
    np.testing.assert_allclose(sg_gradient(x, beta, topo, doubled, gp) - cons, 2 * (base - cons), rtol=1e-13)


def test_per_agent_evaluation_matches_vectorised(ss, gp, ref_scenario, rng):
    sc = ref_scenario
    topo = sc.topology
    fa, pa = anchor_modes(sc.modes, sc.feathers)
    g = np.linspace(0.5, 3.0, ss.N)
    x = rng.normal(size=4)
    beta = rng.uniform(-0.3, 0.3, ss.N)

    def one(i):
        view = agent_view(i, x, beta, topo, fa, pa)
        np.testing.assert_array_equal(view.w_i, view.Phi_i * x)
        cons = sum(topo.weights[i, j] * (view.beta_i - b) for j, b in view.neighbor_beta.items())
        return -g[i] * (gp.chi * ss.s1[i] * x[1] + gp.lambda_ * ss.s2[i] * x[3]) - 2 * g[i] * cons

    with ThreadPoolExecutor(4) as pool:
        parallel = np.array(list(pool.map(one, range(ss.N))))
    sequential = np.array([one(i) for i in range(ss.N)])
    np.testing.assert_array_equal(parallel, sequential)
    np.testing.assert_allclose(parallel, law_C(x, beta, topo, ss, g, gp), rtol=1e-12, atol=1e-15)


def test_control_dispatch(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    x = rng.normal(size=4)
    beta = rng.uniform(0, 0.3, ss.N)
    assert np.all(control(ControlConfig("none"), x, beta, ss, topo, gp) == 0)
    g = np.ones(ss.N)
    np.testing.assert_array_equal(control(ControlConfig("A"), x, beta, ss, topo, gp), law_A(x, ss, g))
    np.testing.assert_array_equal(control(ControlConfig("C"), x, beta, ss, topo, gp), law_C(x, beta, topo, ss, g, gp))


def test_feedback_gains_reproduce_laws(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    x = rng.normal(size=4)
    beta = rng.uniform(0, 0.3, ss.N)
    for law in "ABC":
        cfg = ControlConfig(law, gamma=tuple(np.linspace(0.5, 2, ss.N)))
        Kx, Kb = feedback_gains(cfg, ss, topo, gp)
        np.testing.assert_allclose(Kx @ x + Kb @ beta, control(cfg, x, beta, ss, topo, gp), rtol=1e-12, atol=1e-15)


def test_closed_loop_matrix_matches_rhs(ss, gp, ref_scenario, rng):
    topo = ref_scenario.topology
    cfg = ControlConfig("C", gamma=tuple(np.ones(ss.N)))
    M = closed_loop_matrix(ss, cfg, topo, gp)
    x = rng.normal(size=4)
    beta = rng.uniform(0, 0.3, ss.N)
    u = control(cfg, x, beta, ss, topo, gp)
    np.testing.assert_allclose(M @ np.concatenate([x, beta]), rhs(ss, PlantState(0.0, x, beta), u), rtol=1e-12)


def test_control_config_validation():
    with pytest.raises(ConfigurationError):
        ControlConfig("D")
    with pytest.raises(ConfigurationError):
        ControlConfig("A", gamma=(1.0, 0.0))
    with pytest.raises(ConfigurationError):
        ControlConfig("C", law_c_form="accelerations")
    with pytest.raises(ConfigurationError):
        ControlConfig("A", gamma=(1.0, 2.0)).gains(3)
    assert np.all(ControlConfig("B").gains(3) == 1.0)
    assert ControlConfig("B", gamma_table={"B": (2.0, 3.0)}).gains(2).tolist() == [2.0, 3.0]


# saturation ----------------------------------------------------------------

def test_saturate_examples():
    fs = [FeatherSpec(1, "lower", 0, 1, 0, 1, 0.0, 0.3), FeatherSpec(2, "upper", 0, 1, 0, 1, -0.3, 0.0)]
    assert saturate([0.3, -0.1], [1.0, 1.0], fs).tolist() == [0.0, 1.0]
    assert saturate([0.1, -0.1], [-2.0, 5.0], fs).tolist() == [-2.0, 5.0]
    assert saturate([0.0, -0.3], [-1.0, -1.0], fs).tolist() == [0.0, 0.0]
    assert saturate([0.0, 0.0], [1.0, 1.0], fs).tolist() == [1.0, 0.0]
    assert saturate([0.5], [0.5], lo=np.array([0.0]), hi=np.array([1.0])).tolist() == [0.5]


# stability analysis --------------------------------------------------------

def test_structural_nullity():
    assert structural_nullity(np.diag([1.0, 2.0, 0.0])) == 1
    assert structural_nullity(np.zeros((2, 2))) == 2


def test_spectral_abscissa_drops_structural_zeros():
    M = np.diag([-1.0, 0.0, -2.0])
    assert spectral_abscissa(M) == -1.0
    assert spectral_abscissa(M, exclude_structural=False) == 0.0


@pytest.mark.parametrize("law", ["A", "B", "C"])
def test_shipped_gains_stabilise(ss, gp, ref_scenario, ref_values, law):
    cfg = replace(ref_scenario.control, law=law)
    M = closed_loop_matrix(ss, cfg, ref_scenario.topology, gp)
    alpha = spectral_abscissa(M)
    assert alpha < 0
    assert alpha == pytest.approx(ref_values["closed_loop_abscissa"][law], rel=1e-6)


def test_open_loop_is_unstable(ss, gp, ref_values):
    M = closed_loop_matrix(ss, ControlConfig("none"), None, gp)
    assert np.linalg.eigvals(ss.A4).real.max() == pytest.approx(ref_values["open_loop_abscissa"], rel=1e-9)
    assert np.linalg.eigvals(M).real.max() > 0
