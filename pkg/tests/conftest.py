import numpy as np
import pytest

from flutterlab.reference import reference_config, reference_values
from flutterlab.wing import WingParams, build_mode_shapes


@pytest.fixture(scope="session")
def ref_cfg():
    return reference_config()


@pytest.fixture(scope="session")
def ref_values():
    return reference_values()


@pytest.fixture(scope="session")
def ref_scenario(ref_cfg):
    return ref_cfg.scenario()


@pytest.fixture(scope="session")
def plant(ref_scenario):
    return ref_scenario.plant


@pytest.fixture(scope="session")
def wing(ref_cfg):
    return ref_cfg.wing


@pytest.fixture(scope="session")
def modes(wing):
    return build_mode_shapes(wing, 1001)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def make_wing(**overrides):
    params = dict(l=6.0, b=1.8, x0=0.4, sigma_T=0.1, m=100.0, J_m=24.0, EJ=2.7e7, GJ_K=2.8e6, Cy_alpha=2 * np.pi, rho=1.225)
    params.update(overrides)
    return WingParams(**params)
