import numpy as np
import pytest

from normcount.densities import MData, augment_mdata
from normcount.fields import load_field


@pytest.fixture(scope="session")
def zeta8():
    return load_field("builtin:zeta8")


@pytest.fixture(scope="session")
def zeta5():
    return load_field("builtin:zeta5")


@pytest.fixture(scope="session")
def sqrt23():
    return load_field("builtin:sqrt2_sqrt3")


@pytest.fixture(scope="session")
def zeta8_mdata(zeta8):
    return augment_mdata(zeta8, MData.trivial(4))


@pytest.fixture(scope="session")
def micro_config(zeta8):
    """A small zeta8 experiment with nonzero counts, shared by tests."""
    from normcount.counting import make_experiment
    uc = np.array([1.0, 0.35, -0.2, 0.3])
    return make_experiment(zeta8, V=9, H0=1, G=3.1, u_center=uc, seed=3,
                           Q=2, push_samples=6 * 10**5)


@pytest.fixture(scope="session")
def micro_family(zeta8, micro_config):
    from normcount.approx import alpha_family
    return alpha_family(zeta8, micro_config.wf, micro_config.mdata,
                        micro_config.Q, push_samples=6 * 10**5, seed=4)


@pytest.fixture(scope="session")
def micro_bl(micro_config):
    from normcount.counting import beta_lambda
    return beta_lambda(micro_config)
