import numpy as np
import pytest

from rksens.butcher import make_tableau
from rksens.irk import NewtonOpts
from rksens.models import make_algebraic_test, make_chain, make_linear_test, steady_state

# tolerance-converged Newton with per-iteration refactorization: the setting
# under which IFT sensitivities are exact derivatives of the computed map
TIGHT = NewtonOpts(max_iters=50, tol=1e-13, freeze_jacobian=False)


@pytest.fixture(scope="session")
def linear():
    return make_linear_test(-1.0)


@pytest.fixture(scope="session")
def dae():
    return make_algebraic_test()


@pytest.fixture(scope="session")
def chain3():
    return make_chain(3)


@pytest.fixture(scope="session")
def chain5():
    return make_chain(5)


@pytest.fixture(scope="session")
def chain3_eq(chain3):
    return steady_state(chain3, np.zeros(3), chain3.ref_state)


@pytest.fixture(scope="session")
def gl1():
    return make_tableau("gauss-legendre", 1)


@pytest.fixture(scope="session")
def gl2():
    return make_tableau("gauss-legendre", 2)


@pytest.fixture(scope="session")
def gl4():
    return make_tableau("gauss-legendre", 4)


@pytest.fixture(scope="session")
def radau2():
    return make_tableau("radau-iia", 2)


@pytest.fixture(scope="session")
def rk4():
    return make_tableau("rk4")
