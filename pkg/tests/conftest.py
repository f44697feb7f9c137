import numpy as np
import pytest

from invariance_lab.core.chains import ArBernoulli, Atom, FiniteChain, StochasticRecursion
from invariance_lab.infra.settings import settings


@pytest.fixture
def two_state():
    return FiniteChain(P=[[0.75, 0.25], [0.25, 0.75]], f=[-0.5, 0.5], x0=0)


@pytest.fixture
def one_step():
    return FiniteChain(P=[[0.5, 0.5], [0.5, 0.5]], f=[-1.0, 1.0], x0=0)


@pytest.fixture
def three_state():
    P = np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.1, 0.5]])
    return FiniteChain(P=P, f=[1.0, -2.0, 0.5], x0=1)


@pytest.fixture
def ar_half():
    return ArBernoulli(alpha=0.5, x0=0.0)


@pytest.fixture
def iid_pm1():
    return ArBernoulli(alpha=0.0, x0=0.0)


@pytest.fixture
def recursion():
    atoms = (Atom(0.3, -1.0, 0.25), Atom(0.3, 1.0, 0.25), Atom(0.5, -1.0, 0.25), Atom(0.5, 1.0, 0.25))
    return StochasticRecursion(atoms=atoms, x0=0.0)


@pytest.fixture
def lab_settings():
    """Временные изменения настроек откатываются после теста."""
    saved = settings.all_settings
    yield settings
    settings._settings.clear()
    settings._settings.update(saved)
