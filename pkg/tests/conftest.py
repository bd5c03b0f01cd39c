import numpy as np
import pytest

from bohmstab.config import default_phases
from bohmstab.kernels import KernelSpec
from bohmstab.wavefunction import CoherentState, EigenSuperposition


@pytest.fixture(scope="session")
def coherent():
    return CoherentState(1.0)


@pytest.fixture(scope="session")
def superposition3():
    c = np.exp(1j * default_phases(3))
    return EigenSuperposition(c / np.linalg.norm(c))


@pytest.fixture(scope="session")
def superposition4():
    c = np.exp(1j * default_phases(4))
    return EigenSuperposition(c / np.linalg.norm(c))


@pytest.fixture(scope="session")
def gauss1():
    return KernelSpec("gaussian", 1.0)


@pytest.fixture(scope="session")
def lorentz1():
    return KernelSpec("lorentzian", 1.0)
