import numpy as np
import pytest

from gkpsim.circuit import READOUT_STATES, TOMOGRAPHY_STATES, prepare_state
from gkpsim.code import GridParams, default_frame
from gkpsim.oscillator import Conventions


@pytest.fixture(scope="session")
def conv():
    return Conventions(256)


@pytest.fixture(scope="session")
def params():
    return GridParams()


@pytest.fixture(scope="session")
def frame(params):
    return default_frame(params)


@pytest.fixture(scope="session")
def tomography_states(params, conv):
    return {r.name: prepare_state(r, params, conv) for r in TOMOGRAPHY_STATES}


@pytest.fixture(scope="session")
def readout_states(params, conv):
    return {r.name: prepare_state(r, params, conv) for r in READOUT_STATES}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(rng, dim, nmax=12):
    psi = np.zeros(dim, dtype=complex)
    psi[:nmax] = rng.normal(size=nmax) + 1j * rng.normal(size=nmax)
    return psi / np.linalg.norm(psi)


def random_density(rng, dim, nmax=10, rank=3):
    vecs = [random_state(rng, dim, nmax) for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    return sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vecs))
