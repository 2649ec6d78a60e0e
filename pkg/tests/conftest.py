import math
import os

import hypothesis
import numpy as np
import pytest
from scipy import integrate as si

from spingas.model import SIGMA_Z, GasParameters, SpinModel
from spingas.potentials import RadialPotential, born_transfer

hypothesis.settings.register_profile("default", max_examples=40, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=300, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def dephasing_model():
    return SpinModel(2, 2, np.zeros((2, 2)), np.kron(SIGMA_Z, SIGMA_Z), [0.5, 0.5])


@pytest.fixture
def square_well():
    return RadialPotential.square_well(0.1)


@pytest.fixture
def gaussian():
    return RadialPotential.gaussian(0.1)


@pytest.fixture
def gas():
    return GasParameters(nu=0.01, theta=100.0, u=0.1)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def random_state(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def sw_gamma_oracle(gas):
    # swap the p and k integrals: the p-integral over [k/2, inf) is elementary
    def f(k):
        b = born_transfer(RadialPotential.square_well(gas.u), k)
        return b * b / k * math.exp(-k * k / (8 * gas.theta))

    kmax = 2 * 12 * math.sqrt(gas.theta)
    pts = np.arange(math.pi / 2, kmax, math.pi / 2)
    tot = sum(si.quad(f, a, b, epsabs=0, epsrel=1e-13)[0] for a, b in zip(np.r_[1e-300, pts], np.r_[pts, kmax]))
    return 32 * math.pi**2 * gas.nu * (2 * math.pi * gas.theta) ** -1.5 * gas.theta * tot
