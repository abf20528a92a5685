import numpy as np
import pytest
from scipy import integrate

from herdgibbs.kernels import IsotropicGaussianKernel
from herdgibbs.mixtures import GaussianMixture, random_mixture

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def quad(fn, lo, hi, points=None, epsabs=0.0):
    """Adaptive quadrature at tight tolerances, used as an independent oracle."""
    value, _ = integrate.quad(fn, lo, hi, points=points, epsabs=epsabs, epsrel=1e-12, limit=500)
    return value


def scalar_normal(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


@pytest.fixture
def std_normal_1d():
    return GaussianMixture.single([0.0], [[1.0]])


@pytest.fixture
def bimodal_1d():
    return GaussianMixture([0.5, 0.5], [[-3.0], [3.0]], [[[1.0]], [[1.0]]])


@pytest.fixture
def kern1():
    return IsotropicGaussianKernel(0.1, 1)


@pytest.fixture
def kern2():
    return IsotropicGaussianKernel(0.1, 2)


@pytest.fixture
def fig1_mixture():
    """Five separated 2-d components of mixed shape with balanced weights."""
    means = [[-3.0, -2.0], [2.5, 3.0], [3.0, -2.5], [-2.5, 3.0], [0.0, 0.0]]
    covs = [
        [[0.4, 0.2], [0.2, 0.3]],
        [[0.3, 0.0], [0.0, 0.3]],
        [[0.6, -0.25], [-0.25, 0.2]],
        [[0.15, 0.05], [0.05, 0.5]],
        [[0.3, 0.1], [0.1, 0.3]],
    ]
    return GaussianMixture([0.25, 0.2, 0.2, 0.15, 0.2], means, covs)


@pytest.fixture
def random_2d():
    return random_mixture(11, 2, 5)


@pytest.fixture
def overlapping_2d():
    """Five balanced components whose axis-aligned slices overlap, so coordinate moves connect them."""
    means = [[-2.0, -1.5], [1.5, 2.0], [2.0, -1.5], [-1.5, 1.5], [0.0, 0.0]]
    covs = [
        [[0.6, 0.2], [0.2, 0.5]],
        [[0.5, 0.0], [0.0, 0.5]],
        [[0.8, -0.3], [-0.3, 0.5]],
        [[0.4, 0.1], [0.1, 0.7]],
        [[0.5, 0.15], [0.15, 0.5]],
    ]
    return GaussianMixture([0.25, 0.2, 0.2, 0.15, 0.2], means, covs)
