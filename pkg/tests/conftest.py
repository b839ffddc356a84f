# tests/conftest.py
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

import config  # noqa: E402
from datagen import synthesize  # noqa: E402
from schema import NoiseModel, ScatterEstimate, SourceConfig  # noqa: E402
from spectrum import SpectralContext, TauMeasure  # noqa: E402
from utils import trial_streams  # noqa: E402
from weightfn import UnitWeight, WeightFunction  # noqa: E402


@pytest.fixture(autouse=True)
def clean_config():
    yield
    config.reset()


@pytest.fixture
def weight():
    return WeightFunction(alpha=0.2, c=0.2)


@pytest.fixture
def dirac_ctx(weight):
    return SpectralContext.build(TauMeasure.dirac(), weight)


@pytest.fixture
def unit_dirac_ctx():
    return SpectralContext.build(TauMeasure.dirac(), UnitWeight(c=0.2))


def make_estimate(eigenvalues, gamma: float = 1.25, ratio: int = 5) -> ScatterEstimate:
    """Diagonal estimate with unit tau_hat; c_n = 1 / ratio."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    N = eigenvalues.size
    n = ratio * N
    tau = np.ones(n)
    return ScatterEstimate(
        matrix=np.diag(eigenvalues).astype(complex),
        eigenvalues=eigenvalues,
        eigenvectors=np.eye(N, dtype=complex),
        weights=np.ones(n),
        quad_forms=gamma * tau,
        gamma_hat=gamma,
        tau_hat=tau,
        residual=0.0,
        iterations=1,
        n_antennas=N,
        n_samples=n,
    )


def two_sources(N: int = 8, n: int = 40, power_db: float = 10.0, noise: NoiseModel = None, seed: int = 5, trial: int = 0):
    sources = SourceConfig.from_degrees([0.0, 20.0], [power_db, power_db])
    noise = NoiseModel.gaussian() if noise is None else noise
    Y, truth = synthesize(sources, noise, N, n, trial_streams(seed, trial))
    return sources, Y, truth
