import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ngrc_control import (
    DataGenSpec,
    FeatureConfig,
    HenonParams,
    NgrcModel,
    child_rng,
    fit_model,
)

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=30,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def params():
    return HenonParams()


@pytest.fixture(scope="session")
def config():
    return FeatureConfig()


@pytest.fixture(scope="session")
def perfect_model(params, config):
    """Readout carrying the exact map coefficients in feature order
    [c, x, y, x^2, x*y, y^2] with the true control gain."""
    return NgrcModel(
        w_u=np.array([[params.g]]),
        w_x=np.array([[1.0, 0.0, 1.0, -params.a, 0.0, 0.0]]),
        config=config,
        alpha=0.0,
    )


@pytest.fixture(scope="session")
def trained(params):
    """Model fitted by the standard protocol: 10 noiseless samples, searched alpha."""
    rng = child_rng(20260810, "trained-fixture")
    return fit_model(rng, params, DataGenSpec())
