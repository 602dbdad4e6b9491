import numpy as np
import pytest

from tatumscribe import kernels

BACKENDS = sorted(kernels.backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = kernels.backends()[request.param]
    for name in ("gru_forward", "gru_backward", "tatum_pool_forward",
                 "tatum_pool_backward", "peak_pick"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
