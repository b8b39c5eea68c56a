import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def svd_norm(a):
    """Dense singular-value oracle, independent of the eigen-based norm."""
    return float(np.linalg.svd(np.asarray(a, dtype=complex), compute_uv=False)[0])


def loop_inner(x, y):
    """<x, y> summed component by component with explicit products."""
    x, y = np.asarray(x, dtype=complex), np.asarray(y, dtype=complex)
    out = np.zeros(x.shape[-2:], dtype=complex)
    for xi, yi in zip(x, y):
        out += xi @ yi.conj().T
    return out


def loop_norm(x):
    return svd_norm(loop_inner(x, x)) ** 0.5
