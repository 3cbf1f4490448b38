import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cfce import kernels
from cfce.scenario import SystemConfig

settings.register_profile("cfce", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cfce")

KERNEL_NAMES = ("sq_inf_threshold", "sq_inf_prox", "sq_inf_prox_batch", "drs_time_step",
                "phase_index", "quantize_phase", "rho_sweep", "rho_sweep_batch")
BACKENDS = tuple(kernels.available_backends())


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the test's duration."""
    impl = kernels.available_backends()[request.param]
    for name in KERNEL_NAMES:
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def desk():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
