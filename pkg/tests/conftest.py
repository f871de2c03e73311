import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from andersonlab.model import DisorderSpec, ModelSpec, assemble_hamiltonian, build_box, sample_disorder

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_chain(n_half: int, seed: int, boundary: str = "periodic", coupling: float = 5.0):
    box = build_box(1, n_half)
    omega = sample_disorder(DisorderSpec(coupling=coupling), box, seed)
    return assemble_hamiltonian(box, omega, boundary)


@pytest.fixture
def triangle():
    return assemble_hamiltonian(build_box(1, 1), [0.0, 0.0, 0.0])


@pytest.fixture
def chain_model():
    return ModelSpec(1, 100, DisorderSpec(coupling=5.0), "simple")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
