import numpy as np
import pytest
from hypothesis import settings

from ibexp.exponents import SourceModel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_joint(rng, shape, alpha=1.0):
    return rng.dirichlet(np.full(int(np.prod(shape)), alpha)).reshape(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bsc_model():
    """Uniform Y observed through a crossover-0.1 channel."""
    return SourceModel.from_array([[0.45, 0.05], [0.05, 0.45]])


@pytest.fixture
def asym_model():
    return SourceModel.from_array([[0.55, 0.05], [0.1, 0.3]])


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
