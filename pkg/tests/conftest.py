import numpy as np
import pytest

from fluorosim.anatomy import load_template
from fluorosim.config import SimConfig
from fluorosim.simulation import start_sequence

ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


def report_criterion(number: int, passed: bool, detail: str) -> None:
    """Record and print one acceptance line; the terminal summary repeats them."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_RESULTS.append((number, passed, line))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def template():
    return load_template()


@pytest.fixture(scope="session")
def default_config():
    return SimConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def state(template, default_config):
    return start_sequence(np.random.default_rng(99), template, default_config)


@pytest.fixture(scope="session")
def small_corpus(default_config):
    """30 default-config sequences with per-sequence synthetic anatomy."""
    from fluorosim.simulation import sequence_seed, simulate_sequence

    return [simulate_sequence(sequence_seed(77, i), None, default_config, i)[1] for i in range(30)]
