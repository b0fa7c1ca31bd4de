from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption(
        "--paper-scale",
        action="store_true",
        default=False,
        help="also run the published-size checks (hours)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--paper-scale"):
        return
    skip = pytest.mark.skip(reason="needs --paper-scale")
    for item in items:
        if "paper_scale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_kraus(rng: np.random.Generator, dim: int, count: int) -> list[np.ndarray]:
    """Random complete set of operation elements from an isometry."""
    v = random_unitary(rng, dim * count)[:, :dim]
    return [v[k * dim:(k + 1) * dim] for k in range(count)]


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[tuple[str, str, str]]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key, status, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"{status:<4} {key}: {detail}")
