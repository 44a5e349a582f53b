import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chlab.soliton import build_profile
from chlab.spectral import Grid

settings.register_profile(
    "chlab",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("chlab")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid1024():
    return Grid(1024, 80.0)


@pytest.fixture(scope="session")
def grid512():
    return Grid(512, 80.0)


@pytest.fixture(scope="session")
def prof4(grid1024):
    return build_profile(4.0, 1.0, grid1024)


@pytest.fixture(scope="session")
def prof4_512(grid512):
    return build_profile(4.0, 1.0, grid512)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def band_limited(grid, rng, kmax=3.0, width=None):
    """Smooth random field with Gaussian spectrum, optionally localized."""
    k = grid.k
    coef = (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)) * np.exp(-((k / kmax) ** 2))
    coef[0] = coef[0].real
    coef[-1] = 0.0
    f = np.fft.irfft(coef, n=grid.n)
    if width is not None:
        f = f * np.exp(-(((grid.x - grid.center) / width) ** 2))
    return f / np.max(np.abs(f))
