import numpy as np
import pytest

from userdp.core import NoiseHook, RngStream


@pytest.fixture
def rng():
    return RngStream(1234, 0)


@pytest.fixture
def zeroed_rng():
    return RngStream(1234, 0, NoiseHook("zeroed"))


def ball_points(gen, n, d, radius, center=None):
    """Uniform points in a ball, drawn without the package's samplers."""
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    g = gen.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return center + g * (radius * gen.random(n) ** (1.0 / d))[:, None]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line(capsys):
    """Print one verdict line immediately and keep it for the end-of-run summary."""

    def emit(line: str):
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
