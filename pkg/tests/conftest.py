import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

np.seterr(under="ignore")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_right():
    from stabmesh.mesh import ElementGeometry

    return ElementGeometry.from_points((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))


@pytest.fixture
def verdict(request):
    """Print and record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def emit(k: int, ok: bool, msg: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {msg}"
        print(line)
        lines.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
