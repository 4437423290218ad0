import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# numba compiles on first call, so per-example deadlines are meaningless here
settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if rep.when != "call":
                continue
            props = dict(rep.user_properties)
            if "measured" in props:
                name = rep.nodeid.split("::")[-1]
                lines.append(f"{outcome.upper():6} {name}: {props['measured']}")
    if lines:
        terminalreporter.section("acceptance measurements")
        for line in sorted(lines, key=lambda l: l.split(" ", 1)[1]):
            terminalreporter.write_line(line)
