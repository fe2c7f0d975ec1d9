import numpy as np
import pytest
from hypothesis import settings

from ifecontrol.optimize import build_problem, fixed_point_solve
from ifecontrol.verify import get_case

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def case1():
    return get_case(1)


@pytest.fixture(scope="session")
def case2():
    return get_case(2)


@pytest.fixture(scope="session")
def problem32(case1):
    return build_problem(case1, 32)


@pytest.fixture(scope="session")
def solution32(problem32):
    return fixed_point_solve(problem32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def verdict(request):
    """Record a PASS/FAIL line for the acceptance summary, then fail on problems."""
    lines = request.config.__dict__.setdefault("acceptance_lines", [])

    def record(label, problems):
        line = f"{'PASS' if not problems else 'FAIL'}  {label}" + "".join(f"\n      {p}" for p in problems)
        lines.append(line)
        print(line)
        assert not problems, "; ".join(problems)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
