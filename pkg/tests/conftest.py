import pytest
from hypothesis import HealthCheck, settings

from eafsched.plant import STANDARD_UNIT, homogeneous_plant

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def unit():
    return STANDARD_UNIT


@pytest.fixture
def plant3():
    return homogeneous_plant()


@pytest.fixture
def plant1():
    return homogeneous_plant(1)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance():
    """Records one pass/fail line per acceptance criterion."""

    def record(number: int, name: str, passed: bool | None, detail: str):
        verdict = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"criterion {number:>2} {verdict}  {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
