import pytest

from pvdecay.circadian import CircadianProfile, RedistributionMap
from pvdecay.simulate import default_profile_values

_ACCEPTANCE = []


@pytest.fixture
def sin_profile():
    return CircadianProfile(default_profile_values(), 0.162)


@pytest.fixture
def sin_map(sin_profile):
    return RedistributionMap.from_profile(sin_profile)


def random_map(rng, amplitude=0.6):
    """Map from a random positive profile and a random decycling fraction."""
    m = rng.uniform(1 - amplitude, 1 + amplitude, size=24) * rng.uniform(1, 1e5)
    return RedistributionMap.from_profile(CircadianProfile(m, rng.uniform(0, 0.95)))


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail=""):
        _ACCEPTANCE.append((number, name, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {name}: {detail}")
