import numpy as np
import pytest

from frontspeed.energy import Grid, Profile
from frontspeed.potential import make_planar_tilted, make_plateau_scalar, make_tilted_cubic, nagumo_wave
from frontspeed.speed import bisect_speed, constants_for

EXACT_SPEED = np.sqrt(2.0) * 0.25  # tilted cubic, beta = 0.25

_ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """Record one acceptance line; conditions for the same criterion are and-ed."""

    def record(number: int, ok: bool, detail: str) -> bool:
        prev_ok, prev_detail = _ACCEPTANCE.get(number, (True, ""))
        _ACCEPTANCE[number] = (prev_ok and bool(ok), f"{prev_detail}; {detail}" if prev_detail else detail)
        return bool(ok)

    return record


@pytest.fixture(scope="session")
def cubic():
    return make_tilted_cubic(0.25)


@pytest.fixture(scope="session")
def cubic04():
    return make_tilted_cubic(0.4)


@pytest.fixture(scope="session")
def plateau():
    return make_plateau_scalar()


@pytest.fixture(scope="session")
def planar():
    return make_planar_tilted()


@pytest.fixture(scope="session")
def grid40():
    return Grid(-40.0, 40.0, 4001)


@pytest.fixture(scope="session")
def wave_profile(cubic, grid40):
    _, f = nagumo_wave(0.25)
    return Profile.from_function(grid40, f, cubic)


@pytest.fixture(scope="session")
def cubic_constants(cubic):
    return constants_for(cubic)


@pytest.fixture(scope="session")
def cubic_speed(cubic, grid40, cubic_constants):
    return bisect_speed(cubic, grid40, c_tol=1e-4, constants=cubic_constants)


@pytest.fixture(scope="session")
def cubic04_speed(cubic04, grid40):
    return bisect_speed(cubic04, grid40, c_tol=1e-4)


@pytest.fixture(scope="session")
def plateau_speed(plateau, grid40):
    return bisect_speed(plateau, grid40, c_tol=1e-4)


@pytest.fixture(scope="session")
def planar_speed(planar, grid40):
    return bisect_speed(planar, grid40, c_tol=1e-4)
