import pytest

from invplan import build_grid, solve_on_ball, to_value_function, validate_params

_ACCEPTANCE_LINES = []


@pytest.fixture(scope='session')
def p111():
    return validate_params(1, 1.0, 1.0)


@pytest.fixture(scope='session')
def ball6(p111):
    """Radial solve on R = 6 with h = 5e-3."""
    return solve_on_ball(build_grid(6.0, 1201), p111)


@pytest.fixture(scope='session')
def field6(ball6, p111):
    return to_value_function(ball6.field, p111)


@pytest.fixture
def record_criterion():
    def record(number, title, ok, detail):
        _ACCEPTANCE_LINES.append((number, f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title}: "
                                          f"{detail}"))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section('acceptance criteria')
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
