import pytest

from dnr.caseio import load_fixture
from dnr.network import Branch, Bus, Network, SLACK


@pytest.fixture(scope="session")
def case14():
    return load_fixture("case14")


@pytest.fixture(scope="session")
def case16():
    return load_fixture("case16")


@pytest.fixture(scope="session")
def case33():
    return load_fixture("case33")


@pytest.fixture(scope="session")
def case69():
    return load_fixture("case69")


@pytest.fixture(scope="session")
def case118():
    return load_fixture("case118")


def triangle(load_bus: int = 2, p: float = 1.0) -> Network:
    """Slack at bus 0, three lines in a ring, one load."""
    buses = [Bus(0, 1, SLACK, v_set=1.0), Bus(1, 2), Bus(2, 3)]
    buses[load_bus] = Bus(load_bus, load_bus + 1, p_load=p, q_load=0.3 * p)
    branches = [
        Branch(0, 0, 1, 0.01, 0.02, name="1_2_1"),
        Branch(1, 1, 2, 0.02, 0.03, name="2_3_1"),
        Branch(2, 0, 2, 0.03, 0.02, name="1_3_1"),
    ]
    return Network(tuple(buses), tuple(branches), 10.0, "triangle")


@pytest.fixture
def tri():
    return triangle()


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def record(request):
    """record(n, checks): store and print one pass/fail line for acceptance criterion n."""

    def _record(n: int, checks: list[tuple[str, bool, str]]) -> bool:
        ok = all(c[1] for c in checks)
        failed = [f"{name} ({detail})" for name, passed, detail in checks if not passed]
        detail = "; ".join(failed) if failed else "; ".join(f"{name} {detail}".strip() for name, _, detail in checks)
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}: {detail}"
        request.config.stash[ACCEPTANCE][n] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
