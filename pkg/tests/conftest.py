import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from thermocp.force import MatsubaraSettings  # noqa: E402
from thermocp.material import GOLD_DRUDE  # noqa: E402
from thermocp.molecule import load_molecule  # noqa: E402

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def lih():
    return load_molecule("LiH")


@pytest.fixture(scope="session")
def ybf():
    return load_molecule("YbF")


@pytest.fixture(scope="session")
def room():
    return MatsubaraSettings(300.0)


@pytest.fixture(scope="session")
def gold():
    return GOLD_DRUDE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
