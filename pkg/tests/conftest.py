import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="run full-scale checks that take tens of minutes")


def pytest_configure(config):
    config.addinivalue_line("markers", "full: full-scale check, needs --full")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--full"):
        return
    skip = pytest.mark.skip(reason="full-scale check; pass --full")
    for item in items:
        if "full" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def full(request):
    return request.config.getoption("--full")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 10):
        status, detail = ACCEPTANCE.get(k, ("NOT RUN", ""))
        terminalreporter.write_line(f"criterion {k}: {status}  {detail}".rstrip())
