import pytest

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_addoption(parser):
    parser.addoption("--run-long", action="store_true", help="run long reproduction tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "long: long-running reproduction, needs --run-long")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-long"):
        return
    skip = pytest.mark.skip(reason="long test; pass --run-long")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def record():
    def _record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE[name] = (ok, detail)
        print(f"{name}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
