import pytest

_RESULTS = pytest.StashKey[dict]()
_ACTIVE = pytest.StashKey[bool]()
N_CRITERIA = 10


def pytest_configure(config):
    config.stash[_RESULTS] = {}
    config.stash[_ACTIVE] = False


def pytest_collection_modifyitems(config, items):
    config.stash[_ACTIVE] = any(i.nodeid.startswith("tests/test_acceptance.py") or
                                i.module.__name__.endswith("test_acceptance") for i in items)


@pytest.fixture
def criterion(request):
    """Record one acceptance check and return its verdict."""
    results = request.config.stash[_RESULTS]

    def record(n, ok, detail):
        results.setdefault(n, []).append((bool(ok), detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not config.stash[_ACTIVE]:
        return
    results = config.stash[_RESULTS]
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        checks = results.get(n)
        if not checks:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL - not evaluated")
            continue
        ok = all(c[0] for c in checks)
        detail = "; ".join(c[1] for c in checks)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
