import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion.

    Call the returned function with the criterion number, a title, a list of
    ``(ok, message)`` checks and the elapsed seconds; it records the line and
    then fails the test if any check failed.
    """
    store = request.config.stash.setdefault(_RESULTS, [])

    def record(number, title, checks, elapsed):
        ok = all(c for c, _ in checks)
        failed = [msg for c, msg in checks if not c]
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({elapsed:.1f} s)"
        if failed:
            line += " | " + "; ".join(failed)
        store.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
