import pytest

_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def record_criterion(request):
    """Call with ``(name, passed, detail)``; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(name, passed, detail=""):
        line = f"{name}: {'PASS' if passed else 'FAIL'} {detail}".rstrip()
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
