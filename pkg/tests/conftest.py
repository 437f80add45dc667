import pytest

_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_report(request):
    """Callable that records one acceptance line for the terminal summary."""
    results = request.config.stash.setdefault(_RESULTS, {})

    def record(number: int, line: str) -> None:
        results[number] = line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
