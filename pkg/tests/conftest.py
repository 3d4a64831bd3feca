import pytest

ACCEPTANCE_CRITERIA = range(1, 12)
_RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


@pytest.fixture
def record():
    """Store one sub-check of an acceptance criterion for the summary."""

    def _record(criterion: int, name: str, ok: bool, detail: str = "") -> bool:
        _RESULTS.setdefault(criterion, []).append((name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {criterion} {name}: {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in ACCEPTANCE_CRITERIA:
        parts = _RESULTS.get(c)
        if not parts:
            terminalreporter.write_line(f"FAIL criterion {c}: not run")
            continue
        ok = all(p[1] for p in parts)
        body = "; ".join(f"{n} {'ok' if o else 'FAILED'} ({d})" for n, o, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {c}: {body}")
