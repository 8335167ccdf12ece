from collections import defaultdict

import pytest

_RESULTS: dict[int, list] = defaultdict(list)


class Recorder:
    """Collects acceptance checks so the session can print one line per criterion."""

    def __call__(self, criterion: int, name: str, passed: bool, detail: str = "") -> bool:
        _RESULTS[criterion].append((name, bool(passed), detail))
        return bool(passed)

    def info(self, criterion: int, name: str, detail: str) -> None:
        """A reported number that does not gate the criterion."""
        _RESULTS[criterion].append((name, None, detail))


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_RESULTS):
        checks = _RESULTS[crit]
        ok = all(p for _, p, _ in checks if p is not None)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for name, passed, detail in checks:
            tag = "info" if passed is None else "pass" if passed else "FAIL"
            tr.write_line(f"    [{tag}] {name}: {detail}")
