import re

import pytest

CRITERIA = {
    1: "channel equivalence at one replica",
    2: "channel inequivalence at two replicas",
    3: "replica Bell-entropy formula vs brute force",
    4: "Bell-loss closed forms and Monte Carlo",
    5: "Bell-proxy ordering and S_AB/L ordering",
    6: "unitary-kick flatness of I3",
    7: "I3 crossings and p_c ordering",
    8: "NP optimality scan and convexity",
    9: "engine properties",
}

_outcomes: dict[int, list[tuple[str, str, list[str]]]] = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the acceptance report."""

    def add(text: str):
        request.node.user_properties.append(("detail", text))

    return add


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        details = [v for k, v in report.user_properties if k == "detail"]
        _outcomes.setdefault(int(m.group(1)), []).append((m.group(2), report.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        parts = _outcomes.get(n)
        if not parts:
            tr.write_line(f"criterion {n} ({title}): NOT RUN")
            continue
        ok = all(outcome == "passed" for _, outcome, _ in parts)
        tr.write_line(f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'}")
        for name, outcome, details in parts:
            extra = f" | {'; '.join(details)}" if details else ""
            tr.write_line(f"    {name}: {outcome}{extra}")
