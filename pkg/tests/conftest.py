import pytest

# criterion number -> list of (status, detail); filled by test_acceptance
RESULTS = {}

TITLES = {
    1: "exact output vs oracle",
    2: "two-A three-B fixture",
    3: "scaling k=4/k=8 vs k=1",
    4: "throughput valley",
    5: "Markov accuracy",
    6: "Markov vs best fixed",
    7: "top-k vs brute force",
    8: "tree invariants",
    9: "rollback harness",
    10: "overhead sanity",
}


def record(n, status, detail=""):
    """status is "PASS", "FAIL" or "SKIP"."""
    RESULTS.setdefault(n, []).append((status, detail))
    line = f"criterion {n:>2} {status}: {TITLES[n]}" + (f" ({detail})" if detail else "")
    print(line)
    return line


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(RESULTS):
        parts = RESULTS[n]
        statuses = {s for s, _ in parts}
        if "FAIL" in statuses:
            status = "FAIL"
        elif statuses == {"SKIP"}:
            status = "SKIP"
        else:
            status = "PASS"
        details = "; ".join(d for _, d in parts if d)
        if len(details) > 400:
            details = details[:400] + "..."
        tr.write_line(f"criterion {n:>2} {status}: {TITLES[n]}" + (f" ({details})" if details else ""))
