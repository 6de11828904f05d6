"""Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary."""
import pytest

RESULTS = {}
SAMPLER_FILES = ("tests/test_gibbs_conditionals.py", "tests/test_geweke.py")
SAMPLER_CRITERION = "sampler correctness (conditional oracles, Geweke)"
_sampler_outcomes = {f: [] for f in SAMPLER_FILES}


class Recorder:
    def __call__(self, criterion: str, passed: bool, detail: str) -> bool:
        RESULTS[criterion] = (bool(passed), detail)
        print(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
        return bool(passed)


@pytest.fixture
def acceptance():
    return Recorder()


def pytest_runtest_logreport(report):
    path = report.nodeid.split("::")[0]
    if path in _sampler_outcomes and (report.when == "call" or report.outcome != "passed"):
        _sampler_outcomes[path].append(report.outcome)


def _sampler_line():
    ran = {f: o for f, o in _sampler_outcomes.items() if o}
    if len(ran) < len(SAMPLER_FILES):
        missing = ", ".join(f for f in SAMPLER_FILES if f not in ran)
        return "NOT RUN", f"needs {missing} in the same session"
    total = sum(len(o) for o in ran.values())
    bad = sum(o.count("failed") for o in ran.values())
    status = "PASS" if bad == 0 else "FAIL"
    return status, f"{total - bad}/{total} tests in {', '.join(SAMPLER_FILES)} passed"


def pytest_terminal_summary(terminalreporter):
    if not RESULTS and not any(_sampler_outcomes.values()):
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, (passed, detail) in RESULTS.items():
        tr.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    status, detail = _sampler_line()
    tr.write_line(f"{status}  {SAMPLER_CRITERION}: {detail}")
