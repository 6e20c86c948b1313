import functools

import pytest

from triladder import LatticeSpec, build_basis, prepared_state

_ACCEPTANCE: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for mark in getattr(report, "criterion_marks", ()):
        _ACCEPTANCE.setdefault(mark, []).append((report.nodeid, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criterion_marks = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        outcomes = _ACCEPTANCE[n]
        verdict = "PASS" if all(o == "passed" for _, o in outcomes) else "FAIL"
        names = ", ".join(nid.split("::")[-1] for nid, _ in outcomes)
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  ({names})")


@functools.lru_cache(maxsize=None)
def ladder(ratio: float, j: float = 1.0, n_max: int = 1):
    """(spec, basis, prepared state) for the 8-site, 4-excitation ladder."""
    spec = LatticeSpec.from_ratio(ratio, j=j, n_max=n_max, u=-30.5 * j)
    basis = build_basis(8, 4, n_max)
    return spec, basis, prepared_state(spec, basis)
