from __future__ import annotations

import pytest


def pytest_runtest_logreport(report):
    # one visible line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    state = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {state}", flush=True)
