import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")
warnings.filterwarnings("ignore", category=DeprecationWarning)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}", flush=True)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
