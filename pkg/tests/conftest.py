import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pkg", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


def pytest_runtest_logreport(report):
    # one visible verdict line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        verdict = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {name}: {verdict}", flush=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
