import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from adaptive_rpeak.error_detector import RrThresholds
from adaptive_rpeak.signal_io import SynthesisSpec, synthesize_ecg

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FS = 250
WARMUP = 387


@pytest.fixture
def thr():
    return RrThresholds(0.64, 1.47)


@pytest.fixture(scope="session")
def stationary_75():
    return synthesize_ecg(SynthesisSpec(duration=30, hr_profile=((0, 75),)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


#: criterion number -> (passed, detail), filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status} {detail}")
