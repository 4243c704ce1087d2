import numpy as np
import pytest

from flowtrace.task import ForceTrace, TrialConfig


@pytest.fixture
def step_config():
    return TrialConfig(band_width=0.04)


@pytest.fixture
def step_trace():
    """0 N for 0.2 s, 1.0 N for 0.6 s, 0 N for the rest of a 3 s trial."""
    samples = np.concatenate([np.zeros(200), np.ones(600), np.zeros(2200)])
    return ForceTrace(0.001, samples)


def make_trace(segments, dt=0.001):
    """Build a trace from (duration_s, force) segments."""
    parts = [np.full(int(round(d / dt)), f, dtype=float) for d, f in segments]
    return ForceTrace(dt, np.concatenate(parts))
