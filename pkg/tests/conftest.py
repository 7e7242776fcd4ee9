import numpy as np
import pytest

from dprelab.environment import DisorderLaw, EnvironmentField, child_seed

ALL_LAWS = list(DisorderLaw)


@pytest.fixture
def gaussian_env():
    return EnvironmentField(child_seed(2024, 0), DisorderLaw.GAUSSIAN)


def mc_within(values, target, sigmas=3.0):
    v = np.asarray(values, dtype=float)
    se = v.std(ddof=1) / np.sqrt(len(v))
    return abs(v.mean() - target) <= sigmas * se, v.mean(), se


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
