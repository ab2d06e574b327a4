import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=40)
settings.load_profile("repo")


class Sample:
    """Minimal (features, label, weight) record accepted by the objective and optimizer."""

    def __init__(self, features, label, weight=1.0, system=None):
        self.features = features
        self.label = label
        self.weight = weight
        self.system = system


def random_label(rng, shape, frac=0.3):
    y = (rng.random(shape) < frac).astype(float)
    y.flat[0], y.flat[1] = 1.0, 0.0  # both classes present
    return y


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
