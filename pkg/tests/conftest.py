import numpy as np
import pytest

from shar.dataset import House, HouseMeta, synth_house
from shar.lstm import TrainConfig
from shar.evaluation import BenchmarkConfig

# Small-model settings used wherever a test trains the LSTM on the fixture.
FAST_LSTM = dict(hidden_size=16, learning_rate=0.01, epochs=12)


@pytest.fixture(scope="session")
def synth_meta():
    return HouseMeta.generic("synthetic", sensors=10, activities=6)


@pytest.fixture(scope="session")
def synth_days(synth_meta):
    return synth_house(synth_meta, days=5, seed=7)


@pytest.fixture(scope="session")
def synth(synth_meta, synth_days):
    return House(synth_meta, synth_days)


@pytest.fixture
def fast_bench():
    return BenchmarkConfig(lstm=TrainConfig(**FAST_LSTM))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(criterion, passed, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIPPED"}[passed]
        lines.append(f"[{status}] criterion {criterion}: {detail}")
        return passed

    return record


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
