import pytest

from bivlab import harness
from bivlab.experiments import DEFAULT_BIKE_CSV

ACCEPTANCE = []  # (criterion, passed, detail)


def record(criterion: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE.append((criterion, bool(passed), detail))
    return passed


@pytest.fixture(scope="session")
def bike_csv():
    if not DEFAULT_BIKE_CSV.exists():
        pytest.skip(f"{DEFAULT_BIKE_CSV} missing; run scripts/fetch_bike_data.py")
    return DEFAULT_BIKE_CSV


class RunCache:
    """Memoizes deterministic training runs so criteria can share them."""

    def __init__(self):
        self._runs = {}

    def run(self, config: harness.TrainConfig) -> harness.RunMetrics:
        if config not in self._runs:
            self._runs[config] = harness.run_one(config)
        return self._runs[config]

    def agg(self, config: harness.TrainConfig, seeds) -> harness.Aggregate:
        return harness.aggregate([self.run(config.replace(seed=s)) for s in seeds])


@pytest.fixture(scope="session")
def runs():
    return RunCache()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {crit}  {detail}")
