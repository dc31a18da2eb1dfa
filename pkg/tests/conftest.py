import numpy as np
import pytest

from jpts.dataset import Dataset, synth_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    """40 train / 10 validation / 10 test synthetic samples."""
    return synth_dataset(counts=(40, 10, 10))


@pytest.fixture(scope="session")
def four_sample_dataset():
    """Four samples used as both train and validation split."""
    d = synth_dataset(counts=(4, 0, 0))
    return Dataset(np.concatenate([d.raw, d.raw]), np.array([0] * 4 + [1] * 4))


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.kwargs["number"], mark.kwargs["title"]
    failed = call.excinfo is not None and call.when in ("setup", "call")
    if call.when == "call" or failed:
        prev = _criteria.get(num, (title, True))[1]
        _criteria[num] = (title, prev and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, ok = _criteria[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title}")
