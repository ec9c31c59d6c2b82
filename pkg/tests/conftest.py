import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from radonsvm.synthetic import make_corpus  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shape_corpus(tmp_path_factory):
    """4 shape classes, 100 train / 25 test images each, plus 3 unlabeled rows."""
    root = tmp_path_factory.mktemp("shapes")
    train, test = make_corpus(root, n_classes=4, n_train=100, n_test=25, seed=7, unlabeled=3)
    return train, test


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("small")
    return make_corpus(root, n_classes=3, n_train=12, n_test=4, seed=3)


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_CRITERIA] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and not rep.passed)):
        return
    status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
    detail = ", ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config.stash[_CRITERIA].append((mark.args[0], mark.args[1], status, detail))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash.get(_CRITERIA, []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail in rows:
        line = f"criterion {number:>2} {status}  {title}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
