import time

import numpy as np
import pytest
from hypothesis import settings

from paramrobust.dataset import domain_from_dataset, load_dataset
from paramrobust.fixtures import TOY_DOMAIN, cats_csv, load_model

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def cat():
    return load_model("cat")


@pytest.fixture(scope="session")
def toy_scaled():
    return load_model("toy_scaled")


@pytest.fixture(scope="session")
def toy_shifted():
    return load_model("toy_shifted")


@pytest.fixture(scope="session")
def cats_box():
    return domain_from_dataset(load_dataset(cats_csv()))


@pytest.fixture(scope="session")
def toy_domain():
    return TOY_DOMAIN


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SUITE_BUDGET = 600.0


def pytest_sessionstart(session):
    session.config._suite_start = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    config._acceptance_run = any(item.get_closest_marker("acceptance") for item in items)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # wall-clock criterion for the whole suite; only reported when the
    # acceptance tests were part of the run
    if not getattr(config, "_acceptance_run", False):
        return
    elapsed = time.perf_counter() - config._suite_start
    verdict = "PASS" if elapsed < SUITE_BUDGET else "FAIL"
    terminalreporter.write_line(f"ACCEPTANCE {verdict} suite-runtime: {elapsed:.0f}s (budget {SUITE_BUDGET:.0f}s)")
