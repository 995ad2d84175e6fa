import pytest

from safefilter.config import bundled_config_path, load_config
from safefilter.sim import run_closed_loop


def run_bundled(name: str):
    cfg = load_config(bundled_config_path(name))
    log, summary = run_closed_loop(cfg)
    return cfg, log, summary


# The three headline scenarios are reused by several test modules; one run
# each per session keeps the suite fast without sharing any mutable state
# (logs and summaries are effectively read-only).


@pytest.fixture(scope="session")
def nominal_run():
    return run_bundled("nominal.cfg")


@pytest.fixture(scope="session")
def delay_run():
    return run_bundled("delay_nominal.cfg")


@pytest.fixture(scope="session")
def robust_run():
    return run_bundled("delay_robust.cfg")
