import math
import warnings

import pytest

from sbscool import CollisionConfig, synthesize_combine, synthesize_sbs
from sbscool.synthesis import CurvatureWarning

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def config():
    return CollisionConfig()


@pytest.fixture(scope="session")
def sbs_wf(config):
    return synthesize_sbs(config)


@pytest.fixture(scope="session")
def combine_wf(config):
    return synthesize_combine(config)


@pytest.fixture(scope="session")
def sbs_factory(config):
    """Cached SBS waveforms keyed by (mu, sigma^2)."""
    from sbscool.ansatz import AnsatzSpec

    cache = {}

    def make(mu, sigma_sq=2.0):
        key = (mu, sigma_sq)
        if key not in cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CurvatureWarning)
                cache[key] = synthesize_sbs(config, mu=mu, spec=AnsatzSpec("gaussian_bump", math.sqrt(sigma_sq)))
        return cache[key]

    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
