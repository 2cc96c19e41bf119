"""
Shared fixtures: the step-response experiment design, a fast scenario and
a Flask test client.
"""
import os

import numpy as np
import pytest

from app import create_app
from app.extensions import report_cache
from app.services.synthesis import ChiParams, ModelSpec, derive_gains, validate_chi
from app.utils.scenario_file import load_scenario, parse_scenario
from config import Config

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, 'scenarios')

FAST_SCENARIO = """
[chi]
chi1 = 1.42662
chi2 = 217.2061
chi3 = 676.2171
k2 = 0.1

[model]
time_constants = [0.04, 0.05, 0.06]

[scenario]
name = "fast"
tau = 0.1
step = 5e-4
horizon = 0.6
"""


class TestConfig(Config):
    TESTING = True
    LOG_LEVEL = 'WARNING'


def random_chi(rng):
    """A random ChiParams that passes every design constraint"""
    while True:
        chi2 = rng.uniform(1.0, 500.0)
        p = ChiParams(
            chi1=rng.uniform(0.1, 50.0),
            chi2=chi2,
            chi3=rng.uniform(0.01, 0.99) * chi2 ** 2 / 4.0,
            k2=rng.uniform(-1.0, 1.0),
        )
        if validate_chi(p).passed:
            return p


@pytest.fixture
def design_chi():
    return ChiParams(chi1=1.42662, chi2=217.2061, chi3=676.2171, k2=0.1)


@pytest.fixture
def design_model():
    return ModelSpec.from_time_constants(0.04, 0.05, 0.06)


@pytest.fixture
def design_gains(design_chi):
    return derive_gains(design_chi, 100.0, 20.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def step_experiment_path():
    return os.path.join(SCENARIOS, 'step_experiment.toml')


@pytest.fixture
def step_experiment(step_experiment_path):
    return load_scenario(step_experiment_path)


@pytest.fixture
def fast_text():
    return FAST_SCENARIO


@pytest.fixture
def fast_scenario():
    return parse_scenario(FAST_SCENARIO, source='fast')


@pytest.fixture
def write_config(tmp_path):
    """Write TOML text to a temporary scenario file and return its path"""
    def _write(text, name='scenario.toml'):
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture
def app():
    report_cache.clear()
    app = create_app(TestConfig)
    yield app
    report_cache.clear()


@pytest.fixture
def client(app):
    with app.test_client() as client:
        yield client
