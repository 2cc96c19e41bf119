"""Tests for scenario file loading and the trajectory CSV format"""
import os

import numpy as np
import pytest

from app.exceptions import ScenarioError
from app.services.simulator import CSV_COLUMNS, integrate_closed_loop
from app.services.synthesis import derive_gains
from app.utils.scenario_file import load_scenario, parse_scenario, scenario_from_mapping
from app.utils.trajectory_csv import read_trajectory, write_trajectory
from config import Config

from conftest import FAST_SCENARIO, SCENARIOS


def test_load_shipped_scenario(step_experiment):
    assert step_experiment.name == 'step_experiment'
    assert step_experiment.chi.chi3 == 676.2171
    assert step_experiment.model.time_constants == (0.04, 0.05, 0.06)
    assert step_experiment.tau == 0.1
    assert step_experiment.taus[-1] == 0.6
    assert step_experiment.output_dir == 'out/step_experiment'


def test_defaults_come_from_config(fast_scenario):
    assert fast_scenario.ybar1 == Config.DEFAULT_YBAR1
    assert fast_scenario.lambda01 is None
    assert fast_scenario.plant is None
    assert fast_scenario.output_dir == Config.OUTPUT_DIR


def test_missing_key_names_key_and_line():
    text = FAST_SCENARIO.replace('chi3 = 676.2171\n', '')
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.key == 'chi.chi3'
    assert 'chi.chi3' in str(exc.value)
    assert exc.value.line == 2


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError, match='chi5'):
        parse_scenario(FAST_SCENARIO.replace('k2 = 0.1', 'k2 = 0.1\nchi5 = 1.0'))


def test_chi4_is_accepted_and_ignored(fast_scenario):
    scenario = parse_scenario(FAST_SCENARIO.replace('k2 = 0.1', 'k2 = 0.1\nchi4 = 1.0'))
    assert scenario.chi == fast_scenario.chi
    with pytest.raises(ScenarioError, match='chi.chi4'):
        parse_scenario(FAST_SCENARIO.replace('k2 = 0.1', 'k2 = 0.1\nchi4 = "x"'))


def test_unknown_section_rejected():
    with pytest.raises(ScenarioError, match='extra'):
        parse_scenario(FAST_SCENARIO + '\n[extra]\nx = 1\n')


def test_invalid_toml():
    with pytest.raises(ScenarioError, match='Invalid TOML'):
        parse_scenario('[chi\nchi1 = ')


def test_non_numeric_value():
    with pytest.raises(ScenarioError, match='chi.chi1'):
        parse_scenario(FAST_SCENARIO.replace('chi1 = 1.42662', 'chi1 = "fast"'))


def test_model_needs_exactly_one_form():
    text = FAST_SCENARIO.replace('time_constants = [0.04, 0.05, 0.06]',
                                 'time_constants = [0.04]\nnum = [1.0]\nden = [1.0, 1.0]')
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_model_from_num_den():
    text = FAST_SCENARIO.replace('time_constants = [0.04, 0.05, 0.06]',
                                 'num = [6.0]\nden = [1.0, 6.0, 11.0, 6.0]')
    scenario = parse_scenario(text)
    assert scenario.model.time_constants is None
    assert scenario.model.dc_gain == 1.0


def test_plant_section():
    text = FAST_SCENARIO + '\n[plant]\nr_w = 0.05\nb_w = 0.15\n'
    scenario = parse_scenario(text)
    assert scenario.plant.r_w == 0.05
    assert not scenario.plant.layer1_configured
    with pytest.raises(ScenarioError, match='plant.a.a11'):
        parse_scenario(text + '\n[plant.a]\na12 = 1.0\n')


def test_layer1_scenario_file():
    scenario = load_scenario(os.path.join(SCENARIOS, 'layer1.toml'))
    assert scenario.plant.layer1_configured
    assert scenario.plant.a['a26'] == 80.0


def test_mapping_form_matches_toml(fast_scenario):
    data = {
        'chi': {'chi1': 1.42662, 'chi2': 217.2061, 'chi3': 676.2171, 'k2': 0.1},
        'model': {'time_constants': [0.04, 0.05, 0.06]},
        'scenario': {'name': 'fast', 'tau': 0.1, 'step': 5e-4, 'horizon': 0.6},
    }
    scenario = scenario_from_mapping(data)
    assert scenario == fast_scenario


def test_overrides_change_fingerprint(fast_scenario):
    changed = fast_scenario.with_overrides(tau=0.2, step=1e-3)
    assert (changed.tau, changed.step) == (0.2, 1e-3)
    assert changed.fingerprint != fast_scenario.fingerprint
    assert fast_scenario.with_overrides() is fast_scenario


def test_missing_file():
    with pytest.raises(ScenarioError, match='Cannot read'):
        load_scenario(os.path.join(SCENARIOS, 'does-not-exist.toml'))


def test_csv_reproduces_trajectory_exactly(fast_scenario, tmp_path):
    sc = fast_scenario.sim_scenario(derive_gains(fast_scenario.chi))
    trajectory = integrate_closed_loop(sc)
    path = write_trajectory(str(tmp_path / 'run' / 'trajectory.csv'), trajectory)

    with open(path, encoding='utf-8') as f:
        assert f.readline().strip() == ','.join(CSV_COLUMNS)
    columns = read_trajectory(path)
    assert tuple(columns) == CSV_COLUMNS
    for name in CSV_COLUMNS:
        assert np.array_equal(columns[name], trajectory[name])
