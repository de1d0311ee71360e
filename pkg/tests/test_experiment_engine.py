import json
import math
from pathlib import Path

import numpy as np
import pytest

from config import ConfigurationError, linear_to_db
from experiment_engine import ExperimentEngine, load_scenario, on_grid_range, simulate_scene
from exporters import read_image_csv
from linkbudget import TargetSpec, eta, ideal_snr, round_trip_delay
from waveform import TimeSignal

SMALL_SYSTEM = {
    'carrier_frequency_hz': 3.5e9,
    'bandwidth_hz': 200e6,
    'subcarriers': 256,
    'cp_length': 32,
    'symbols': 16,
}
SMALL_CFAR = {'guard_cells': [2, 2], 'training_cells': [8, 4], 'probability_false_alarm': 1e-5}
# range bin 20 at 200 MHz
IN_CP_RANGE = 20 * 299792458.0 / (2 * 200e6)


def write_scenario(directory, name='small', **fields):
    scenario = {
        'name': name,
        'config': SMALL_SYSTEM,
        'targets': [{'range_m': IN_CP_RANGE, 'velocity_mps': 0, 'attenuation_db': 40}],
        'seed': 5,
        'algorithm': 'conventional',
        'algorithm_params': {'cfar': SMALL_CFAR, 'czt': {'roi_width': 8, 'zoom_factor': 10}},
    }
    scenario.update(fields)
    path = directory / f'{name}.json'
    path.write_text(json.dumps(scenario, indent=2))
    return path


def test_load_scenario_defaults(tmp_path):
    scenario = load_scenario(write_scenario(tmp_path))
    assert scenario.name == 'small'
    assert scenario.config.subcarriers == 256
    assert scenario.window_kind == 'rectangular'
    assert scenario.cfar.guard_cells == (2, 2)
    assert scenario.czt.points == 80
    assert len(scenario.targets) == 1
    assert scenario.targets[0].attenuation == pytest.approx(0.01)


def test_load_scenario_reports_json_position(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{\n  "name": "x",\n  "config": \n}\n')
    with pytest.raises(ConfigurationError, match='line 4'):
        load_scenario(path)


@pytest.mark.parametrize('fields, field_name', [
    ({'colour': 'red'}, 'colour'),
    ({'algorithm': 'music'}, 'algorithm'),
    ({'window': {'kind': 'kaiser'}}, 'window'),
    ({'targets': [{'velocity_mps': 3, 'rcs_dbsm': 0}]}, 'range_m'),
])
def test_load_scenario_names_offending_field(tmp_path, fields, field_name):
    with pytest.raises(ConfigurationError) as excinfo:
        load_scenario(write_scenario(tmp_path, **fields))
    assert excinfo.value.field == field_name


def test_config_path_relative_to_scenario(tmp_path):
    (tmp_path / 'system.json').write_text(json.dumps(SMALL_SYSTEM))
    scenario = load_scenario(write_scenario(tmp_path, config='system.json'))
    assert scenario.config.cp_length == 32


def test_simulated_scene_is_deterministic(small_config, small_params):
    specs = [TargetSpec(range=IN_CP_RANGE, attenuation=0.01)]
    first = simulate_scene(small_config, small_params, specs, 9)
    second = simulate_scene(small_config, small_params, specs, 9)
    other = simulate_scene(small_config, small_params, specs, 10)
    assert np.array_equal(first.rx.samples, second.rx.samples)
    assert not np.array_equal(first.rx.samples, other.rx.samples)


def test_scenario_run_writes_artifacts(tmp_path):
    out = tmp_path / 'run'
    engine = ExperimentEngine(out_dir=out)
    metrics = engine.run_scenario(write_scenario(tmp_path, dump_signal=True))

    for name in ('manifest.json', 'metrics.json', 'timings.json', 'image.csv', 'targets.json',
                 'rx.iq', 'rx.iq.json'):
        assert (out / name).exists(), name
    assert not list(out.glob('.staging_*'))

    assert metrics['targets'][0]['detected']
    assert metrics['targets'][0]['cell'] == [20, 8]

    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['seed'] == 5
    assert 'image.csv' in manifest['artifacts']

    ranges, velocities, values = read_image_csv(out / 'image.csv')
    assert values.shape == (256, 16)
    assert ranges[20] == pytest.approx(IN_CP_RANGE)
    assert velocities[8] == pytest.approx(0.0)

    estimates = json.loads((out / 'targets.json').read_text())
    assert any(abs(e['range_m'] - IN_CP_RANGE) < 0.1 for e in estimates)

    dumped = TimeSignal.from_binary(out / 'rx.iq')
    assert dumped.symbols == 16

    assert engine.finalize_report()['success']


def test_empty_scene_runs(tmp_path):
    out = tmp_path / 'empty'
    metrics = ExperimentEngine(out_dir=out).run_scenario(write_scenario(tmp_path, targets=[]))
    assert metrics['targets'] == []
    assert (out / 'metrics.json').exists()
    assert json.loads((out / 'targets.json').read_text()) is not None


def test_same_seed_gives_identical_metrics(tmp_path):
    path = write_scenario(tmp_path, algorithm='jic_cc')
    ExperimentEngine(out_dir=tmp_path / 'a').run_scenario(path)
    ExperimentEngine(out_dir=tmp_path / 'b').run_scenario(path)
    assert (tmp_path / 'a' / 'metrics.json').read_bytes() == (tmp_path / 'b' / 'metrics.json').read_bytes()
    assert (tmp_path / 'a' / 'targets.json').read_bytes() == (tmp_path / 'b' / 'targets.json').read_bytes()


def test_algorithm_override(tmp_path):
    metrics = ExperimentEngine(out_dir=tmp_path / 'out').run_scenario(write_scenario(tmp_path), algorithm='sic')
    assert metrics['algorithm'] == 'sic'


def test_failed_run_is_reported(tmp_path):
    engine = ExperimentEngine(out_dir=tmp_path / 'out')
    with pytest.raises(ConfigurationError):
        engine.run_scenario(tmp_path / 'missing.json')
    report = engine.finalize_report()
    assert not report['success']
    assert report['report']['runs']['failed'] == 1


def test_noise_floor_experiment(tmp_path):
    out = tmp_path / 'floors'
    summary = ExperimentEngine(out_dir=out).run_experiment('noise-floors', config='simulation', trials=1)
    assert (out / 'noise_floors.csv').exists()
    assert summary['thermal_dbm'] == pytest.approx(-82.96, abs=0.05)
    assert summary['worst_case_interferer_range_m'] == pytest.approx(457.0, abs=3.0)
    assert summary['max_mismatch_loss_db'] > 20.0


def test_max_range_experiment(tmp_path):
    out = tmp_path / 'reach'
    summary = ExperimentEngine(out_dir=out).run_experiment(
        'max-range', config='simulation', trials=1, interferer_rcs_dbsm=[0.0, 10.0, 20.0]
    )
    assert (out / 'max_range.csv').exists()
    assert all(summary['checks']['monotone_non_increasing'].values())


def test_unknown_experiment(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentEngine(out_dir=tmp_path).run_experiment('radar-art')


@pytest.mark.slow
def test_sinr_sweep_experiment(tmp_path):
    out = tmp_path / 'sweep'
    summary = ExperimentEngine(out_dir=out, seed=3).run_experiment(
        'sinr-sweep', config='desk', trials=1, weak_rcs_dbsm=[10.0], algorithms=('conventional', 'jic_cc')
    )
    assert (out / 'sinr_sweep.csv').exists()
    assert set(summary['mean_sinr_db']) == {'conventional', 'jic_cc'}


@pytest.mark.slow
def test_estimator_experiment(tmp_path):
    out = tmp_path / 'mae'
    summary = ExperimentEngine(out_dir=out, seed=3).run_experiment(
        'estimator-mae', config='desk', trials=1, offsets=3
    )
    assert (out / 'estimator_mae.csv').exists()
    assert summary['czt_amplitude_mae_db'] < 0.5


def test_scenario_found_in_scenario_dir(tmp_path, monkeypatch):
    from config import Config

    directory = tmp_path / 'scenarios'
    directory.mkdir()
    write_scenario(directory, name='bare')
    monkeypatch.setattr(Config, 'SCENARIO_DIR', str(directory))
    assert load_scenario('bare').name == 'bare'
    assert load_scenario('bare.json').name == 'bare'
    with pytest.raises(ConfigurationError):
        load_scenario('absent')


@pytest.mark.slow
def test_noise_floor_checks_hold_on_simulation_system(tmp_path):
    summary = ExperimentEngine(out_dir=tmp_path / 'floors').run_experiment(
        'noise-floors', config='simulation', trials=1
    )
    assert summary['checks'] == {'interference_gap_22_6_db': True, 'mismatch_loss_22_7_db': True}
    assert summary['quantization_dbm'] == pytest.approx(-76.18, abs=0.05)


@pytest.mark.slow
def test_sinr_sweep_orders_algorithms(tmp_path, desk_config, desk_params):
    weak_bin = int(round(0.97 * desk_config.subcarriers))
    unit = TargetSpec(range=on_grid_range(weak_bin, desk_config), rcs=1.0)
    ideal_at_0dbsm = linear_to_db(ideal_snr(unit, desk_config, desk_params))
    mismatch_db = 20 * math.log10(eta(round_trip_delay(unit.range), desk_params))
    # weak target left 3 dB above the noise by window mismatch alone
    breakdown_dbsm = 3.0 - ideal_at_0dbsm - mismatch_db

    summary = ExperimentEngine(out_dir=tmp_path / 'sweep', seed=3).run_experiment(
        'sinr-sweep', config='desk', trials=10, interferer_rcs_dbsm=0.0,
        weak_rcs_dbsm=[breakdown_dbsm, -10.0, 0.0, 10.0],
    )
    assert summary['mismatch_limited_snr_db'][0] < 17.0
    assert summary['checks'] == {
        'jic_cc_not_below_conventional': True,
        'fr_sw_not_below_conventional': True,
        'fr_sw_within_1_5db_of_ideal': True,
        'jic_cc_within_4_5db_of_ideal': True,
        'jic_cc_above_threshold': True,
        'sic_breakdown': True,
    }


@pytest.mark.slow
def test_estimator_accuracy_on_simulation_system(tmp_path):
    summary = ExperimentEngine(out_dir=tmp_path / 'mae', seed=3).run_experiment(
        'estimator-mae', config='simulation', trials=1, quadratic=True
    )
    assert summary['checks']['czt_floor_within_1db_of_thermal']
    assert summary['checks']['czt_amplitude_mae_below_0_1db']
    assert summary['checks']['czt_phase_mae_below_0_05deg']
    assert summary['checks']['projection_floor_10db_above_thermal_off_grid']


@pytest.mark.slow
def test_measurement_scenario_reveals_weak_targets(tmp_path, monkeypatch):
    from config import Config

    monkeypatch.setattr(Config, 'SCENARIO_DIR', str(Path(__file__).parent.parent / 'scenarios'))
    runs = {}
    for algorithm in ('conventional', 'jic_cc', 'fr_sw'):
        runs[algorithm] = ExperimentEngine(out_dir=tmp_path / algorithm).run_scenario('measurement', algorithm)

    def weak_rows(metrics):
        return [row for row in metrics['targets'] if 215.0 < row['range_m'] < 235.0]

    for algorithm in ('jic_cc', 'fr_sw'):
        rows = weak_rows(runs[algorithm])
        assert len(rows) == 2
        assert all(row['detected'] and row['sinr_db'] >= 17.0 for row in rows), algorithm
    assert not all(row['detected'] for row in weak_rows(runs['conventional']))
    assert runs['fr_sw']['floor_dbm'] <= runs['jic_cc']['floor_dbm'] + 1.0


@pytest.mark.slow
def test_complexity_scaling(tmp_path):
    out = tmp_path / 'cost'
    summary = ExperimentEngine(out_dir=out, seed=3).run_experiment('complexity', config='desk', trials=3)
    assert summary['shift_counts'] == [4, 8, 16]
    timings = json.loads((out / 'timings.json').read_text())
    assert timings['fr_sw_r_squared'] > 0.9
    assert timings['jic_cc_ratio'] <= 4.0
