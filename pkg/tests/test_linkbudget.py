import math

import numpy as np
import pytest

from config import (
    ConfigurationError,
    UnsupportedOperationError,
    db_to_linear,
    derive_params,
    linear_to_db,
    load_config,
    watt_to_dbm,
)
from linkbudget import (
    TargetSpec,
    actual_sinr,
    eta,
    ideal_snr,
    interference_power,
    link_budget,
    max_detectable_range,
    quantization_floor,
    range_profile,
    round_trip_delay,
    sqnr,
    sweep_ranges,
    thermal_noise_power,
    worst_case_interferer_range,
)


@pytest.fixture
def simulation():
    config = load_config('simulation')
    return config, derive_params(config)


def test_thermal_noise_of_simulation_system(simulation):
    config, _ = simulation
    assert watt_to_dbm(thermal_noise_power(config)) == pytest.approx(-82.96, abs=0.01)


def test_sqnr_values():
    assert sqnr(12, 1 / 3) == pytest.approx(72.24, abs=1e-9)
    assert sqnr(12, 0.1) == pytest.approx(72.24 + 10 * math.log10(0.3))


def test_eta_limits(simulation):
    _, params = simulation
    assert eta(0.0, params) == 1.0
    assert eta(params.cp_duration, params) == 1.0
    assert eta(params.cp_duration + params.data_duration, params) == pytest.approx(0.0)
    assert eta(params.cp_duration + 0.25 * params.data_duration, params) == pytest.approx(0.75)


def test_eta_vectorised_and_monotone(simulation):
    _, params = simulation
    delays = np.linspace(0, params.symbol_duration, 200)
    values = eta(delays, params)
    assert values.shape == delays.shape
    assert np.all(np.diff(values) <= 0)
    assert np.all((values >= 0) & (values <= 1))


def test_target_spec_needs_exactly_one_strength():
    with pytest.raises(ConfigurationError):
        TargetSpec(range=100.0)
    with pytest.raises(ConfigurationError):
        TargetSpec(range=100.0, rcs=1.0, attenuation=0.1)
    with pytest.raises(ConfigurationError):
        TargetSpec(range=0.0, rcs=1.0)


def test_target_spec_from_dict_units():
    target = TargetSpec.from_dict({'range_m': 150, 'velocity_kmh': -220, 'attenuation_db': 50, 'phase_deg': 90})
    assert target.velocity == pytest.approx(-220 / 3.6)
    assert target.attenuation == pytest.approx(10 ** -2.5)
    assert target.phase == pytest.approx(math.pi / 2)

    target = TargetSpec.from_dict({'range_m': 300, 'rcs_dbsm': 20})
    assert target.rcs == pytest.approx(100.0)


def test_target_spec_from_dict_rejects_unknown_key():
    with pytest.raises(ConfigurationError) as exc_info:
        TargetSpec.from_dict({'range_m': 10, 'rcs_dbsm': 0, 'colour': 'red'})
    assert exc_info.value.field == 'colour'


def test_ideal_snr_requires_rcs(simulation):
    config, params = simulation
    with pytest.raises(UnsupportedOperationError):
        ideal_snr(TargetSpec(range=100.0, attenuation=0.5), config, params)


def test_in_cp_target_has_no_interference(simulation):
    config, params = simulation
    target = TargetSpec(range=0.9 * params.isi_free_range, rcs=100.0)
    assert interference_power(target, config, params) == 0.0


def test_quantization_floor_vanishes_without_spillover():
    config = load_config(dict(load_config('simulation').to_dict(), tx_rx_isolation_db=float('inf')))
    assert quantization_floor(config, derive_params(config)) == 0.0


def test_quantization_floor_counts_below_spillover_peak(simulation):
    config, params = simulation
    spillover_dbm = watt_to_dbm(config.tx_power) - config.tx_rx_isolation_db
    expected = spillover_dbm - linear_to_db(config.papr_factor) - sqnr(config.adc_bits, config.papr_factor)
    assert watt_to_dbm(quantization_floor(config, params)) == pytest.approx(expected, abs=1e-9)
    assert watt_to_dbm(quantization_floor(config, params)) == pytest.approx(-76.18, abs=0.05)

    crest = load_config(dict(config.to_dict(), papr_factor=0.1))
    ratio = quantization_floor(crest, params) / quantization_floor(config, params)
    assert ratio == pytest.approx((config.papr_factor / 0.1) ** 2)


def test_interference_gap_and_mismatch_loss_over_unambiguous_range(simulation):
    config, params = simulation
    profile = range_profile(db_to_linear(20.0), sweep_ranges(params), config, params)
    floor_dbm = np.maximum(profile['thermal_dbm'], profile['quant_dbm'])
    assert np.all(profile['quant_dbm'] > profile['thermal_dbm'])
    assert np.max(profile['interference_dbm'] - floor_dbm) == pytest.approx(22.6, abs=1.0)
    assert np.max(profile['mismatch_loss_db']) == pytest.approx(22.7, abs=0.5)


def test_sweep_stops_short_of_aliasing_range(simulation):
    _, params = simulation
    ranges = sweep_ranges(params, 10)
    assert ranges.size == 9
    assert ranges[0] > 0 and ranges[-1] < params.unambiguous_range
    with pytest.raises(ConfigurationError):
        sweep_ranges(params, 1)


def test_actual_sinr_equals_ideal_for_in_cp_target_without_spillover():
    config = load_config(dict(load_config('simulation').to_dict(), tx_rx_isolation_db=float('inf')))
    params = derive_params(config)
    target = TargetSpec(range=300.0, rcs=1.0)
    assert actual_sinr(target, config, params) == pytest.approx(ideal_snr(target, config, params))


def test_actual_sinr_never_exceeds_ideal(simulation):
    config, params = simulation
    for range_m in (100.0, 500.0, 2000.0, 4800.0):
        target = TargetSpec(range=range_m, rcs=10.0)
        assert actual_sinr(target, config, params) <= ideal_snr(target, config, params)


def test_worst_case_interferer_range_near_four_thirds_of_cp_range(simulation):
    config, params = simulation
    worst = worst_case_interferer_range(100.0, config, params)
    assert worst > params.isi_free_range
    assert worst == pytest.approx(4 / 3 * params.isi_free_range, abs=3.0)


def test_max_range_without_interferer_caps_at_unambiguous_range(simulation):
    config, params = simulation
    reach, below = max_detectable_range(100.0, None, 17.0, config, params)
    assert not below
    assert reach <= params.unambiguous_range + 1e-6


def test_max_range_non_increasing_in_interferer_rcs(simulation):
    config, params = simulation
    reaches = []
    for interferer_db in (0.0, 10.0, 20.0, 30.0):
        rcs = db_to_linear(interferer_db)
        interferer = TargetSpec(range=worst_case_interferer_range(rcs, config, params), rcs=rcs)
        reaches.append(max_detectable_range(db_to_linear(10.0), interferer, 17.0, config, params)[0])
    assert all(b <= a + 1e-6 for a, b in zip(reaches, reaches[1:]))


def test_max_range_threshold_crossing(simulation):
    config, params = simulation
    rcs = db_to_linear(20.0)
    interferer = TargetSpec(range=worst_case_interferer_range(rcs, config, params), rcs=rcs)
    reach, below = max_detectable_range(1.0, interferer, 17.0, config, params)
    if not below and reach < params.unambiguous_range:
        sinr = actual_sinr(TargetSpec(range=reach, rcs=1.0), config, params, [interferer])
        assert linear_to_db(sinr) == pytest.approx(17.0, abs=0.01)


def test_max_range_rejects_non_positive_threshold(simulation):
    config, params = simulation
    with pytest.raises(ConfigurationError):
        max_detectable_range(1.0, None, 0.0, config, params)


def test_range_profile_columns(simulation):
    config, params = simulation
    ranges = np.linspace(50, params.unambiguous_range, 100)
    profile = range_profile(100.0, ranges, config, params)
    assert set(profile) >= {'range_m', 'thermal_dbm', 'quant_dbm', 'interference_dbm', 'mismatch_loss_db'}
    in_cp = ranges <= params.isi_free_range
    assert np.all(profile['mismatch_loss_db'][in_cp] == 0)
    assert np.all(np.isneginf(profile['interference_dbm'][in_cp]))
    assert profile['mismatch_loss_db'][-1] == pytest.approx(-20 * math.log10(458 / 6652), abs=1e-6)


def test_link_budget_report(simulation):
    config, params = simulation
    targets = [TargetSpec(range=457.5, rcs=100.0), TargetSpec(range=4839.4, rcs=1.0)]
    report = link_budget(targets, config, params)
    data = report.to_dict()
    assert len(data['actual_sinr_db']) == 2
    assert data['thermal_dbm'] == pytest.approx(-82.96, abs=0.01)
    # the strong near target drowns the weak far one
    assert data['actual_sinr_db'][1] < 17.0
    assert data['dominant_noise_dbm'] >= data['thermal_dbm']


def test_round_trip_delay():
    assert float(round_trip_delay(150.0)) == pytest.approx(1e-6, rel=1e-3)
