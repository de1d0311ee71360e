import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from channel import TargetDerived, apply_channel_time, model_received_frame_fd
from config import ConfigurationError, EstimationError, derive_params
from conftest import make_config
from detect import CoarsePeak
from estimate import (
    CztConfig,
    czt_axis,
    czt_zoom,
    doppler_rotation,
    estimate_alpha,
    estimate_target,
    losses,
    projection_alpha,
    quadratic_offset,
    refine_peak,
    spectrum_value,
    sw_phase_correction,
)
from rxproc import conventional_processing, demodulate, make_window, range_doppler_image
from waveform import generate_data_frame, synthesize_time_signal


def doppler_for_column(column, config, params):
    return (column - config.symbols / 2) / (config.symbols * params.symbol_duration)


def model_image(config, params, target, window, seed=0):
    frame = generate_data_frame(config, seed)
    Y = model_received_frame_fd(frame, [target], config, params)
    return frame, Y, conventional_processing(Y, frame, window, config, params)


def oracle_image(config, params, target, window, seed=0):
    frame = generate_data_frame(config, seed)
    tx = synthesize_time_signal(frame, config)
    rx = apply_channel_time(tx, [target], 0.0, seed, config, method='symbol')
    return conventional_processing(demodulate(rx, config), frame, window, config, params)


@pytest.mark.parametrize('n', [8, 64, 257])
def test_czt_with_unit_step_is_dft(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    result = czt_axis(x, n, 1.0, np.exp(-2j * np.pi / n), axis=0)
    assert np.allclose(result, np.fft.fft(x), rtol=1e-10, atol=1e-10)


def test_unzoomed_full_roi_reproduces_image():
    config = make_config(16, 4, 16)
    params = derive_params(config)
    rng = np.random.default_rng(2)
    H = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    image = range_doppler_image(H)
    Z = czt_zoom(H, CoarsePeak(8, 8, 0.0), CztConfig(roi_width=16, zoom_factor=1), config)
    assert np.allclose(Z, image.data, atol=1e-10)


def test_czt_config_validation():
    with pytest.raises(ConfigurationError):
        CztConfig(roi_width=2)
    with pytest.raises(ConfigurationError):
        CztConfig(zoom_factor=0)
    assert CztConfig().points == 800


def test_off_grid_target_refinement(small_config, small_params):
    window = make_window('rectangular', small_config.subcarriers, small_config.symbols)
    alpha = 0.8 * np.exp(1j * 0.7)
    delay = 10.3 * small_params.sample_period
    doppler = doppler_for_column(10.37, small_config, small_params)
    target = TargetDerived.from_parameters(alpha, delay, doppler, small_params)
    _, _, (H, image) = model_image(small_config, small_params, target, window)

    peak = CoarsePeak(10, 10, 0.0)
    assert np.unravel_index(np.argmax(image.power), image.power.shape) == (10, 10)
    est = estimate_target(H, peak, window, small_config, small_params, CztConfig(8, 100))

    assert est.delay / small_params.sample_period == pytest.approx(10.3, abs=0.006)
    assert est.doppler == pytest.approx(doppler, abs=0.006 / (small_config.symbols * small_params.symbol_duration))
    # the frequency-domain model carries no ICI loss, so undo its compensation
    uncompensated = est.magnitude * math.sqrt(est.losses[1])
    assert 20 * math.log10(uncompensated / abs(alpha)) == pytest.approx(0.0, abs=0.01)
    assert math.degrees(est.phase) == pytest.approx(math.degrees(0.7), abs=0.05)


def test_window_loss_is_compensated(small_config, small_params):
    window = make_window('chebyshev', small_config.subcarriers, small_config.symbols)
    target = TargetDerived.from_parameters(0.5, 20 * small_params.sample_period, 0.0, small_params)
    _, _, (H, _) = model_image(small_config, small_params, target, window)
    est = estimate_target(H, CoarsePeak(20, 8, 0.0), window, small_config, small_params, CztConfig(8, 10))
    assert est.magnitude == pytest.approx(0.5, rel=1e-6)


@given(
    vertex=st.floats(min_value=-0.5, max_value=0.5),
    curvature=st.floats(min_value=0.1, max_value=10.0),
    height=st.floats(min_value=1.0, max_value=100.0),
)
def test_quadratic_offset_recovers_parabola_vertex(vertex, curvature, height):
    samples = [height - curvature * (k - vertex) ** 2 for k in (-1, 0, 1)]
    assert quadratic_offset(*samples) == pytest.approx(vertex, abs=1e-9)


def test_quadratic_offset_flat_is_undefined():
    assert quadratic_offset(1.0, 1.0, 1.0) is None


def test_quadratic_skipped_at_roi_border(small_config, small_params):
    Z = np.zeros((80, 80), dtype=complex)
    Z[0, 40] = 1.0
    *_, skipped = refine_peak(Z, CoarsePeak(10, 8, 0.0), CztConfig(8, 10), small_config, small_params,
                              quadratic=True)
    assert skipped


def test_centre_of_zoom_is_coarse_cell(small_config, small_params):
    Z = np.zeros((80, 80), dtype=complex)
    Z[40, 40] = 1.0
    delay, doppler, _, indices, skipped = refine_peak(Z, CoarsePeak(12, 9, 0.0), CztConfig(8, 10),
                                                      small_config, small_params)
    assert indices == (40, 40) and not skipped
    assert delay == pytest.approx(12 / small_config.bandwidth)
    assert doppler == pytest.approx(doppler_for_column(9, small_config, small_params))


def test_losses():
    config = make_config(6652, 458, 280)
    params = derive_params(config)
    window = make_window('rectangular', 8, 4)
    isi, dop, win = losses(0.0, 0.0, window, config, params)
    assert (isi, dop, win) == (1.0, 1.0, 1.0)

    _, dop, _ = losses(0.0, 0.1 * params.subcarrier_spacing, window, config, params)
    assert dop == pytest.approx(0.9675, abs=1e-3)

    isi, _, _ = losses(params.cp_duration + 0.5 * params.data_duration, 0.0, window, config, params)
    assert isi == pytest.approx(0.25)


def test_zero_loss_raises(small_params):
    with pytest.raises(EstimationError):
        estimate_alpha(np.ones((4, 4)), (1, 1), (0.0, 1.0, 1.0), small_params)


def test_projection_exact_on_grid(small_config, small_params):
    alpha = 0.25 * np.exp(-1.1j)
    delay = 12 * small_params.sample_period
    doppler = doppler_for_column(11, small_config, small_params)
    target = TargetDerived.from_parameters(alpha, delay, doppler, small_params)
    frame, Y, _ = model_image(small_config, small_params, target,
                              make_window('rectangular', small_config.subcarriers, small_config.symbols))
    estimate = projection_alpha(Y, frame, delay, doppler, small_config, small_params)
    assert abs(estimate - alpha) / abs(alpha) < 1e-10
    raw = projection_alpha(Y.data, frame.data, delay, doppler, small_config, small_params)
    assert raw == estimate


@pytest.mark.parametrize('delay_samples', [10, 40])
def test_phase_rotation_calibration(delay_samples, small_config, small_params):
    """Phase measured on the time-domain oracle matches the closed-form rotation"""
    window = make_window('rectangular', small_config.subcarriers, small_config.symbols)
    theta = 0.9
    doppler = doppler_for_column(10, small_config, small_params)
    target = TargetDerived.from_parameters(np.exp(1j * theta), delay_samples * small_params.sample_period,
                                           doppler, small_params)
    H, _ = oracle_image(small_config, small_params, target, window)
    est = estimate_target(H, CoarsePeak(delay_samples, 10, 0.0), window, small_config, small_params,
                          CztConfig(8, 10))

    measured = np.angle(np.exp(1j * (est.phase - theta)))
    predicted = np.angle(np.exp(1j * doppler_rotation(est.delay, est.doppler, small_config, small_params)))
    assert math.degrees(abs(np.angle(np.exp(1j * (measured - predicted))))) < 1.0

    corrected = sw_phase_correction(est.phase, est.delay, est.doppler, small_config, small_params)
    assert math.degrees(abs(np.angle(np.exp(1j * (corrected - theta))))) < 1.0
    assert 20 * math.log10(est.magnitude) == pytest.approx(0.0, abs=0.1)


def test_estimate_serialisation(small_config, small_params):
    window = make_window('rectangular', small_config.subcarriers, small_config.symbols)
    target = TargetDerived.from_parameters(0.1, 5 * small_params.sample_period, 0.0, small_params)
    _, _, (H, _) = model_image(small_config, small_params, target, window)
    est = estimate_target(H, CoarsePeak(5, 8, 0.0), window, small_config, small_params, CztConfig(8, 10))
    data = est.to_dict(small_config, small_params)
    assert data['range_m'] == pytest.approx(5 * 3e8 / 2 / 200e6, rel=1e-3)
    assert data['alpha_db'] == pytest.approx(-20.0, abs=1e-6)
    assert set(data['losses']) == {'isi', 'doppler', 'window'}


def test_refined_global_phase_of_moving_target():
    config = make_config(1024, 128, 64)
    params = derive_params(config)
    window = make_window('rectangular', config.subcarriers, config.symbols)
    theta = -0.7
    doppler = doppler_for_column(33.37, config, params)
    target = TargetDerived.from_parameters(np.exp(1j * theta), 40.3 * params.sample_period, doppler, params)
    H, _ = oracle_image(config, params, target, window)
    est = estimate_target(H, CoarsePeak(40, 33, 0.0), window, config, params, CztConfig(8, 100),
                          quadratic=True, global_phase=True)

    assert not est.quadratic_skipped
    assert est.doppler == pytest.approx(doppler, rel=1e-3)
    assert math.degrees(abs(np.angle(np.exp(1j * (est.phase - theta))))) < 0.05
    assert 20 * math.log10(est.magnitude) == pytest.approx(0.0, abs=0.01)
    # the intra-symbol rotation is far above the tolerance
    assert math.degrees(doppler_rotation(est.delay, est.doppler, config, params)) > 1.0


def test_spectrum_value_matches_image_on_grid(small_config, small_params):
    rng = np.random.default_rng(3)
    H = rng.standard_normal((256, 16)) + 1j * rng.standard_normal((256, 16))
    image = range_doppler_image(H)
    delay = 37 / small_config.bandwidth
    doppler = doppler_for_column(5, small_config, small_params)
    assert spectrum_value(H, delay, doppler, small_config, small_params) == pytest.approx(image.data[37, 5])
