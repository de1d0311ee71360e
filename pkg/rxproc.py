"""
Receive processing - demodulation, zero-forcing equalization, 2D windowing
and range-Doppler image formation
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import windows

from channel import FrequencyFrame, frame_array, steering_vectors
from config import SPEED_OF_LIGHT, ConfigurationError, DimensionError, doppler_to_velocity
from logger import setup_logger

logger = setup_logger(__name__)

WINDOW_KINDS = ('rectangular', 'chebyshev', 'hamming')


@dataclass
class WindowSpec:
    kind: str
    w_r: np.ndarray
    w_d: np.ndarray
    sidelobe_db: float = 60.0

    @property
    def window_loss(self):
        """Peak power loss of the 2D window, |mean(w_r w_d^T)|^2"""
        return float(abs(np.mean(self.w_r) * np.mean(self.w_d)) ** 2)

    @property
    def matrix(self):
        return np.outer(self.w_r, self.w_d)


@dataclass
class RangeDopplerImage:
    """Complex range x velocity image with zero velocity at column M/2"""

    data: np.ndarray
    range_axis: np.ndarray
    velocity_axis: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def power(self):
        return np.abs(self.data) ** 2

    def __add__(self, other):
        return RangeDopplerImage(self.data + other.data, self.range_axis, self.velocity_axis, dict(self.metadata))


def make_window(kind, subcarriers, symbols, sidelobe_db=60.0):
    """Build the range and Doppler window vectors

    Args:
        kind: rectangular, chebyshev or hamming
        subcarriers: N
        symbols: M
        sidelobe_db: Chebyshev sidelobe attenuation

    Returns:
        WindowSpec
    """
    if kind == 'rectangular':
        w_r, w_d = np.ones(subcarriers), np.ones(symbols)
    elif kind == 'chebyshev':
        w_r = windows.chebwin(subcarriers, at=sidelobe_db)
        w_d = windows.chebwin(symbols, at=sidelobe_db)
    elif kind == 'hamming':
        w_r, w_d = windows.hamming(subcarriers), windows.hamming(symbols)
    else:
        raise ConfigurationError('window', f"unknown window '{kind}', expected one of {WINDOW_KINDS}")
    return WindowSpec(kind=kind, w_r=w_r, w_d=w_d, sidelobe_db=sidelobe_db)


def demodulate(rx, config, window_offset=0, symbols=None):
    """Strip CPs and DFT every symbol of a received stream

    The DFT is scaled by 1/sqrt(N), so a zero-delay unit echo of the
    synthesized frame returns sqrt(P_tx) * X.
    """
    symbols = symbols or config.symbols
    n, n_cp = config.subcarriers, config.cp_length
    symbol_length = n + n_cp
    needed = window_offset + symbols * symbol_length
    if rx.length < needed:
        raise DimensionError(f"Signal has {rx.length} samples, {needed} needed from offset {window_offset}")

    starts = window_offset + np.arange(symbols) * symbol_length + n_cp
    blocks = rx.samples[starts[None, :] + np.arange(n)[:, None]]
    return FrequencyFrame(np.fft.fft(blocks, axis=0) / math.sqrt(n))


def equalize_and_window(Y, X, window):
    """Zero-forcing equalization followed by the 2D window, H = (Y / X) . w_r w_d^T"""
    y = frame_array(Y)
    x = frame_array(X)[:, :y.shape[1]]
    if x.shape != y.shape:
        raise DimensionError(f"Received frame {y.shape} and reference {x.shape} differ")
    if np.any(x == 0):
        raise DimensionError("Reference frame contains zero symbols")
    if window.w_r.size != y.shape[0] or window.w_d.size != y.shape[1]:
        raise DimensionError("Window length does not match the frame")
    return (y / x) * window.matrix


def permute_doppler(matrix):
    """Swap the two Doppler halves so zero velocity lands on column M/2"""
    half = matrix.shape[1] // 2
    return np.concatenate([matrix[:, half:], matrix[:, :half]], axis=1)


def image_axes(config, params, symbols):
    range_axis = np.arange(config.subcarriers) * SPEED_OF_LIGHT / (2 * config.bandwidth)
    doppler = (np.arange(symbols) - symbols / 2) / (symbols * params.symbol_duration)
    return range_axis, doppler_to_velocity(doppler, params)


def range_doppler_image(H, config=None, params=None):
    """Energy-preserving IDFT over subcarriers, DFT over symbols, centered Doppler"""
    profile = np.fft.ifft(H, axis=0, norm='ortho')
    data = permute_doppler(np.fft.fft(profile, axis=1, norm='ortho'))

    if config is not None and params is not None:
        range_axis, velocity_axis = image_axes(config, params, H.shape[1])
        metadata = {'config_hash': config.config_hash()}
    else:
        range_axis = np.arange(H.shape[0], dtype=float)
        velocity_axis = np.arange(H.shape[1], dtype=float) - H.shape[1] / 2
        metadata = {}
    return RangeDopplerImage(data=data, range_axis=range_axis, velocity_axis=velocity_axis, metadata=metadata)


def conventional_processing(Y, X, window, config, params):
    """Equalize, window and image a frame; returns (H, image)"""
    y = frame_array(Y)
    x = frame_array(X)
    H = equalize_and_window(y[:, :config.symbols], x[:, :config.symbols], window)
    image = range_doppler_image(H, config, params)
    image.metadata['window'] = window.kind
    return H, image


def target_image(alpha, delay, doppler, window, config, params):
    """Noiseless ISI-free image of one echo, used to restore cancelled targets"""
    steering = steering_vectors(delay, doppler, config.symbols, config, params)
    H = alpha * np.outer(steering.b, steering.c) * window.matrix
    return range_doppler_image(H, config, params)


def target_bins(delay, doppler, config, params):
    """Nearest image cell of a delay/Doppler pair"""
    range_bin = int(round(delay * config.bandwidth))
    doppler_bin = int(round(doppler * config.symbols * params.symbol_duration)) + config.symbols // 2
    return range_bin, doppler_bin


def power_dbm(power):
    return 10.0 * np.log10(np.maximum(power, np.finfo(float).tiny)) + 30.0


def floor_power(power, cells, exclusion_radius_bins):
    """Median cell power outside the exclusion boxes, divided by ln 2 so that
    it equals the mean power of exponential (Gaussian) noise"""
    keep = np.ones_like(power, dtype=bool)
    for row, col in cells:
        keep[max(row - exclusion_radius_bins, 0):row + exclusion_radius_bins + 1,
             max(col - exclusion_radius_bins, 0):col + exclusion_radius_bins + 1] = False
    return float(np.median(power[keep]) / math.log(2)) if keep.any() else 0.0


def image_metrics(image, truth_targets, exclusion_radius_bins, config, params):
    """Peak powers, interference-noise floor and per-target image SINR"""
    power = image.power
    n_rows, n_cols = power.shape
    cells = []

    for target in truth_targets:
        row, col = target_bins(target.delay, target.doppler, config, params)
        if not (0 <= row < n_rows and 0 <= col < n_cols):
            raise DimensionError(f"Target cell ({row}, {col}) outside the {n_rows}x{n_cols} image")
        cells.append((row, col))

    floor_dbm = float(power_dbm(floor_power(power, cells, exclusion_radius_bins)))

    peaks_dbm = []
    for row, col in cells:
        neighbourhood = power[max(row - 1, 0):row + 2, max(col - 1, 0):col + 2]
        peaks_dbm.append(float(power_dbm(neighbourhood.max())))

    return {
        'floor_dbm': floor_dbm,
        'peak_dbm': peaks_dbm,
        'sinr_db': [peak - floor_dbm for peak in peaks_dbm],
        'cells': cells,
    }
