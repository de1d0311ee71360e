"""
Channel - received sensing signal, computed two independent ways.

The time-domain oracle delays the transmitted waveform sample by sample.
The frequency-domain model builds the same frame from steering vectors and
the truncation operator Phi. Each is used to check the other.
"""
import math
from dataclasses import dataclass

import numpy as np

from config import ICI_DOPPLER_FRACTION, ConfigurationError, DimensionError, velocity_to_doppler
from linkbudget import round_trip_delay, target_attenuation
from logger import setup_logger

logger = setup_logger(__name__)

GRID_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TargetDerived:
    """Channel parameters of one echo.

    ``alpha`` is the frame-domain complex attenuation, i.e. it already
    includes sqrt(P_tx).
    """

    delay: float
    delay_samples: float
    doppler: float
    alpha: complex
    phase: float = 0.0

    @classmethod
    def from_parameters(cls, alpha, delay, doppler, params):
        return cls(
            delay=float(delay),
            delay_samples=float(delay) / params.sample_period,
            doppler=float(doppler),
            alpha=complex(alpha),
            phase=float(np.angle(alpha)),
        )


def frame_array(frame):
    """Raw matrix of a SymbolFrame or FrequencyFrame; arrays pass through"""
    return frame if isinstance(frame, np.ndarray) else frame.data


@dataclass
class FrequencyFrame:
    data: np.ndarray

    @property
    def symbols(self):
        return self.data.shape[1]

    def __add__(self, other):
        return FrequencyFrame(self.data + other.data)

    def __sub__(self, other):
        return FrequencyFrame(self.data - other.data)


@dataclass
class SteeringVectors:
    b: np.ndarray
    c: np.ndarray

    @staticmethod
    def shift(matrix):
        """Right-multiplication by J: column m takes column m-1, column 0 is zero"""
        shifted = np.zeros_like(matrix)
        shifted[:, 1:] = matrix[:, :-1]
        return shifted


def target_derived(spec, config, params):
    """Delay, Doppler and complex attenuation of a scene target"""
    delay = float(round_trip_delay(spec.range))
    if delay >= params.data_duration + params.cp_duration:
        raise ConfigurationError('range_m', f"{spec.range} m lies beyond one symbol duration of delay")

    doppler = velocity_to_doppler(spec.velocity, params)
    if abs(doppler) > ICI_DOPPLER_FRACTION * params.subcarrier_spacing:
        logger.warning(
            f"Target at {spec.range:.1f} m: Doppler {doppler:.1f} Hz exceeds "
            f"{ICI_DOPPLER_FRACTION} subcarrier spacings, ICI model is approximate"
        )
    if spec.range > params.unambiguous_range:
        logger.warning(f"Target at {spec.range:.1f} m lies beyond the unambiguous range")

    magnitude = math.sqrt(config.tx_power) * target_attenuation(spec, config, params)
    return TargetDerived(
        delay=delay,
        delay_samples=delay / params.sample_period,
        doppler=doppler,
        alpha=magnitude * np.exp(1j * spec.phase),
        phase=spec.phase,
    )


def steering_vectors(delay, doppler, symbols, config, params):
    """Delay steering vector over subcarriers and Doppler vector over symbols"""
    n = np.arange(config.subcarriers)
    m = np.arange(symbols)
    b = np.exp(-2j * np.pi * n * params.subcarrier_spacing * delay)
    c = np.exp(2j * np.pi * doppler * m * params.symbol_duration)
    return SteeringVectors(b=b, c=c)


def split_delay(delay_samples):
    """Integer and fractional sample delay, snapping values within 1e-9 of the grid"""
    whole = math.floor(delay_samples)
    frac = delay_samples - whole
    if frac < GRID_TOLERANCE:
        frac = 0.0
    elif frac > 1.0 - GRID_TOLERANCE:
        whole, frac = whole + 1, 0.0
    return whole, frac


def phi_mask(n_h, n, n_cp):
    """Receive-window samples that still belong to the current symbol"""
    mask = np.zeros(n)
    if n_cp < n_h <= n + n_cp:
        whole, frac = split_delay(n_h)
        first = whole - n_cp + (1 if frac > 0 else 0)
        mask[max(first, 0):] = 1.0
    return mask


def phi_apply(n_h, v, n_cp):
    """Apply Phi_h to a vector (or column-wise to a matrix) without forming it

    Phi_h v = DFT(mask * IDFT(v)), mask selecting i in [N_h - N_cp, N - 1].
    Phi is zero unless N_cp < N_h <= N + N_cp.
    """
    v = np.asarray(v)
    n = v.shape[0]
    mask = phi_mask(n_h, n, n_cp)
    if not mask.any():
        return np.zeros_like(v, dtype=complex)
    if v.ndim > 1:
        mask = mask.reshape((n,) + (1,) * (v.ndim - 1))
    return np.fft.fft(mask * np.fft.ifft(v, axis=0), axis=0)


def phi_matrix(n_h, n, n_cp):
    """Dense Phi_h for verification on small N"""
    mask = phi_mask(n_h, n, n_cp)
    i = np.nonzero(mask)[0]
    p = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    if i.size == 0:
        return np.zeros((n, n), dtype=complex)
    return np.exp(2j * np.pi * (k - p)[..., None] * i / n).sum(axis=-1) / n


def single_target_frame(data, target, config, params):
    """Noiseless frequency-domain frame of one echo

    Y = alpha [ (b c^T . X) + Phibar(b' c^T . X) J - Phibar(b c^T . X) ]
    with Phibar = I - Phi the tail taken from the previous symbol and b'
    the delay vector at tau - T_cp. Doppler phase is applied per received
    symbol after the shift.
    """
    symbols = data.shape[1]
    steering = steering_vectors(target.delay, target.doppler, symbols, config, params)
    current = steering.b[:, None] * data

    if target.delay_samples > config.cp_length:
        previous = steering_vectors(
            target.delay - params.cp_duration, target.doppler, symbols, config, params
        ).b[:, None] * data
        isi = SteeringVectors.shift(previous)
        isi = isi - phi_apply(target.delay_samples, isi, config.cp_length)
        ici = current - phi_apply(target.delay_samples, current, config.cp_length)
        frame = current + isi - ici
    else:
        frame = current

    return target.alpha * frame * steering.c[None, :]


def model_received_frame_fd(frame, targets, config, params):
    """Superposition of all target echoes in the frequency domain"""
    data = frame.data
    if data.shape[0] != config.subcarriers:
        raise DimensionError(f"Frame has {data.shape[0]} subcarriers, config has {config.subcarriers}")

    total = np.zeros(data.shape, dtype=complex)
    for target in targets:
        total += single_target_frame(data, target, config, params)
    return FrequencyFrame(total)


def spectral_delay(samples, delay_samples):
    """Circular fractional delay by a phase ramp on the whole-frame spectrum"""
    freqs = np.fft.fftfreq(samples.size)
    return np.fft.ifft(np.fft.fft(samples) * np.exp(-2j * np.pi * freqs * delay_samples))


def symbolwise_delay(tx, delay_samples):
    """Delay a CP-OFDM signal exactly as its continuous-time waveform would be

    Each symbol's spectrum gets the fractional phase ramp, and every output
    sample is taken from the symbol whose rectangular window covers the
    delayed instant.
    """
    n, n_cp, symbols = tx.subcarriers, tx.cp_length, tx.symbols
    if n == 0 or symbols == 0:
        raise DimensionError("TimeSignal carries no symbol structure; use the whole-frame delay")
    symbol_length = n + n_cp

    starts = np.arange(symbols) * symbol_length + n_cp
    blocks = tx.samples[starts[None, :] + np.arange(n)[:, None]]

    whole, frac = split_delay(delay_samples)
    ramp = np.exp(-2j * np.pi * np.arange(n) * frac / n)
    shifted = np.fft.ifft(np.fft.fft(blocks, axis=0) * ramp[:, None], axis=0)

    t_shift = np.arange(tx.length) - whole
    if frac > 0:
        symbol = np.floor_divide(t_shift - 1, symbol_length)
    else:
        symbol = np.floor_divide(t_shift, symbol_length)
    valid = (symbol >= 0) & (symbol < symbols)
    position = np.mod(t_shift - symbol * symbol_length - n_cp, n)

    out = np.zeros(tx.length, dtype=complex)
    out[valid] = shifted[position[valid], symbol[valid]]
    return out


def echo_samples(tx, target, config, method='frame'):
    """Delayed, Doppler-shifted and scaled copy of the transmit signal

    method='frame' delays the whole frame by a spectral phase ramp (band-limited
    fractional delay); method='symbol' applies the ramp per symbol and keeps
    every symbol's rectangular window, which is what the frequency-domain model
    reproduces exactly.
    """
    if method == 'symbol':
        delayed = symbolwise_delay(tx, target.delay_samples)
    elif method == 'frame':
        delayed = spectral_delay(tx.samples, target.delay_samples)
    else:
        raise ConfigurationError('method', f"unknown delay method '{method}'")

    n = np.arange(tx.length) + tx.start_offset
    gain = target.alpha / math.sqrt(config.tx_power)
    return gain * delayed * np.exp(2j * np.pi * target.doppler * n * tx.sample_period)


def complex_noise(length, noise_power, seed):
    """Circular complex white Gaussian noise from a counter-based generator"""
    rng = np.random.Generator(np.random.Philox(seed))
    scale = math.sqrt(noise_power / 2.0)
    return scale * (rng.standard_normal(length) + 1j * rng.standard_normal(length))


def apply_channel_time(tx, targets, noise_power, seed, config, method='frame'):
    """Time-domain oracle: sum of echoes plus AWGN of total power noise_power"""
    if noise_power < 0:
        raise ConfigurationError('noise_power', "must be non-negative")

    samples = np.zeros(tx.length, dtype=complex)
    for target in targets:
        samples += echo_samples(tx, target, config, method)

    if noise_power > 0:
        samples += complex_noise(tx.length, noise_power, seed)

    logger.debug(f"Applied channel with {len(targets)} targets, noise {noise_power:.3e} W")
    return tx.with_samples(samples)
