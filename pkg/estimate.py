"""
Estimate - sub-bin delay/Doppler refinement with a 2D chirp-Z zoom and
loss-compensated complex attenuation estimation
"""
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
from scipy import signal, special

from channel import frame_array, steering_vectors
from config import SPEED_OF_LIGHT, ConfigurationError, EstimationError, doppler_to_velocity
from linkbudget import eta
from logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True)
class CztConfig:
    roi_width: int = 8
    zoom_factor: int = 100

    def __post_init__(self):
        if self.roi_width < 3:
            raise ConfigurationError('roi_width', "must be at least 3 bins")
        if self.zoom_factor < 1:
            raise ConfigurationError('zoom_factor', "must be at least 1")

    @property
    def points(self):
        return self.roi_width * self.zoom_factor

    @classmethod
    def from_dict(cls, data):
        return cls(roi_width=int(data.get('roi_width', 8)), zoom_factor=int(data.get('zoom_factor', 100)))


@dataclass
class TargetEstimate:
    delay: float
    doppler: float
    phase: float
    magnitude: float
    coarse: Tuple[int, int]
    fine: Tuple[float, float]
    losses: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    quadratic_skipped: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def alpha(self):
        return self.magnitude * np.exp(1j * self.phase)

    def to_dict(self, config, params):
        path_gain = self.magnitude / math.sqrt(config.tx_power)
        return {
            'range_m': self.delay * SPEED_OF_LIGHT / 2,
            'velocity_mps': doppler_to_velocity(self.doppler, params),
            'alpha_db': 20 * math.log10(path_gain) if path_gain > 0 else None,
            'phase_deg': math.degrees(self.phase),
            'losses': {'isi': self.losses[0], 'doppler': self.losses[1], 'window': self.losses[2]},
            'coarse_bins': list(self.coarse),
        }


def czt_axis(x, points, start, step, axis):
    """Chirp-Z transform along one axis, X_k = sum_n x_n z_k^-n with z_k = start * step^-k"""
    return signal.czt(x, m=points, w=step, a=start, axis=axis)


def czt_zoom(H, peak, cfg, config):
    """Zoomed 2D spectrum of H around a coarse peak

    Range stage: A_r = exp(-j2pi(n - B_roi/2)/N), W_r = exp(j2pi/(LN)) over
    subcarriers. Doppler stage: A_d = exp(j2pi(m - (M + B_roi)/2)/M),
    W_d = exp(-j2pi/(LM)) over symbols. The result is scaled like the image,
    so on-grid cells coincide with range-Doppler image values.
    """
    n, m = H.shape
    roi = cfg.roi_width
    if roi > min(n, m):
        logger.warning(f"ROI width {roi} exceeds the {n}x{m} grid, clamped")
        roi = min(n, m)
    points = roi * cfg.zoom_factor

    a_r = np.exp(-2j * np.pi * (peak.range_index - roi / 2) / n)
    w_r = np.exp(2j * np.pi / (cfg.zoom_factor * n))
    zoomed = czt_axis(H, points, a_r, w_r, axis=0)

    a_d = np.exp(2j * np.pi * (peak.doppler_index - (m + roi) / 2) / m)
    w_d = np.exp(-2j * np.pi / (cfg.zoom_factor * m))
    zoomed = czt_axis(zoomed, points, a_d, w_d, axis=1)

    return zoomed / math.sqrt(n * m)


def quadratic_offset(left, center, right):
    """Vertex offset of the parabola through three equally spaced samples"""
    denominator = 2.0 * (left + right - 2.0 * center)
    if denominator == 0:
        return None
    return (left - right) / denominator


def refine_peak(Z, coarse, cfg, config, params, quadratic=False):
    """Fine delay and Doppler from the zoomed spectrum

    Returns:
        (delay, doppler, fine_indices, peak_indices, quadratic_skipped)
    """
    power = np.abs(Z) ** 2
    points = Z.shape[0]
    k_star, p_star = np.unravel_index(np.argmax(power), power.shape)
    k_fine, p_fine = float(k_star), float(p_star)
    skipped = False

    if quadratic:
        if 0 < k_star < points - 1 and 0 < p_star < Z.shape[1] - 1:
            dk = quadratic_offset(power[k_star - 1, p_star], power[k_star, p_star], power[k_star + 1, p_star])
            dp = quadratic_offset(power[k_star, p_star - 1], power[k_star, p_star], power[k_star, p_star + 1])
            if dk is None or dp is None:
                skipped = True
            else:
                k_fine += dk
                p_fine += dp
        else:
            skipped = True
        if skipped:
            logger.warning(f"Peak at ROI border for coarse cell {coarse.range_index},{coarse.doppler_index}; "
                           f"quadratic interpolation skipped")

    delta_k = (k_fine - points / 2) / cfg.zoom_factor
    delta_p = (p_fine - points / 2) / cfg.zoom_factor

    delay = (coarse.range_index + delta_k) / config.bandwidth
    if delay < 0:
        delay = 0.0
    doppler = (coarse.doppler_index + delta_p - config.symbols / 2) / (config.symbols * params.symbol_duration)
    return delay, doppler, (k_fine, p_fine), (int(k_star), int(p_star)), skipped


def losses(delay, doppler, window, config, params):
    """ISI, Doppler-spreading and window power losses of an echo"""
    if delay < 0:
        raise EstimationError(f"negative delay {delay}")
    captured = eta(delay, params)
    isi = captured ** 2
    x = 2 * np.pi * doppler * captured / (config.subcarriers * params.subcarrier_spacing)
    dop = float(special.diric(x, config.subcarriers) ** 2)
    return isi, dop, window.window_loss


def spectrum_value(H, delay, doppler, config, params):
    """Image value of H evaluated off the grid at a delay/Doppler pair

    Same scaling and sign convention as range_doppler_image, so at on-grid
    points it equals the image cell.
    """
    n, m = H.shape
    range_bins = delay * config.bandwidth
    doppler_bins = doppler * m * params.symbol_duration
    to_range = np.exp(2j * np.pi * np.arange(n) * range_bins / n)
    to_doppler = np.exp(-2j * np.pi * np.arange(m) * doppler_bins / m)
    return complex(to_range @ H @ to_doppler / math.sqrt(n * m))


def compensate_peak(value, loss_terms, params):
    total_loss = params.processing_gain * np.prod(loss_terms)
    if not total_loss > 0:
        raise EstimationError(f"losses {loss_terms} leave no signal to invert")
    magnitude = math.sqrt(abs(value) ** 2 / total_loss)
    phase = float(np.angle(value))
    return magnitude, phase, magnitude * np.exp(1j * phase)


def estimate_alpha(Z, peak_indices, loss_terms, params):
    """Loss-compensated magnitude and phase at the zoomed peak

    Returns:
        (magnitude, phase, alpha)
    """
    return compensate_peak(Z[peak_indices], loss_terms, params)


def projection_alpha(Y, X, delay, doppler, config, params):
    """Least-squares projection of Y . X* onto the steering vectors

    alpha = b^H (Y . X*) conj(c) / (|b|^2 |c|^2)
    """
    y = frame_array(Y)[:, :config.symbols]
    x = frame_array(X)[:, :config.symbols]
    steering = steering_vectors(delay, doppler, config.symbols, config, params)
    correlated = y * np.conj(x)
    numerator = np.conj(steering.b) @ correlated @ np.conj(steering.c)
    return complex(numerator / (np.vdot(steering.b, steering.b).real * np.vdot(steering.c, steering.c).real))


def doppler_rotation(delay, doppler, config, params):
    """Doppler phase accumulated up to the centre of the effective receive window

    The window of every symbol starts N_cp samples after the symbol start and
    keeps the samples from max(0, N_h - N_cp) on; its centre sets the phase
    seen at the image peak.
    """
    delay_samples = delay / params.sample_period
    first = min(max(0.0, delay_samples - config.cp_length), config.subcarriers - 1)
    centre = config.cp_length + (first + config.subcarriers - 1) / 2
    return 2 * np.pi * doppler * params.sample_period * centre


def sw_phase_correction(theta_raw, delay, doppler, config, params):
    """Refer an image-peak phase to t = 0 for time-domain reconstruction"""
    corrected = theta_raw - doppler_rotation(delay, doppler, config, params)
    return float(np.angle(np.exp(1j * corrected)))


def estimate_target(H, peak, window, config, params, czt_cfg, quadratic=False, global_phase=False):
    """CZT zoom, peak refinement, loss compensation and alpha for one peak"""
    Z = czt_zoom(H, peak, czt_cfg, config)
    delay, doppler, fine, peak_indices, skipped = refine_peak(Z, peak, czt_cfg, config, params, quadratic)
    loss_terms = losses(delay, doppler, window, config, params)
    if quadratic and not skipped:
        # value at the interpolated point
        magnitude, phase, _ = compensate_peak(spectrum_value(H, delay, doppler, config, params), loss_terms, params)
    else:
        magnitude, phase, _ = estimate_alpha(Z, peak_indices, loss_terms, params)
    if global_phase:
        phase = sw_phase_correction(phase, delay, doppler, config, params)

    logger.debug(
        f"Target at bins ({peak.range_index}, {peak.doppler_index}): tau={delay * 1e9:.3f} ns, "
        f"fD={doppler:.1f} Hz, |alpha|={magnitude:.4e}, phase={math.degrees(phase):.3f} deg"
    )
    return TargetEstimate(
        delay=delay,
        doppler=doppler,
        phase=phase,
        magnitude=magnitude,
        coarse=(peak.range_index, peak.doppler_index),
        fine=fine,
        losses=loss_terms,
        quadratic_skipped=skipped,
    )
