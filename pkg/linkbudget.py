"""
Link budget - analytic noise, quantization and interference floors of the
OFDM radar and the resulting detectability limits
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize

from config import (
    BOLTZMANN,
    SPEED_OF_LIGHT,
    ConfigurationError,
    UnsupportedOperationError,
    db_to_linear,
    linear_to_db,
    watt_to_dbm,
)
from logger import setup_logger

logger = setup_logger(__name__)

DETECTION_THRESHOLD_DB = 17.0


@dataclass(frozen=True)
class TargetSpec:
    """Ground-truth scene entry.

    Exactly one of ``rcs`` (m^2) and ``attenuation`` (linear amplitude |alpha|)
    is set.
    """

    range: float
    velocity: float = 0.0
    rcs: Optional[float] = None
    attenuation: Optional[float] = None
    phase: float = 0.0

    def __post_init__(self):
        if not self.range > 0:
            raise ConfigurationError('range_m', f"must be positive, got {self.range}")
        if (self.rcs is None) == (self.attenuation is None):
            raise ConfigurationError('rcs_dbsm', "exactly one of rcs_dbsm / attenuation_db must be set")
        if self.rcs is not None and self.rcs < 0:
            raise ConfigurationError('rcs_dbsm', "rcs must be non-negative")
        if self.attenuation is not None and self.attenuation < 0:
            raise ConfigurationError('attenuation_db', "attenuation must be non-negative")

    @classmethod
    def from_dict(cls, data):
        """Parse a scene-file entry (range_m, velocity_mps or velocity_kmh,
        rcs_dbsm or attenuation_db, phase_deg)"""
        data = dict(data)
        try:
            if 'range_m' not in data:
                raise ConfigurationError('range_m', "missing")
            velocity = 0.0
            if 'velocity_mps' in data:
                velocity = float(data.pop('velocity_mps'))
            elif 'velocity_kmh' in data:
                velocity = float(data.pop('velocity_kmh')) / 3.6

            rcs = None
            attenuation = None
            if 'rcs_dbsm' in data:
                rcs = db_to_linear(float(data.pop('rcs_dbsm')))
            if 'attenuation_db' in data:
                # attenuation is a loss on the amplitude factor
                attenuation = 10.0 ** (-float(data.pop('attenuation_db')) / 20.0)

            target = cls(
                range=float(data.pop('range_m')),
                velocity=velocity,
                rcs=rcs,
                attenuation=attenuation,
                phase=math.radians(float(data.pop('phase_deg', 0.0))),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError('targets', f"invalid target entry: {e}")

        if data:
            raise ConfigurationError(sorted(data)[0], "unknown target key")
        return target


@dataclass
class LinkBudgetReport:
    thermal_noise_power: float
    quantization_noise_power: float
    interference_power_per_target: List[float] = field(default_factory=list)
    dominant_noise: float = 0.0
    ideal_snr: List[Optional[float]] = field(default_factory=list)
    actual_sinr: List[float] = field(default_factory=list)
    max_detectable_range: List[Optional[float]] = field(default_factory=list)

    def to_dict(self):
        def dbm(value):
            return watt_to_dbm(value) if value > 0 else None

        def db(value):
            return linear_to_db(value) if value else None

        return {
            'thermal_dbm': dbm(self.thermal_noise_power),
            'quantization_dbm': dbm(self.quantization_noise_power),
            'interference_dbm': [dbm(p) for p in self.interference_power_per_target],
            'dominant_noise_dbm': dbm(self.dominant_noise),
            'ideal_snr_db': [db(s) if s is not None else None for s in self.ideal_snr],
            'actual_sinr_db': [db(s) for s in self.actual_sinr],
            'max_detectable_range_m': self.max_detectable_range,
        }


def eta(delay, params):
    """Captured signal fraction of an echo inside the receive window"""
    value = 1.0 - (np.asarray(delay, dtype=float) - params.cp_duration) / params.data_duration
    value = np.clip(value, 0.0, 1.0)
    return float(value) if value.ndim == 0 else value


def round_trip_delay(range_m):
    return 2.0 * np.asarray(range_m, dtype=float) / SPEED_OF_LIGHT


def attenuation_from_rcs(rcs, range_m, config, params):
    """Radar-equation amplitude factor |alpha| of a point target"""
    range_m = np.asarray(range_m, dtype=float)
    gain = config.tx_gain * config.rx_gain * rcs * params.wavelength ** 2
    value = np.sqrt(gain / ((4 * np.pi) ** 3 * range_m ** 4))
    return float(value) if value.ndim == 0 else value


def target_attenuation(target, config, params):
    if target.rcs is not None:
        return attenuation_from_rcs(target.rcs, target.range, config, params)
    return target.attenuation


def received_power(target, config, params):
    return config.tx_power * target_attenuation(target, config, params) ** 2


def thermal_noise_power(config):
    return BOLTZMANN * config.bandwidth * config.ambient_temperature * config.noise_figure


def sqnr(adc_bits, papr_factor):
    """ADC signal-to-quantization-noise ratio in dB"""
    return 6.02 * adc_bits + 10.0 * math.log10(3.0 * papr_factor)


def quantization_floor(config, params):
    """Quantization noise power set by the Tx-Rx spillover peak

    The ADC full scale follows the spillover peak power (P_tx / isolation) / F,
    and the SQNR is counted below that peak.
    """
    isolation = db_to_linear(config.tx_rx_isolation_db)
    if math.isinf(isolation):
        return 0.0
    spillover_peak = config.tx_power / isolation / config.papr_factor
    return spillover_peak / db_to_linear(sqnr(config.adc_bits, config.papr_factor))


def interference_power(target, config, params):
    """ISI/ICI power spread into the image by an excess-delay echo"""
    captured = eta(round_trip_delay(target.range), params)
    return received_power(target, config, params) * (1.0 - captured ** 2)


def ideal_snr(target, config, params):
    """Post-processing SNR without any delay-induced loss"""
    if target.rcs is None:
        raise UnsupportedOperationError("ideal SNR needs an RCS, not an attenuation override")
    return received_power(target, config, params) * params.processing_gain / thermal_noise_power(config)


def dominant_noise(config, params, interferers=()):
    total_interference = sum(interference_power(t, config, params) for t in interferers)
    return max(thermal_noise_power(config), quantization_floor(config, params), total_interference)


def actual_sinr(target, config, params, interferers=()):
    """Post-processing SINR including window mismatch loss and the dominant floor

    The target's own interference counts towards the floor.
    """
    captured = eta(round_trip_delay(target.range), params)
    signal = received_power(target, config, params) * params.processing_gain * captured ** 2
    floor = dominant_noise(config, params, [target, *interferers])
    return signal / floor


def worst_case_interferer_range(rcs, config, params):
    """Range (on the range-bin grid) that maximises interference power"""
    bin_width = SPEED_OF_LIGHT / (2 * config.bandwidth)
    ranges = np.arange(1, config.subcarriers + config.cp_length) * bin_width
    captured = eta(round_trip_delay(ranges), params)
    power = config.tx_power * attenuation_from_rcs(rcs, ranges, config, params) ** 2 * (1.0 - captured ** 2)
    best = ranges[int(np.argmax(power))]
    logger.debug(f"Worst-case interferer range for rcs={rcs:g} m^2: {best:.2f} m")
    return float(best)


def max_detectable_range(target_rcs, interferer, threshold_db, config, params):
    """Largest range at which a target still reaches the SINR threshold

    Args:
        target_rcs: target RCS in m^2
        interferer: TargetSpec or None
        threshold_db: required SINR in dB
        config: OfdmConfig
        params: DerivedParams

    Returns:
        (range_m, below_threshold) where below_threshold flags that no
        range satisfies the threshold (range_m is then 0)
    """
    if threshold_db <= 0:
        raise ConfigurationError('threshold_db', "must be positive")
    interferers = [interferer] if interferer is not None else []
    threshold = db_to_linear(threshold_db)

    def margin(range_m):
        target = TargetSpec(range=range_m, rcs=target_rcs)
        return linear_to_db(actual_sinr(target, config, params, interferers)) - linear_to_db(threshold)

    r_max = params.unambiguous_range
    r_min = SPEED_OF_LIGHT / (2 * config.bandwidth)

    if margin(r_max) >= 0:
        return r_max, False
    if margin(r_min) < 0:
        logger.warning(f"Target rcs={target_rcs:g} m^2 below {threshold_db} dB everywhere")
        return 0.0, True

    return float(optimize.bisect(margin, r_min, r_max, xtol=1e-6)), False


def sweep_ranges(params, points=1000):
    """Uniform samples of the unambiguous interval [0, R_unamb) without its end points

    R_unamb itself aliases onto range zero.
    """
    if points < 2:
        raise ConfigurationError('points', "need at least two sweep points")
    return np.arange(1, points) * params.unambiguous_range / points


def range_profile(rcs, ranges, config, params):
    """Received, image-peak and floor powers of one target swept in range

    Returns:
        dict of numpy arrays keyed like the noise-floor CSV columns
    """
    ranges = np.asarray(ranges, dtype=float)
    captured = eta(round_trip_delay(ranges), params)
    rx_power = config.tx_power * attenuation_from_rcs(rcs, ranges, config, params) ** 2
    interference = rx_power * (1.0 - captured ** 2)
    thermal = np.full_like(ranges, thermal_noise_power(config))
    quant = np.full_like(ranges, quantization_floor(config, params))
    image_peak = rx_power * params.processing_gain * captured ** 2

    with np.errstate(divide='ignore'):
        return {
            'range_m': ranges,
            'thermal_dbm': 10 * np.log10(thermal) + 30,
            'quant_dbm': 10 * np.log10(quant) + 30,
            'interference_dbm': 10 * np.log10(interference) + 30,
            'rx_power_dbm': 10 * np.log10(rx_power) + 30,
            'image_peak_dbm': 10 * np.log10(image_peak) + 30,
            'mismatch_loss_db': -20 * np.log10(captured),
        }


def link_budget(targets, config, params, threshold_db=DETECTION_THRESHOLD_DB):
    """Analytic link budget of a scene

    Every other target acts as an interferer for the per-target SINR and
    detectable range.
    """
    targets = list(targets)
    report = LinkBudgetReport(
        thermal_noise_power=thermal_noise_power(config),
        quantization_noise_power=quantization_floor(config, params),
    )
    report.interference_power_per_target = [interference_power(t, config, params) for t in targets]
    report.dominant_noise = dominant_noise(config, params, targets)

    for i, target in enumerate(targets):
        others = targets[:i] + targets[i + 1:]
        report.ideal_snr.append(ideal_snr(target, config, params) if target.rcs is not None else None)
        report.actual_sinr.append(actual_sinr(target, config, params, others))

        if target.rcs is None:
            report.max_detectable_range.append(None)
            continue
        strongest = max(others, key=lambda t: interference_power(t, config, params), default=None)
        reach, _ = max_detectable_range(target.rcs, strongest, threshold_db, config, params)
        report.max_detectable_range.append(reach)

    return report
