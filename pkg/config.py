import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from dotenv import load_dotenv
from scipy import constants

# Load environment variables
load_dotenv()

SPEED_OF_LIGHT = constants.c
BOLTZMANN = constants.k
ROOM_TEMPERATURE = 290.0

# Doppler bound under which the per-symbol phase model holds
ICI_DOPPLER_FRACTION = 0.1


class Config:
    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_DIR = os.getenv('LOG_DIR', 'logs')

    # Runs
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')
    SCENARIO_DIR = os.getenv('SCENARIO_DIR', 'scenarios')
    RADAR_THREADS = int(os.getenv('RADAR_THREADS', 1))
    DEFAULT_SEED = int(os.getenv('DEFAULT_SEED', 0))
    PROGRESS = os.getenv('PROGRESS', 'true').lower() == 'true'

    @classmethod
    def validate(cls):
        """Validate that the process settings are usable"""
        invalid_fields = []
        if cls.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            invalid_fields.append('LOG_LEVEL')
        if cls.RADAR_THREADS < 1:
            invalid_fields.append('RADAR_THREADS')
        if cls.DEFAULT_SEED < 0:
            invalid_fields.append('DEFAULT_SEED')

        if invalid_fields:
            raise ValueError(f"Invalid configuration: {', '.join(invalid_fields)}")

        return True


class RadarError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(RadarError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionError(RadarError, ValueError):
    pass


class EstimationError(RadarError):
    pass


class DetectionError(RadarError):
    pass


class UnsupportedOperationError(RadarError):
    pass


def db_to_linear(value_db):
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value):
    return 10.0 * math.log10(value)


def dbm_to_watt(value_dbm):
    return db_to_linear(value_dbm - 30.0)


def watt_to_dbm(value_w):
    return linear_to_db(value_w) + 30.0


@dataclass(frozen=True)
class OfdmConfig:
    """Static OFDM radar system parameters.

    Gains, noise figure and power are stored linear (W for power). Use
    ``from_dict`` to read the unit-suffixed file format.

    Attributes:
        carrier_frequency: f_c in Hz
        bandwidth: B in Hz, also the sample rate
        subcarriers: N
        cp_length: N_cp in samples
        symbols: M, must be even
        tx_power: P_tx in W
        tx_gain: G_tx, linear
        rx_gain: G_rx, linear
        noise_figure: NF, linear
        ambient_temperature: T_th in K
        tx_rx_isolation_db: spillover isolation in dB
        adc_bits: N_bit
        papr_factor: F, average power over squared peak amplitude
    """

    carrier_frequency: float
    bandwidth: float
    subcarriers: int
    cp_length: int
    symbols: int
    tx_power: float = 1.0
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    noise_figure: float = 1.0
    ambient_temperature: float = ROOM_TEMPERATURE
    tx_rx_isolation_db: float = 60.0
    adc_bits: int = 12
    papr_factor: float = 0.1

    def __post_init__(self):
        if self.subcarriers <= 0:
            raise ConfigurationError('subcarriers', f"must be positive, got {self.subcarriers}")
        if self.symbols <= 0 or self.symbols % 2:
            raise ConfigurationError('symbols', f"must be positive and even, got {self.symbols}")
        if not 0 <= self.cp_length < self.subcarriers:
            raise ConfigurationError('cp_length', f"must lie in [0, {self.subcarriers}), got {self.cp_length}")
        if self.bandwidth <= 0:
            raise ConfigurationError('bandwidth', f"must be positive, got {self.bandwidth}")
        if self.carrier_frequency <= self.bandwidth / 2:
            raise ConfigurationError('carrier_frequency', "must exceed half the bandwidth")
        for name in ('tx_power', 'tx_gain', 'rx_gain', 'noise_figure', 'ambient_temperature', 'papr_factor'):
            if getattr(self, name) <= 0:
                raise ConfigurationError(name, "must be positive")
        if self.adc_bits < 1:
            raise ConfigurationError('adc_bits', "must be at least 1")

    @classmethod
    def from_dict(cls, data):
        """Build a config from the unit-suffixed file format

        Args:
            data: dict with keys such as ``bandwidth_hz`` or ``tx_power_dbm``

        Returns:
            OfdmConfig
        """
        data = dict(data)
        kwargs = {}

        def take(key, convert=float):
            try:
                return convert(data.pop(key))
            except (TypeError, ValueError) as e:
                raise ConfigurationError(key, f"not a valid number ({e})")

        required = {
            'carrier_frequency': 'carrier_frequency_hz',
            'bandwidth': 'bandwidth_hz',
            'subcarriers': 'subcarriers',
            'cp_length': 'cp_length',
            'symbols': 'symbols',
        }
        for field_name, key in required.items():
            if key not in data:
                raise ConfigurationError(key, "missing")
            kwargs[field_name] = take(key, int if field_name in ('subcarriers', 'cp_length', 'symbols') else float)

        if 'tx_power_dbm' in data:
            kwargs['tx_power'] = dbm_to_watt(take('tx_power_dbm'))
        elif 'tx_power_w' in data:
            kwargs['tx_power'] = take('tx_power_w')

        for field_name in ('tx_gain', 'rx_gain'):
            if f'{field_name}_dbi' in data:
                kwargs[field_name] = db_to_linear(take(f'{field_name}_dbi'))
            elif field_name in data:
                kwargs[field_name] = take(field_name)

        if 'noise_figure_db' in data:
            kwargs['noise_figure'] = db_to_linear(take('noise_figure_db'))
        elif 'noise_figure' in data:
            kwargs['noise_figure'] = take('noise_figure')

        if 'ambient_temperature_k' in data:
            kwargs['ambient_temperature'] = take('ambient_temperature_k')
        if 'tx_rx_isolation_db' in data:
            kwargs['tx_rx_isolation_db'] = take('tx_rx_isolation_db')
        if 'adc_bits' in data:
            kwargs['adc_bits'] = take('adc_bits', int)
        if 'papr_factor' in data:
            kwargs['papr_factor'] = take('papr_factor')

        if data:
            raise ConfigurationError(sorted(data)[0], "unknown configuration key")

        return cls(**kwargs)

    def to_dict(self):
        return {
            'carrier_frequency_hz': self.carrier_frequency,
            'bandwidth_hz': self.bandwidth,
            'subcarriers': self.subcarriers,
            'cp_length': self.cp_length,
            'symbols': self.symbols,
            'tx_power_dbm': watt_to_dbm(self.tx_power),
            'tx_gain_dbi': linear_to_db(self.tx_gain),
            'rx_gain_dbi': linear_to_db(self.rx_gain),
            'noise_figure_db': linear_to_db(self.noise_figure),
            'ambient_temperature_k': self.ambient_temperature,
            'tx_rx_isolation_db': self.tx_rx_isolation_db,
            'adc_bits': self.adc_bits,
            'papr_factor': self.papr_factor,
        }

    def config_hash(self):
        payload = json.dumps(asdict(self), sort_keys=True).encode('utf-8')
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True)
class DerivedParams:
    subcarrier_spacing: float
    sample_period: float
    data_duration: float
    cp_duration: float
    symbol_duration: float
    wavelength: float
    isi_free_range: float
    unambiguous_range: float
    max_ici_velocity: float
    processing_gain: int
    shift_count: int


def derive_params(config):
    """Timing, resolution and range limits of a system configuration"""
    if not isinstance(config, OfdmConfig):
        raise ConfigurationError('config', f"expected OfdmConfig, got {type(config).__name__}")

    n = config.subcarriers
    sample_period = 1.0 / config.bandwidth
    data_duration = n * sample_period
    cp_duration = config.cp_length * sample_period
    wavelength = SPEED_OF_LIGHT / config.carrier_frequency
    subcarrier_spacing = config.bandwidth / n

    return DerivedParams(
        subcarrier_spacing=subcarrier_spacing,
        sample_period=sample_period,
        data_duration=data_duration,
        cp_duration=cp_duration,
        symbol_duration=cp_duration + data_duration,
        wavelength=wavelength,
        isi_free_range=SPEED_OF_LIGHT * cp_duration / 2,
        unambiguous_range=SPEED_OF_LIGHT * data_duration / 2,
        max_ici_velocity=ICI_DOPPLER_FRACTION * subcarrier_spacing * wavelength / 2,
        processing_gain=n * config.symbols,
        shift_count=math.ceil(n / config.cp_length) if config.cp_length else 0,
    )


def velocity_to_doppler(velocity, params):
    """Monostatic two-way Doppler shift"""
    return 2.0 * velocity / params.wavelength


def doppler_to_velocity(doppler, params):
    return doppler * params.wavelength / 2.0


# Large simulation system; the quoted unambiguous range of 4914 m is an
# annotation only, derive_params keeps c*T_d/2 (about 4986 m).
SIMULATION_PRESET = {
    'carrier_frequency_hz': 3.5e9,
    'bandwidth_hz': 200e6,
    'subcarriers': 6652,
    'cp_length': 458,
    'symbols': 280,
    'tx_power_dbm': 49.0,
    'tx_gain_dbi': 25.8,
    'rx_gain_dbi': 25.8,
    'noise_figure_db': 8.0,
    'tx_rx_isolation_db': 60.0,
    'adc_bits': 12,
    # places the 12-bit ADC floor near -76.2 dBm, 22.6 dB below the worst-case ISI power
    'papr_factor': 0.256,
}
QUOTED_UNAMBIGUOUS_RANGE = 4914.0

MEASUREMENT_PRESET = {
    'carrier_frequency_hz': 3.68e9,
    'bandwidth_hz': 500e6,
    'subcarriers': 1024,
    'cp_length': 256,
    'symbols': 1024,
    'tx_power_dbm': 0.0,
    'noise_figure_db': 8.0,
}

DESK_PRESET = {
    'carrier_frequency_hz': 3.5e9,
    'bandwidth_hz': 200e6,
    'subcarriers': 1024,
    'cp_length': 128,
    'symbols': 64,
    'tx_power_dbm': 49.0,
    'tx_gain_dbi': 25.8,
    'rx_gain_dbi': 25.8,
    'noise_figure_db': 8.0,
    'tx_rx_isolation_db': 60.0,
    'adc_bits': 12,
    'papr_factor': 0.256,
}

PRESETS = {
    'simulation': SIMULATION_PRESET,
    'measurement': MEASUREMENT_PRESET,
    'desk': DESK_PRESET,
}


def load_config(source):
    """Resolve a preset name, a JSON file path or an inline dict

    Args:
        source: preset name, path to a JSON file, or dict in file format

    Returns:
        OfdmConfig
    """
    if isinstance(source, OfdmConfig):
        return source
    if isinstance(source, dict):
        return OfdmConfig.from_dict(source)
    if source in PRESETS:
        return OfdmConfig.from_dict(PRESETS[source])

    path = Path(source)
    if not path.exists():
        raise ConfigurationError('config', f"unknown preset or missing file: {source}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError('config', f"{path} line {e.lineno} column {e.colno}: {e.msg}")
    return OfdmConfig.from_dict(data)
