"""
Waveform - QPSK data frames and CP-OFDM time-domain synthesis
"""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from config import DimensionError
from logger import setup_logger

logger = setup_logger(__name__)

QPSK_CONSTELLATION = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


@dataclass
class SymbolFrame:
    """Data symbol grid X, subcarrier x symbol.

    Holds M columns, or M+1 when the extra trailing symbol is simulated.
    """

    data: np.ndarray
    modulation: str = 'qpsk'
    seed: Optional[int] = None

    @property
    def subcarriers(self):
        return self.data.shape[0]

    @property
    def symbols(self):
        return self.data.shape[1]

    def frame_for(self, config):
        """The first M columns used for image formation"""
        return self.data[:, :config.symbols]


@dataclass
class TimeSignal:
    samples: np.ndarray
    sample_period: float
    start_offset: int = 0
    seed: Optional[int] = None
    subcarriers: int = 0
    cp_length: int = 0
    symbols: int = 0

    @property
    def length(self):
        return self.samples.size

    @property
    def symbol_length(self):
        return self.subcarriers + self.cp_length

    def with_samples(self, samples):
        return TimeSignal(
            samples=samples,
            sample_period=self.sample_period,
            start_offset=self.start_offset,
            seed=self.seed,
            subcarriers=self.subcarriers,
            cp_length=self.cp_length,
            symbols=self.symbols,
        )

    def to_binary(self, path):
        """Dump as interleaved little-endian float64 I/Q with a JSON sidecar"""
        path = Path(path)
        interleaved = np.empty(2 * self.length, dtype='<f8')
        interleaved[0::2] = self.samples.real
        interleaved[1::2] = self.samples.imag
        interleaved.tofile(path)

        sidecar = {
            'sample_rate': 1.0 / self.sample_period,
            'length': self.length,
            'seed': self.seed,
            'start_offset': self.start_offset,
            'subcarriers': self.subcarriers,
            'cp_length': self.cp_length,
            'symbols': self.symbols,
            'dtype': 'complex128-interleaved-le',
        }
        with open(path.with_suffix(path.suffix + '.json'), 'w', encoding='utf-8') as f:
            json.dump(sidecar, f, indent=2)
        return path

    @classmethod
    def from_binary(cls, path):
        path = Path(path)
        with open(path.with_suffix(path.suffix + '.json'), 'r', encoding='utf-8') as f:
            sidecar = json.load(f)
        interleaved = np.fromfile(path, dtype='<f8')
        if interleaved.size != 2 * sidecar['length']:
            raise DimensionError(f"{path}: expected {sidecar['length']} samples, found {interleaved.size // 2}")
        return cls(
            samples=interleaved[0::2] + 1j * interleaved[1::2],
            sample_period=1.0 / sidecar['sample_rate'],
            start_offset=sidecar['start_offset'],
            seed=sidecar['seed'],
            subcarriers=sidecar['subcarriers'],
            cp_length=sidecar['cp_length'],
            symbols=sidecar['symbols'],
        )


def generate_data_frame(config, seed, extra_symbol=False):
    """Random unit-power QPSK frame, deterministic in seed

    Args:
        config: OfdmConfig
        seed: RNG seed (int or numpy SeedSequence)
        extra_symbol: also draw symbol M for the FDCC boundary term

    Returns:
        SymbolFrame of shape N x M (or N x M+1)
    """
    symbols = config.symbols + (1 if extra_symbol else 0)
    rng = np.random.default_rng(seed)
    indices = rng.integers(0, QPSK_CONSTELLATION.size, size=(config.subcarriers, symbols))
    return SymbolFrame(data=QPSK_CONSTELLATION[indices], seed=seed if isinstance(seed, int) else None)


def modulate_symbols(data, config):
    """Per-symbol time-domain samples without CP, shape N x symbols"""
    return np.sqrt(config.tx_power * config.subcarriers) * np.fft.ifft(data, axis=0)


def synthesize_time_signal(frame, config):
    """CP-OFDM baseband transmit signal with one zero symbol of tail"""
    n, n_cp = config.subcarriers, config.cp_length
    if frame.subcarriers != n or frame.symbols not in (config.symbols, config.symbols + 1):
        raise DimensionError(
            f"Frame shape {frame.data.shape} does not match N={n}, M={config.symbols}"
        )

    body = modulate_symbols(frame.data, config)
    with_cp = np.vstack([body[n - n_cp:, :], body])
    tail = np.zeros(n + n_cp, dtype=complex)
    samples = np.concatenate([with_cp.ravel(order='F'), tail])

    logger.debug(f"Synthesized {frame.symbols} symbols, {samples.size} samples")
    return TimeSignal(
        samples=samples,
        sample_period=1.0 / config.bandwidth,
        seed=frame.seed,
        subcarriers=n,
        cp_length=n_cp,
        symbols=frame.symbols,
    )
