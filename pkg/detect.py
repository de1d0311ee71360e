"""
Detect - 2D cell-averaging CFAR on range-Doppler power images
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from config import ConfigurationError, DetectionError
from logger import setup_logger
from rxproc import power_dbm

logger = setup_logger(__name__)


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR parameters.

    Guard and training sizes are half-widths per dimension (range, Doppler).
    """

    guard_cells: Tuple[int, int] = (4, 4)
    training_cells: Tuple[int, int] = (12, 8)
    probability_false_alarm: float = 1e-4
    max_detections: Optional[int] = None

    def __post_init__(self):
        if min(self.training_cells) <= 0:
            raise ConfigurationError('training_cells', "must be positive in both dimensions")
        if min(self.guard_cells) < 0:
            raise ConfigurationError('guard_cells', "must be non-negative")
        if not 0 < self.probability_false_alarm < 1:
            raise ConfigurationError('probability_false_alarm', "must lie in (0, 1)")

    @property
    def footprint(self):
        return tuple(2 * (g + t) + 1 for g, t in zip(self.guard_cells, self.training_cells))

    @classmethod
    def from_dict(cls, data):
        return cls(
            guard_cells=tuple(data.get('guard_cells', (4, 4))),
            training_cells=tuple(data.get('training_cells', (12, 8))),
            probability_false_alarm=float(data.get('probability_false_alarm', 1e-4)),
            max_detections=data.get('max_detections'),
        )


@dataclass(frozen=True)
class CoarsePeak:
    range_index: int
    doppler_index: int
    power: float  # dBm

    def to_dict(self):
        return {'range_bin': self.range_index, 'doppler_bin': self.doppler_index, 'power_dbm': self.power}


def _box_sum(values, half_widths):
    """Sum over a (2h+1) box per cell, zero outside the image"""
    size = tuple(2 * h + 1 for h in half_widths)
    return ndimage.uniform_filter(values, size=size, mode='constant', cval=0.0) * np.prod(size)


def cfar_threshold_factor(training_count, pfa):
    """CA-CFAR scaling for exponentially distributed cell power"""
    return training_count * (pfa ** (-1.0 / training_count) - 1.0)


def cfar_detect(image, cfg):
    """Cell-averaging CFAR with one peak per connected detection cluster

    Training windows are truncated at the image borders and the average is
    taken over the cells actually present.

    Returns:
        list of CoarsePeak sorted by power (desc), range index, Doppler index
    """
    power = image.power if hasattr(image, 'power') else np.abs(image) ** 2
    rows, cols = power.shape
    footprint = cfg.footprint
    if rows < footprint[0] or cols < footprint[1]:
        raise DetectionError(f"Image {rows}x{cols} smaller than CFAR footprint {footprint[0]}x{footprint[1]}")

    outer = tuple(g + t for g, t in zip(cfg.guard_cells, cfg.training_cells))
    ones = np.ones_like(power)

    training_sum = _box_sum(power, outer) - _box_sum(power, cfg.guard_cells)
    training_count = np.rint(_box_sum(ones, outer) - _box_sum(ones, cfg.guard_cells))

    noise_level = np.maximum(training_sum, 0.0) / training_count
    threshold = cfar_threshold_factor(training_count, cfg.probability_false_alarm) * noise_level
    hits = power > threshold

    labels, count = ndimage.label(hits, structure=np.ones((3, 3)))
    if count == 0:
        return []

    local_max = power >= ndimage.maximum_filter(power, size=3, mode='nearest')
    peaks = []
    for index, cluster in enumerate(ndimage.find_objects(labels), start=1):
        region = power[cluster] * (labels[cluster] == index)
        row, col = np.unravel_index(np.argmax(region), region.shape)
        row += cluster[0].start
        col += cluster[1].start
        if local_max[row, col]:
            peaks.append(CoarsePeak(int(row), int(col), float(power_dbm(power[row, col]))))

    peaks.sort(key=lambda p: (-p.power, p.range_index, p.doppler_index))
    if cfg.max_detections is not None:
        peaks = peaks[:cfg.max_detections]

    logger.debug(f"CFAR: {int(hits.sum())} cells over threshold, {len(peaks)} peaks")
    return peaks


def merge_detections(primary, extra, radius=1):
    """Union of two peak lists; peaks within radius bins of a kept one are dropped"""
    merged = list(primary)
    for peak in extra:
        duplicate = any(
            abs(peak.range_index - kept.range_index) <= radius
            and abs(peak.doppler_index - kept.doppler_index) <= radius
            for kept in merged
        )
        if not duplicate:
            merged.append(peak)
    return merged
