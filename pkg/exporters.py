"""
Exporters - CSV/JSON writers for images, detections, estimates and metrics
"""
import csv
import json
import math
import os
import shutil
import tempfile
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from logger import setup_logger
from rxproc import power_dbm

logger = setup_logger(__name__)

TOOL_VERSION = '1.0.0'
FLOAT_DIGITS = 6


def _clean(value):
    """JSON-safe copy with numpy scalars unwrapped and floats rounded"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value) or math.isinf(value):
            return None
        return round(value, FLOAT_DIGITS)
    if isinstance(value, complex):
        return {'re': _clean(value.real), 'im': _clean(value.imag)}
    return value


def write_json(data, path):
    path = Path(path)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_clean(data), f, indent=2, sort_keys=True)
        f.write('\n')
    return path


def write_table_csv(columns, path):
    """Column dict of equal-length sequences to CSV, '.' decimal separator"""
    path = Path(path)
    names = list(columns)
    rows = zip(*(np.asarray(columns[name]).tolist() for name in names))
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(names)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return path


def write_image_csv(image, path):
    """Power image in dBm; first row is the velocity axis, first column the range axis"""
    path = Path(path)
    values = power_dbm(image.power)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(['range_m\\velocity_mps'] + [repr(float(v)) for v in image.velocity_axis])
        for r, row in zip(image.range_axis, values):
            writer.writerow([repr(float(r))] + [repr(float(v)) for v in row])
    return path


def read_image_csv(path):
    """Inverse of write_image_csv: (range_axis, velocity_axis, power_dbm)"""
    with open(path, 'r', newline='', encoding='utf-8') as f:
        rows = list(csv.reader(f))
    velocity_axis = np.array([float(v) for v in rows[0][1:]])
    range_axis = np.array([float(row[0]) for row in rows[1:]])
    values = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    return range_axis, velocity_axis, values


def detections_payload(peaks):
    return [peak.to_dict() for peak in peaks]


def estimates_payload(estimates, config, params):
    return [est.to_dict(config, params) for est in estimates]


def manifest_payload(config_hash, seed, artifacts, start_time, end_time, extra=None):
    payload = {
        'tool_version': TOOL_VERSION,
        'config_hash': config_hash,
        'seed': seed,
        'artifacts': sorted(artifacts),
        'start_time': start_time.astimezone(timezone.utc).isoformat(),
        'end_time': end_time.astimezone(timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    return payload


def utc_now():
    return datetime.now(timezone.utc)


@contextmanager
def atomic_output_dir(out_dir):
    """Stage artifacts in a temporary directory, moved into out_dir on success only"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix='.staging_', dir=out_dir))
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    for entry in staging.iterdir():
        target = out_dir / entry.name
        if target.is_dir():
            shutil.rmtree(target)
        os.replace(entry, target)
    shutil.rmtree(staging, ignore_errors=True)
    logger.debug(f"Artifacts moved into {out_dir}")
