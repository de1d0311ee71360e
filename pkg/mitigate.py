"""
Mitigate - ISI/ICI mitigation for targets beyond the cyclic prefix

Three schemes share the reconstruction primitives:
    jic_cc        cancellation of strong targets in the demodulated frame,
                  then cross-symbol combining (FDCC) to recover weak ones
    fr_sw         time-domain cancellation, then a sliding receive window
                  whose auxiliary images are stitched by range segment
    sic_baseline  iterative cancel-then-detect with grid-point estimates
"""
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Dict, List

import numpy as np

from channel import FrequencyFrame, TargetDerived, echo_samples, model_received_frame_fd, single_target_frame
from config import ConfigurationError
from detect import CfarConfig, CoarsePeak, cfar_detect, merge_detections
from estimate import CztConfig, TargetEstimate, estimate_target, projection_alpha, sw_phase_correction
from logger import setup_logger
from rxproc import (
    RangeDopplerImage,
    conventional_processing,
    demodulate,
    equalize_and_window,
    floor_power,
    make_window,
    power_dbm,
    range_doppler_image,
    target_image,
)

logger = setup_logger(__name__)

ALGORITHMS = ('conventional', 'jic_cc', 'fr_sw', 'sic')

# Exclusion half-width around detections when measuring residual floors
FLOOR_EXCLUSION_BINS = 4


@dataclass
class MitigationResult:
    final_image: object
    targets: List[TargetEstimate]
    initial_targets: List[TargetEstimate] = field(default_factory=list)
    stage_images: Dict[str, object] = field(default_factory=dict)
    residual_floor_dbm: float = float('nan')
    timings: Dict[str, float] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class SwShiftPlan:
    """Sliding-window shifts; segment s covers final rows [s*N_cp, s*N_cp + L_seg)"""

    shift_step: int
    segment_lengths: tuple

    @property
    def shift_count(self):
        return len(self.segment_lengths)

    def segments(self):
        for s, length in enumerate(self.segment_lengths):
            yield s, s * self.shift_step, length


def shift_plan(config):
    n, n_cp = config.subcarriers, config.cp_length
    if n_cp <= 0:
        raise ConfigurationError('cp_length', "sliding-window stitching needs a cyclic prefix")
    count = math.ceil(n / n_cp)
    lengths = tuple([n_cp] * (count - 1) + [n - (count - 1) * n_cp])
    return SwShiftPlan(shift_step=n_cp, segment_lengths=lengths)


@contextmanager
def _stage(timings, name):
    started = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - started


def _peak_cells(estimates):
    return [est.coarse for est in estimates]


def _residual_floor(image, estimates):
    return float(power_dbm(floor_power(image.power, _peak_cells(estimates), FLOOR_EXCLUSION_BINS)))


def _as_peak(est):
    return CoarsePeak(est.coarse[0], est.coarse[1], float('nan'))


def _estimate_all(H, peaks, window, config, params, czt_cfg, quadratic, global_phase=False):
    estimates = []
    for peak in peaks:
        est = estimate_target(H, peak, window, config, params, czt_cfg, quadratic, global_phase)
        est.extras['power_dbm'] = peak.power
        estimates.append(est)
    return estimates


def _restore(image, estimates, window, config, params, phase_key='image_phase'):
    """Add each cancelled target's noiseless image back into a cleaned image"""
    restored = image
    for est in estimates:
        phase = est.extras.get(phase_key, est.phase)
        alpha = est.magnitude * np.exp(1j * phase)
        restored = restored + target_image(alpha, est.delay, est.doppler, window, config, params)
    return restored


def _merge_estimates(primary, extra):
    """Union of two estimate lists, deduplicated within one range and one Doppler bin"""
    merged_peaks = merge_detections([_as_peak(e) for e in primary], [_as_peak(e) for e in extra])
    kept = {(p.range_index, p.doppler_index) for p in merged_peaks}
    result = list(primary)
    for est in extra:
        if est.coarse in kept and all(est.coarse != e.coarse for e in result):
            result.append(est)
    return result


def reconstruct_fd(est, X, config, params):
    """Frequency-domain echo of one estimated target"""
    target = TargetDerived.from_parameters(est.alpha, est.delay, est.doppler, params)
    return model_received_frame_fd(X, [target], config, params)


def fdcc(Yc, config):
    """Cross-symbol combining, Y'_m = Y_m + exp(-j2pi k N_cp / N) Y_(m+1)

    With an extra (M+1-th) simulated column the last symbol gets its
    boundary term too; otherwise the term is omitted for m = M-1.

    Returns:
        (FrequencyFrame with M columns, boundary_omitted flag)
    """
    data = Yc.data if isinstance(Yc, FrequencyFrame) else Yc
    m = config.symbols
    k = np.arange(config.subcarriers)
    combiner = np.exp(-2j * np.pi * k * config.cp_length / config.subcarriers)

    combined = data[:, :m].copy()
    combined[:, :m - 1] += combiner[:, None] * data[:, 1:m]
    omitted = data.shape[1] <= m
    if omitted:
        logger.warning("FDCC: no symbol after the frame, boundary term omitted for the last symbol")
    else:
        combined[:, m - 1] += combiner * data[:, m]
    return FrequencyFrame(combined), omitted


def conventional(Y, X, config, params, window=None, cfar_cfg=None, czt_cfg=None, quadratic=False):
    """Plain periodogram processing with CFAR and CZT estimation, no cancellation"""
    window = window or make_window('rectangular', config.subcarriers, config.symbols)
    cfar_cfg = cfar_cfg or CfarConfig()
    czt_cfg = czt_cfg or CztConfig()
    timings = {}

    H, image = conventional_processing(Y, X, window, config, params)
    with _stage(timings, 'detect'):
        peaks = cfar_detect(image, cfar_cfg)
    with _stage(timings, 'estimate'):
        estimates = _estimate_all(H, peaks, window, config, params, czt_cfg, quadratic)

    logger.info(f"Conventional processing: {len(estimates)} targets")
    return MitigationResult(
        final_image=image,
        targets=estimates,
        initial_targets=list(estimates),
        stage_images={'initial': image},
        residual_floor_dbm=_residual_floor(image, estimates),
        timings=timings,
    )


def jic_cc(Y, X, config, params, window=None, cfar_cfg=None, czt_cfg=None, quadratic=False, tx=None):
    """Joint interference cancellation with FDCC-aided recovery

    With the transmit signal the echoes are rebuilt in time and demodulated,
    so moving targets cancel together with their intra-symbol ICI. Without it
    the frequency-domain model is used, which is exact for static targets only.

    Returns:
        MitigationResult with stage images 'initial', 'cleaned' and 'fdcc'
    """
    window = window or make_window('rectangular', config.subcarriers, config.symbols)
    cfar_cfg = cfar_cfg or CfarConfig()
    czt_cfg = czt_cfg or CztConfig()
    timings = {}
    flags = []

    # Step 1: conventional processing and strong-target detection
    H, initial_image = conventional_processing(Y, X, window, config, params)
    with _stage(timings, 'detect'):
        initial_peaks = cfar_detect(initial_image, cfar_cfg)
    with _stage(timings, 'estimate'):
        initial = _estimate_all(H, initial_peaks, window, config, params, czt_cfg, quadratic)
    logger.info(f"JIC-CC: {len(initial)} initial detections")

    # Step 2: joint reconstruction and subtraction
    cleaned = Y.data.copy()
    with _stage(timings, 'reconstruct'):
        for est in sorted(initial, key=lambda e: e.coarse):
            if tx is None:
                cleaned -= reconstruct_fd(est, X, config, params).data
            else:
                cleaned -= reconstruct_demodulated(est, tx, config, params, Y.symbols).data
    cleaned_image = range_doppler_image(
        equalize_and_window(cleaned[:, :config.symbols], X.data[:, :config.symbols], window), config, params
    )
    residual_floor = _residual_floor(cleaned_image, initial)
    logger.debug(f"JIC-CC: residual floor after cancellation {residual_floor:.2f} dBm")

    # Step 3: FDCC on the cleaned frame, re-process, detect weak targets
    with _stage(timings, 'fdcc'):
        combined, omitted = fdcc(FrequencyFrame(cleaned), config)
    if omitted:
        flags.append('fdcc_boundary_omitted')
    H_c, fdcc_image = conventional_processing(combined, X, window, config, params)
    with _stage(timings, 'detect'):
        weak_peaks = cfar_detect(fdcc_image, cfar_cfg)
    with _stage(timings, 'estimate'):
        weak = _estimate_all(H_c, weak_peaks, window, config, params, czt_cfg, quadratic)
    targets = _merge_estimates(initial, weak)
    logger.info(f"JIC-CC: {len(targets) - len(initial)} targets recovered after FDCC")

    # Step 4: restore the cancelled strong targets
    with _stage(timings, 'restore'):
        final_image = _restore(fdcc_image, initial, window, config, params)

    return MitigationResult(
        final_image=final_image,
        targets=targets,
        initial_targets=initial,
        stage_images={'initial': initial_image, 'cleaned': cleaned_image, 'fdcc': fdcc_image},
        residual_floor_dbm=residual_floor,
        timings=timings,
        flags=flags,
    )


def reconstruct_td(est, tx, config, params, method='frame'):
    """Time-domain echo of one estimated target; the phase must refer to t = 0"""
    target = TargetDerived.from_parameters(est.alpha, est.delay, est.doppler, params)
    return tx.with_samples(echo_samples(tx, target, config, method))


def reconstruct_demodulated(est, tx, config, params, symbols=None):
    """Demodulated time-domain echo of an estimate carrying its image-peak phase"""
    referenced = replace(est, phase=sw_phase_correction(est.phase, est.delay, est.doppler, config, params))
    return demodulate(reconstruct_td(referenced, tx, config, params), config, symbols=symbols)


def fr_sw(y, tx, X, config, params, window=None, cfar_cfg=None, czt_cfg=None, quadratic=False):
    """Time-domain cancellation followed by sliding-window stitching

    Auxiliary images are detected into the target list only; newly found
    targets are not cancelled before later shifts.
    """
    window = window or make_window('rectangular', config.subcarriers, config.symbols)
    cfar_cfg = cfar_cfg or CfarConfig()
    czt_cfg = czt_cfg or CztConfig()
    plan = shift_plan(config)
    timings = {}

    # Step 1: detect, estimate with globally referenced phase, cancel in time
    Y = demodulate(y, config)
    H, initial_image = conventional_processing(Y, X, window, config, params)
    with _stage(timings, 'detect'):
        initial_peaks = cfar_detect(initial_image, cfar_cfg)
    with _stage(timings, 'estimate'):
        initial = []
        for peak in initial_peaks:
            est = estimate_target(H, peak, window, config, params, czt_cfg, quadratic)
            est.extras['image_phase'] = est.phase
            est.extras['power_dbm'] = peak.power
            initial.append(est)
        for est in initial:
            est.phase = sw_phase_correction(est.phase, est.delay, est.doppler, config, params)
    logger.info(f"FR-SW: {len(initial)} initial detections, {plan.shift_count} shifts")

    cleaned = y.samples.copy()
    with _stage(timings, 'reconstruct'):
        for est in sorted(initial, key=lambda e: e.coarse):
            cleaned -= reconstruct_td(est, tx, config, params).samples
    clean_signal = y.with_samples(cleaned)

    # Step 2: shifted receive windows, detect in each, stitch by segment
    stitched = np.zeros((config.subcarriers, config.symbols), dtype=complex)
    found = []
    residual_image = None
    with _stage(timings, 'stitch'):
        for s, start_row, length in plan.segments():
            Y_s = demodulate(clean_signal, config, window_offset=start_row)
            H_s, aux_image = conventional_processing(Y_s, X, window, config, params)
            if s == 0:
                residual_image = aux_image
            for peak in cfar_detect(aux_image, cfar_cfg):
                if peak.range_index >= length:
                    continue
                est = estimate_target(H_s, peak, window, config, params, czt_cfg, quadratic)
                est.delay += start_row * params.sample_period
                est.coarse = (peak.range_index + start_row, peak.doppler_index)
                est.extras['shift'] = s
                est.extras['power_dbm'] = peak.power
                found.append(est)
            stitched[start_row:start_row + length, :] = aux_image.data[:length, :]
            logger.debug(f"FR-SW shift {s}: rows [{start_row}, {start_row + length})")

    targets = _merge_estimates(initial, found)
    stitched_image = RangeDopplerImage(
        data=stitched,
        range_axis=initial_image.range_axis,
        velocity_axis=initial_image.velocity_axis,
        metadata=dict(initial_image.metadata),
    )

    # Step 3: restore the cancelled strong targets
    with _stage(timings, 'restore'):
        final_image = _restore(stitched_image, initial, window, config, params)

    return MitigationResult(
        final_image=final_image,
        targets=targets,
        initial_targets=initial,
        stage_images={'initial': initial_image, 'cleaned': residual_image, 'stitched': stitched_image},
        residual_floor_dbm=_residual_floor(residual_image, initial),
        timings=timings,
    )


def sic_baseline(Y, X, config, params, n_iter=15, window=None, cfar_cfg=None):
    """Iterative cancel-then-detect with least-squares alpha on the FFT grid"""
    if n_iter < 1:
        raise ConfigurationError('n_iter', "must be at least 1")
    window = window or make_window('rectangular', config.subcarriers, config.symbols)
    cfar_cfg = cfar_cfg or CfarConfig()
    timings = {}

    residual = FrequencyFrame(Y.data.copy())
    initial_image = None
    initial_cells = set()
    accumulated = {}

    for iteration in range(n_iter):
        _, image = conventional_processing(residual, X, window, config, params)
        if initial_image is None:
            initial_image = image
        with _stage(timings, 'detect'):
            peaks = cfar_detect(image, cfar_cfg)
        if not peaks:
            logger.info(f"SIC: no detections in iteration {iteration + 1}, stopping")
            break
        if iteration == 0:
            initial_cells = {(p.range_index, p.doppler_index) for p in peaks}

        with _stage(timings, 'estimate'):
            grid = []
            for peak in peaks:
                delay = peak.range_index / config.bandwidth
                doppler = (peak.doppler_index - config.symbols / 2) / (config.symbols * params.symbol_duration)
                alpha = projection_alpha(residual, X, delay, doppler, config, params)
                grid.append(((peak.range_index, peak.doppler_index), delay, doppler, alpha))

        with _stage(timings, 'reconstruct'):
            for cell, delay, doppler, alpha in grid:
                target = TargetDerived.from_parameters(alpha, delay, doppler, params)
                residual.data -= single_target_frame(X.data, target, config, params)
                _, _, previous = accumulated.get(cell, (delay, doppler, 0j))
                accumulated[cell] = (delay, doppler, previous + alpha)
        logger.debug(f"SIC iteration {iteration + 1}: {len(peaks)} detections")

    _, residual_image = conventional_processing(residual, X, window, config, params)

    targets = []
    for cell in sorted(accumulated):
        delay, doppler, alpha = accumulated[cell]
        targets.append(TargetEstimate(
            delay=delay,
            doppler=doppler,
            phase=float(np.angle(alpha)),
            magnitude=float(abs(alpha)),
            coarse=cell,
            fine=(float(cell[0]), float(cell[1])),
        ))
    initial = [t for t in targets if t.coarse in initial_cells]

    with _stage(timings, 'restore'):
        final_image = _restore(residual_image, targets, window, config, params)

    logger.info(f"SIC: {len(targets)} targets after {iteration + 1} iterations")
    return MitigationResult(
        final_image=final_image,
        targets=targets,
        initial_targets=initial,
        stage_images={'initial': initial_image, 'cleaned': residual_image},
        residual_floor_dbm=_residual_floor(residual_image, targets),
        timings=timings,
    )


def run_algorithm(name, y, tx, X, config, params, window=None, cfar_cfg=None, czt_cfg=None,
                  quadratic=False, n_iter=15):
    """Dispatch one mitigation scheme on a received signal"""
    if name not in ALGORITHMS:
        raise ConfigurationError('algorithm', f"unknown algorithm '{name}', expected one of {ALGORITHMS}")
    if name == 'fr_sw':
        return fr_sw(y, tx, X, config, params, window, cfar_cfg, czt_cfg, quadratic)

    Y = demodulate(y, config, symbols=X.symbols)
    if name == 'jic_cc':
        return jic_cc(Y, X, config, params, window, cfar_cfg, czt_cfg, quadratic, tx=tx)
    if name == 'sic':
        return sic_baseline(Y, X, config, params, n_iter, window, cfar_cfg)
    return conventional(Y, X, config, params, window, cfar_cfg, czt_cfg, quadratic)
