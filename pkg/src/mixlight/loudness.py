"""Integrated loudness per ITU-R BS.1770-4 (mono), and loudness-targeted gain.

K-weighting coefficients are redesigned for the clip's sample rate via the
bilinear transform of the analog prototype (the standard tabulates 48 kHz
only), so the meter reads consistently at 8 kHz, 44.1 kHz and 48 kHz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.signal

from .audio import AudioClip
from .errors import InputError

SILENT = float("-inf")

BLOCK_S = 0.400
STEP_S = 0.100  # 75% overlap
ABS_GATE_LUFS = -70.0
REL_GATE_LU = -10.0
OFFSET_DB = -0.691


@dataclass(frozen=True)
class LoudnessReading:
    lufs: float  # SILENT when no block survives the absolute gate
    gated_block_count: int

    @property
    def is_silent(self) -> bool:
        return self.lufs == SILENT


def k_weighting_coefficients(sample_rate: int):
    """Biquad (b, a) pairs for the shelving and high-pass stages.

    Analog prototype constants follow the published redesign of the
    BS.1770 filters (De Man, 2018), bilinear-transformed per sample rate.
    """
    fs = float(sample_rate)

    # Stage 1: high-shelf.
    f0 = 1681.9744509555319
    gain_db = 3.99984385397
    q = 0.7071752369554193
    k = np.tan(np.pi * f0 / fs)
    vh = 10.0 ** (gain_db / 20.0)
    vb = vh ** 0.499666774155
    a0 = 1.0 + k / q + k * k
    shelf_b = np.array([
        (vh + vb * k / q + k * k) / a0,
        2.0 * (k * k - vh) / a0,
        (vh - vb * k / q + k * k) / a0,
    ])
    shelf_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])

    # Stage 2: high-pass.
    f0 = 38.13547087613982
    q = 0.5003270373253953
    k = np.tan(np.pi * f0 / fs)
    a0 = 1.0 + k / q + k * k
    hp_b = np.array([1.0, -2.0, 1.0])
    hp_a = np.array([1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0])

    return (shelf_b, shelf_a), (hp_b, hp_a)


def k_weight(clip: AudioClip) -> np.ndarray:
    (b1, a1), (b2, a2) = k_weighting_coefficients(clip.sample_rate)
    return scipy.signal.lfilter(b2, a2, scipy.signal.lfilter(b1, a1, clip.samples))


def integrated_loudness(clip: AudioClip) -> LoudnessReading:
    """Gated integrated loudness in LUFS."""
    sr = clip.sample_rate
    block = int(round(BLOCK_S * sr))
    step = int(round(STEP_S * sr))
    if len(clip) < block:
        raise InputError("clip shorter than one 400 ms gating block")

    weighted = k_weight(clip)
    n_blocks = (weighted.size - block) // step + 1
    starts = np.arange(n_blocks) * step
    # Mean square per block via cumulative sums (cheap for long clips).
    csum = np.concatenate([[0.0], np.cumsum(weighted * weighted)])
    ms = (csum[starts + block] - csum[starts]) / block

    with np.errstate(divide="ignore"):
        block_loudness = OFFSET_DB + 10.0 * np.log10(ms)

    above_abs = block_loudness > ABS_GATE_LUFS
    if not np.any(above_abs):
        return LoudnessReading(lufs=SILENT, gated_block_count=0)
    rel_threshold = OFFSET_DB + 10.0 * np.log10(np.mean(ms[above_abs])) + REL_GATE_LU
    gated = above_abs & (block_loudness > rel_threshold)
    if not np.any(gated):
        return LoudnessReading(lufs=SILENT, gated_block_count=0)
    lufs = OFFSET_DB + 10.0 * np.log10(np.mean(ms[gated]))
    return LoudnessReading(lufs=float(lufs), gated_block_count=int(np.count_nonzero(gated)))


def gain_to_target(current: LoudnessReading, target_lufs: float) -> float:
    """Gain in dB that moves ``current`` to ``target_lufs``."""
    if current.is_silent:
        raise InputError("cannot compute gain for a silent reading")
    return float(target_lufs - current.lufs)
