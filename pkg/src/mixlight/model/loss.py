"""Multi-resolution STFT magnitude loss.

Per resolution: mean absolute difference between amplitude spectrograms,
summed over resolutions. Hop is window/4 at each resolution.
"""

from __future__ import annotations

import numpy as np

from ..audio import AudioClip, hann_periodic
from ..errors import InputError
from ..fabric import signal as FS
from ..fabric import tensor as T
from ..fabric.tensor import Tensor

_WINDOW_CACHE: dict[int, np.ndarray] = {}


def default_loss_windows(model_window: int) -> tuple:
    """Loss resolutions tied to the model preset: (window, window/2, window/4)."""
    return (model_window, model_window // 2, model_window // 4)


def _hann(window: int, dtype) -> np.ndarray:
    if window not in _WINDOW_CACHE:
        _WINDOW_CACHE[window] = hann_periodic(window)
    return _WINDOW_CACHE[window].astype(dtype)


def magnitude_frames(x: Tensor, window: int, hop: int) -> Tensor:
    """|STFT| of a 1-D tensor as [frames, bins], differentiable."""
    n = x.data.shape[0]
    padded = FS.pad_reflect(x, window // 2)
    frames = FS.frame(padded, window, hop, n // hop + 1)
    weighted = frames * T.constant(_hann(window, x.data.dtype))
    return FS.rmag(FS.rfft_ri(weighted))


def target_magnitudes(target: np.ndarray, windows, dtype=np.float32) -> list:
    """Precompute the constant target-side spectrograms (one per window)."""
    target_t = T.constant(target.astype(dtype))
    return [
        magnitude_frames(target_t, window, window // 4).data for window in windows
    ]


def mr_stft_loss_graph(pred: Tensor, target: np.ndarray, windows, target_mags=None) -> Tensor:
    """Loss node for training; ``target`` enters as a constant.

    ``target_mags`` (from target_magnitudes) skips recomputing the constant
    side when a clip is visited repeatedly.
    """
    if pred.data.shape[0] != target.shape[0]:
        raise InputError("prediction and target lengths differ")
    if target_mags is None:
        target_mags = target_magnitudes(target, windows, pred.data.dtype)
    total = None
    for window, tm in zip(windows, target_mags):
        hop = window // 4
        pm = magnitude_frames(pred, window, hop)
        term = T.tabs(pm - T.constant(tm)).mean()
        total = term if total is None else total + term
    return total


def mr_stft_loss(pred: AudioClip, target: AudioClip, windows=None) -> float:
    """Scalar MR-STFT distance between two clips."""
    if len(pred) != len(target):
        raise InputError("clips must have equal length")
    if windows is None:
        windows = (512, 256, 128)
    graph = mr_stft_loss_graph(Tensor(pred.samples), target.samples, windows)
    return float(graph.data)
