"""Differentiable signal primitives: reflect pad, framing, overlap-add,

real FFT pairs, and complex magnitude. Complex values travel as a trailing
axis of size 2 (real, imag) so the tape stays real-valued throughout.
scipy.fft preserves float32, which keeps training single-precision.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .tensor import Tensor, _accumulate, _make


_REFLECT_CACHE: dict[tuple, np.ndarray] = {}


def _reflect_indices(length: int, pad: int) -> np.ndarray:
    key = (length, pad)
    cached = _REFLECT_CACHE.get(key)
    if cached is None:
        idx = np.arange(-pad, length + pad)
        period = 2 * (length - 1)
        idx = np.abs(np.mod(idx, period))
        cached = np.where(idx >= length, period - idx, idx)
        if len(_REFLECT_CACHE) < 64:
            _REFLECT_CACHE[key] = cached
    return cached


def pad_reflect(x: Tensor, pad: int) -> Tensor:
    """Reflect-pad a 1-D signal on both sides."""
    idx = _reflect_indices(x.data.shape[0], pad)

    def backward(g):
        buf = np.zeros_like(x.data)
        np.add.at(buf, idx, g)
        _accumulate(x, buf)

    return _make(x.data[idx], (x,), backward, "pad_reflect")


def frame(x: Tensor, window: int, hop: int, n_frames: int) -> Tensor:
    """Gather overlapping frames [n_frames, window] from a 1-D signal."""

    def backward(g):
        buf = np.zeros_like(x.data)
        _overlap_add_into(buf, g, hop)
        _accumulate(x, buf)

    frames = np.lib.stride_tricks.sliding_window_view(x.data, window)[::hop][:n_frames]
    return _make(np.ascontiguousarray(frames), (x,), backward, "frame")


def _overlap_add_into(buf: np.ndarray, frames: np.ndarray, hop: int):
    """Scatter-add frames at offsets t*hop. Frames t with equal t mod group

    never overlap (group = window//hop), so each group adds vectorized.
    """
    n_frames, window = frames.shape
    group = max(window // hop, 1)
    for r in range(min(group, n_frames)):
        sel = np.arange(r, n_frames, group)
        block = frames[sel]  # [m, window], disjoint spans
        starts = sel * hop
        span = np.arange(window)
        flat_idx = (starts[:, None] + span[None, :]).reshape(-1)
        buf_flat = buf.reshape(-1)
        # Disjoint within the group, so plain fancy-index add is safe.
        buf_flat[flat_idx] += block.reshape(-1)


def overlap_add(frames: Tensor, hop: int, length: int) -> Tensor:
    """Sum frames into a signal buffer of ``length`` samples."""
    window = frames.data.shape[1]

    def backward(g):
        grads = np.lib.stride_tricks.sliding_window_view(g, window)[::hop]
        grads = grads[: frames.data.shape[0]]
        _accumulate(frames, np.ascontiguousarray(grads))

    buf = np.zeros(length, dtype=frames.data.dtype)
    _overlap_add_into(buf, frames.data, hop)
    return _make(buf, (frames,), backward, "overlap_add")


def rfft_ri(x: Tensor) -> Tensor:
    """Real FFT over the last axis, packed as [..., F, 2] (real, imag)."""
    n = x.data.shape[-1]
    spec = scipy.fft.rfft(x.data, axis=-1)
    out_data = np.stack([spec.real, spec.imag], axis=-1)

    def backward(g):
        big = g[..., 0] + 1j * g[..., 1]
        padded = np.zeros(g.shape[:-2] + (n,), dtype=big.dtype)
        padded[..., : n // 2 + 1] = big
        grad = n * scipy.fft.ifft(padded, axis=-1).real
        _accumulate(x, grad.astype(x.data.dtype, copy=False))

    return _make(out_data, (x,), backward, "rfft")


def irfft_ri(z: Tensor, n: int) -> Tensor:
    """Inverse real FFT of a [..., F, 2] half spectrum to [..., n] samples.

    Imaginary parts of the DC and Nyquist bins are ignored (they are zero for
    spectra of real signals), which keeps the linear map unambiguous.
    """
    spec = z.data[..., 0] + 1j * z.data[..., 1]
    spec = spec.copy()
    spec[..., 0] = spec[..., 0].real
    spec[..., -1] = spec[..., -1].real
    out_data = scipy.fft.irfft(spec, n=n, axis=-1)

    def backward(g):
        u = scipy.fft.rfft(g, axis=-1)
        w_re = np.full(n // 2 + 1, 2.0 / n, dtype=g.dtype)
        w_re[0] = w_re[-1] = 1.0 / n
        w_im = np.full(n // 2 + 1, 2.0 / n, dtype=g.dtype)
        w_im[0] = w_im[-1] = 0.0
        grad = np.stack([u.real * w_re, u.imag * w_im], axis=-1)
        _accumulate(z, grad.astype(z.data.dtype, copy=False))

    return _make(out_data, (z,), backward, "irfft")


def rmag(z: Tensor, eps: float = 1e-12) -> Tensor:
    """Magnitude of a packed [..., 2] complex tensor, smoothed near zero."""
    re, im = z.data[..., 0], z.data[..., 1]
    mag = np.sqrt(re * re + im * im + eps)

    def backward(g):
        scale = g / mag
        grad = np.stack([re * scale, im * scale], axis=-1)
        _accumulate(z, grad)

    return _make(mag.astype(z.data.dtype, copy=False), (z,), backward, "rmag")
