"""Core DSP: clips, STFT/iSTFT, envelopes, gain, channel folding, WAV I/O.

Framing convention used throughout: periodic Hann analysis window, frames
centered via reflect padding of window_size/2 on each side, hop dividing the
window. Inverse uses Hann-weighted overlap-add normalized by the summed
squared window, which reconstructs the input exactly (float64).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile

from .errors import ConfigError, InputError, InternalError


@dataclass(frozen=True)
class AudioClip:
    """Mono sampled waveform. Nominal full scale is +-1.0 (float pipeline,

    values outside that range are legal and never clipped).
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("clip must be a nonempty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise InputError("clip contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InputError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    """Complex STFT frames plus the framing metadata needed to invert them."""

    data: np.ndarray  # [F, T_f] complex
    window_size: int
    hop: int
    sample_rate: int
    length: int  # original clip length in samples

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    def magnitude(self) -> "MagnitudeSpectrogram":
        return MagnitudeSpectrogram(
            data=np.abs(self.data),
            window_size=self.window_size,
            hop=self.hop,
            sample_rate=self.sample_rate,
            length=self.length,
        )


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    data: np.ndarray  # [F, T_f] nonnegative real
    window_size: int
    hop: int
    sample_rate: int
    length: int

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise InputError("magnitude spectrogram must be finite and nonnegative")
        object.__setattr__(self, "data", data)

    @property
    def bins(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]


def hann_periodic(n: int) -> np.ndarray:
    """Periodic Hann window (the COLA-friendly variant)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect-pad a 1-D array, tolerating pad >= len (triangular indexing)."""
    n = x.size
    if n == 1:
        return np.full(n + 2 * pad, x[0], dtype=x.dtype)
    idx = np.arange(-pad, n + pad)
    period = 2 * (n - 1)
    idx = np.abs(np.mod(idx, period))
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def frame_count(length: int, hop: int) -> int:
    return length // hop + 1


def _check_framing(window_size: int, hop: int):
    if window_size < 2 or (window_size & (window_size - 1)) != 0:
        raise ConfigError(f"window_size must be a power of two, got {window_size}")
    if hop <= 0 or window_size % hop != 0:
        raise ConfigError(f"hop must divide window_size, got hop={hop} window={window_size}")


def stft(clip: AudioClip, window_size: int, hop: int) -> ComplexSpectrogram:
    """Short-time Fourier transform with centered frames.

    F = window_size/2 + 1 bins, T_f = floor(len/hop) + 1 frames.
    """
    _check_framing(window_size, hop)
    x = clip.samples
    pad = window_size // 2
    xp = reflect_pad(x, pad)
    n_frames = frame_count(x.size, hop)
    frames = np.lib.stride_tricks.sliding_window_view(xp, window_size)[::hop][:n_frames]
    win = hann_periodic(window_size)
    spec = np.fft.rfft(frames * win, axis=1).T  # [F, T_f]
    return ComplexSpectrogram(
        data=spec,
        window_size=window_size,
        hop=hop,
        sample_rate=clip.sample_rate,
        length=x.size,
    )


def cola_norm(window_size: int, hop: int, n_frames: int, padded_len: int) -> np.ndarray:
    """Summed squared Hann window at every output position of the OLA buffer."""
    win_sq = hann_periodic(window_size) ** 2
    norm = np.zeros(padded_len)
    for t in range(n_frames):
        norm[t * hop : t * hop + window_size] += win_sq
    return norm


def istft(spec: ComplexSpectrogram) -> AudioClip:
    """Inverse STFT via Hann-weighted overlap-add with COLA normalization."""
    win = hann_periodic(spec.window_size)
    frames = np.fft.irfft(spec.data.T, n=spec.window_size, axis=1) * win
    pad = spec.window_size // 2
    padded_len = spec.length + 2 * pad
    out = np.zeros(padded_len)
    for t in range(spec.frames):
        out[t * spec.hop : t * spec.hop + spec.window_size] += frames[t]
    norm = cola_norm(spec.window_size, spec.hop, spec.frames, padded_len)
    lo, hi = pad, pad + spec.length
    if np.any(norm[lo:hi] < 1e-12):
        raise InternalError("zero COLA denominator inside the crop region")
    y = out[lo:hi] / norm[lo:hi]
    return AudioClip(samples=y, sample_rate=spec.sample_rate)


def recombine(mag: MagnitudeSpectrogram, phase_of: ComplexSpectrogram) -> AudioClip:
    """Pair a magnitude with the phase of another spectrogram and invert."""
    if mag.data.shape != phase_of.data.shape:
        raise InputError(
            f"shape mismatch: magnitude {mag.data.shape} vs phase {phase_of.data.shape}"
        )
    if (mag.window_size, mag.hop) != (phase_of.window_size, phase_of.hop):
        raise InputError("magnitude and phase use different framing")
    combined = mag.data * np.exp(1j * np.angle(phase_of.data))
    return istft(
        ComplexSpectrogram(
            data=combined,
            window_size=phase_of.window_size,
            hop=phase_of.hop,
            sample_rate=phase_of.sample_rate,
            length=phase_of.length,
        )
    )


def envelope(clip: AudioClip, smoothing_ms: float) -> np.ndarray:
    """Rectified moving-average envelope, decimated by the smoothing length."""
    if smoothing_ms <= 0:
        raise InputError("smoothing_ms must be positive")
    n = int(round(smoothing_ms * clip.sample_rate / 1000.0))
    n = max(n, 1)
    if n > len(clip):
        raise InputError("smoothing window longer than clip")
    smooth = np.convolve(np.abs(clip.samples), np.ones(n) / n, mode="same")
    return smooth[::n]


def to_mono(left: AudioClip, right: AudioClip) -> AudioClip:
    if len(left) != len(right) or left.sample_rate != right.sample_rate:
        raise InputError("stereo channels must share length and sample rate")
    return AudioClip(samples=(left.samples + right.samples) / 2.0, sample_rate=left.sample_rate)


def apply_gain_db(clip: AudioClip, gain_db: float) -> AudioClip:
    if not np.isfinite(gain_db):
        raise InputError("gain_db must be finite")
    return AudioClip(samples=clip.samples * 10.0 ** (gain_db / 20.0), sample_rate=clip.sample_rate)


def write_wav(path, clip: AudioClip):
    """Write a mono float32 little-endian WAV."""
    scipy.io.wavfile.write(path, clip.sample_rate, clip.samples.astype("<f4"))


def read_wav(path, mono: bool = True) -> AudioClip:
    """Read a PCM16 or float WAV; stereo is folded to mono on request."""
    sr, data = scipy.io.wavfile.read(path)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        data = data.astype(np.float64)
    else:
        raise InputError(f"unsupported WAV sample format {data.dtype}")
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise InputError(f"only mono/stereo supported, got {data.shape[1]} channels")
        if mono:
            left = AudioClip(samples=data[:, 0], sample_rate=sr)
            right = AudioClip(samples=data[:, -1], sample_rate=sr)
            return to_mono(left, right)
        raise InputError("stereo read requested without mono fold")
    return AudioClip(samples=data, sample_rate=sr)
