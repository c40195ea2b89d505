"""Deterministic three-stem scene synthesis.

Produces speech/music/effects proxy stems, a per-second saliency schedule, a
ground-truth mix rendered from that schedule, and per-second context feature
matrices that encode the schedule through a fixed random projection (stand-ins
for frame/caption embeddings at 1 frame per second).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .audio import AudioClip
from .errors import ConfigError, InputError

CLASSES = ("speech", "music", "effects")

# Raw context row before projection: one-hot(dominant) ++ schedule weights.
RAW_CONTEXT_DIM = 6

# Projection seeds are module constants: every scene shares one projection per
# stream so both the model and the metrics can rely on it.
_PROJECTION_SEEDS = {"vid": 9050, "text": 9051}

_CROSSFADE_S = 0.100


@dataclass(frozen=True)
class HighlightSchedule:
    """Per-second saliency simplex over (speech, music, effects)."""

    weights: np.ndarray  # [seconds, 3]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != 3:
            raise InputError("schedule weights must be [seconds, 3]")
        if np.any(w < 0) or np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("schedule rows must lie on the probability simplex")
        object.__setattr__(self, "weights", w)

    @property
    def seconds(self) -> int:
        return self.weights.shape[0]

    def dominant(self) -> np.ndarray:
        """Per-second dominant class index, or -1 where no class leads."""
        w = self.weights
        top = w.argmax(axis=1)
        lead = w.max(axis=1) > w.min(axis=1) + 1e-9
        return np.where(lead, top, -1)


@dataclass(frozen=True)
class StemSet:
    speech: AudioClip
    music: AudioClip
    effects: AudioClip

    def __post_init__(self):
        clips = (self.speech, self.music, self.effects)
        if len({len(c) for c in clips}) != 1 or len({c.sample_rate for c in clips}) != 1:
            raise InputError("stems must share length and sample rate")

    def as_array(self) -> np.ndarray:
        return np.stack([self.speech.samples, self.music.samples, self.effects.samples])

    @property
    def sample_rate(self) -> int:
        return self.speech.sample_rate


@dataclass(frozen=True)
class ContextFeatureMatrix:
    """Time-major feature matrix at one frame per second."""

    data: np.ndarray  # [frames, dim]

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise InputError("context matrix must be 2-D [frames, dim]")
        if not np.all(np.isfinite(d)):
            raise InputError("context matrix contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def make_schedule(seed: int, seconds: int) -> HighlightSchedule:
    """Piecewise-dominant schedule: 1-3 segments, dominant carries 0.7."""
    if seconds < 2:
        raise InputError("schedule needs at least 2 seconds")
    gen = rngmod.stream(seed, "scene", 0)
    n_seg = int(gen.integers(1, min(3, seconds) + 1))
    cuts = np.sort(gen.choice(np.arange(1, seconds), size=n_seg - 1, replace=False))
    bounds = np.concatenate([[0], cuts, [seconds]])
    weights = np.empty((seconds, 3))
    for a, b in zip(bounds[:-1], bounds[1:]):
        dom = int(gen.integers(0, 3))
        row = np.full(3, 0.15)
        row[dom] = 0.7
        weights[a:b] = row
    return HighlightSchedule(weights=weights)


def _raised_cosine_edges(env: np.ndarray, sr: int, edge_s: float = 0.020) -> np.ndarray:
    """Smooth a 0/1 gate with short cosine ramps (cheap moving-average blur)."""
    n = max(int(edge_s * sr), 1)
    kernel = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(1, n + 1) / (n + 1))
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def _synth_speech(gen: np.random.Generator, sr: int, seconds: int) -> np.ndarray:
    n = sr * seconds
    t = np.arange(n) / sr
    f0 = gen.uniform(110.0, 220.0)
    syllable_hz = gen.uniform(4.0, 8.0)
    phase = gen.uniform(0, 2 * np.pi)
    wave = np.zeros(n)
    for h in range(1, 6):
        wave += np.sin(2 * np.pi * f0 * h * t + gen.uniform(0, 2 * np.pi)) / h
    am = 0.65 + 0.35 * np.sin(2 * np.pi * syllable_hz * t + phase)
    # Voiced/pause alternation: per second, a fixed count of voiced 200 ms
    # slots keeps every second acoustically present while the voiced fraction
    # varies across clips.
    voiced_frac = gen.uniform(0.65, 1.0)
    slots_per_s = 5
    gate = np.zeros(seconds * slots_per_s)
    n_voiced = max(int(round(slots_per_s * voiced_frac)), 3)
    for s in range(seconds):
        idx = gen.permutation(slots_per_s)[:n_voiced]
        gate[s * slots_per_s + idx] = 1.0
    gate = np.repeat(gate, n // gate.size + 1)[:n]
    gate = _raised_cosine_edges(gate, sr)
    return wave * am * gate


def _synth_music(gen: np.random.Generator, sr: int, seconds: int) -> np.ndarray:
    n = sr * seconds
    t = np.arange(n) / sr
    root = gen.uniform(130.0, 200.0)
    third = root * (1.25 if gen.random() < 0.5 else 1.2)
    fifth = root * 1.5
    vibrato = 1.0 + 0.004 * np.sin(2 * np.pi * gen.uniform(4.0, 6.0) * t)
    wave = np.zeros(n)
    for freq, amp in ((root, 1.0), (third, 0.8), (fifth, 0.7)):
        wave += amp * np.sin(2 * np.pi * freq * vibrato * t + gen.uniform(0, 2 * np.pi))
        wave += 0.3 * amp * np.sin(2 * np.pi * 2 * freq * vibrato * t + gen.uniform(0, 2 * np.pi))
    swell_depth = gen.uniform(0.1, 0.5)
    swell = 1.0 - swell_depth * (0.5 + 0.5 * np.sin(2 * np.pi * gen.uniform(0.1, 0.4) * t))
    return wave * swell


def _synth_effects(gen: np.random.Generator, sr: int, seconds: int) -> np.ndarray:
    n = sr * seconds
    env = np.full(n, gen.uniform(0.25, 0.45))  # continuous noise bed
    for s in range(seconds):
        for _ in range(int(gen.integers(1, 4))):
            length = int(gen.uniform(0.10, 0.35) * sr)
            onset = s * sr + int(gen.uniform(0.0, max(sr - length, 1)))
            env[onset : onset + length] = 1.0
    env = _raised_cosine_edges(env, sr)
    burst = gen.normal(size=n) * env

    def bandpass(x):
        spec = np.fft.rfft(x)
        freqs = np.fft.rfftfreq(n, d=1.0 / sr)
        spec[(freqs < 1500.0) | (freqs > 3500.0)] = 0.0
        return np.fft.irfft(spec, n=n)

    x = bandpass(burst)
    # Soft-clip to tame the noise crest factor, then re-limit the band; the
    # per-second salience gap stays decisive only if class rms levels are
    # comparable at equal peaks.
    knee = 2.2 * np.sqrt(np.mean(x * x))
    return bandpass(np.tanh(x / knee) * knee)


def synth_stems(seed: int, sr: int, seconds: int) -> StemSet:
    """Synthesize the three proxy stems, each peak-normalized to 0.5."""
    if sr < 8000:
        raise InputError("sample rate must be at least 8000 Hz")
    if seconds < 2:
        raise InputError("need at least 2 seconds")
    makers = (_synth_speech, _synth_music, _synth_effects)
    clips = []
    for idx, make in enumerate(makers):
        gen = rngmod.stream(seed, "scene", 1 + idx)
        x = make(gen, sr, seconds)
        x = 0.5 * x / np.max(np.abs(x))
        clips.append(AudioClip(samples=x, sample_rate=sr))
    return StemSet(speech=clips[0], music=clips[1], effects=clips[2])


def context_projection(stream: str, dim: int) -> np.ndarray:
    """Fixed projection [RAW_CONTEXT_DIM, dim] with orthonormal rows."""
    if stream not in _PROJECTION_SEEDS:
        raise ConfigError(f"unknown context stream {stream!r}")
    if dim < RAW_CONTEXT_DIM:
        raise ConfigError(f"context dim must be >= {RAW_CONTEXT_DIM}, got {dim}")
    gen = np.random.default_rng(_PROJECTION_SEEDS[stream])
    q, _ = np.linalg.qr(gen.normal(size=(dim, RAW_CONTEXT_DIM)))
    return q.T  # rows orthonormal


def decode_context(ctx: ContextFeatureMatrix, stream: str) -> np.ndarray:
    """Recover the raw [one-hot ++ weights] rows via the projection pinv."""
    proj = context_projection(stream, ctx.dim)
    return ctx.data @ proj.T  # orthonormal rows: pinv(P) == P.T


def _raw_context_rows(schedule: HighlightSchedule) -> np.ndarray:
    rows = np.zeros((schedule.seconds, RAW_CONTEXT_DIM))
    dom = schedule.dominant()
    for s in range(schedule.seconds):
        if dom[s] >= 0:
            rows[s, dom[s]] = 1.0
        rows[s, 3:] = schedule.weights[s]
    return rows


def make_context(
    schedule: HighlightSchedule, dim: int, stream: str, noise_rng: np.random.Generator
) -> ContextFeatureMatrix:
    rows = _raw_context_rows(schedule)
    proj = context_projection(stream, dim)
    data = rows @ proj + noise_rng.normal(0.0, 0.05, size=(schedule.seconds, dim))
    return ContextFeatureMatrix(data=data)


def gain_curves(
    schedule: HighlightSchedule, salience_gap_db: float, sr: int, length: int
) -> np.ndarray:
    """Per-sample linear gain per class [3, length], cross-faded at boundaries.

    Dominant class sits at 0 dB, the others at -salience_gap_db; seconds with
    no dominant class (uniform rows) apply the gap to none.
    """
    dom = schedule.dominant()
    seconds = schedule.seconds
    low = 10.0 ** (-salience_gap_db / 20.0)
    sec_gain = np.ones((seconds, 3))
    for s in range(seconds):
        if dom[s] >= 0:
            sec_gain[s] = low
            sec_gain[s, dom[s]] = 1.0
    half = _CROSSFADE_S / 2.0
    # Knots: constant inside each second, linear ramp across +-50 ms at the
    # boundaries; np.interp holds the edge values at the clip ends.
    xp = []
    for s in range(seconds):
        xp.extend([(s + half) * sr, (s + 1 - half) * sr])
    xp = np.array(xp)
    pos = np.arange(length, dtype=np.float64)
    curves = np.empty((3, length))
    for c in range(3):
        fp = np.repeat(sec_gain[:, c], 2)
        curves[c] = np.interp(pos, xp, fp)
    return curves


@dataclass(frozen=True)
class RenderedScene:
    gt_mix: AudioClip
    gained: StemSet  # schedule-gained stems; gt_mix is exactly their sum
    context_vid: ContextFeatureMatrix
    context_text: ContextFeatureMatrix


def render_scene(
    stems: StemSet,
    schedule: HighlightSchedule,
    salience_gap_db: float = 6.0,
    context_dim: int = 16,
    seed: int = 0,
) -> RenderedScene:
    """Author the ground-truth mix and its proxy context matrices."""
    if salience_gap_db <= 0:
        raise InputError("salience_gap_db must be positive")
    sr = stems.sample_rate
    length = len(stems.speech)
    if schedule.seconds * sr != length:
        raise InputError(
            f"schedule covers {schedule.seconds}s but stems span {length / sr:.3f}s"
        )
    curves = gain_curves(schedule, salience_gap_db, sr, length)
    raw = stems.as_array()
    gained = StemSet(
        speech=AudioClip(samples=raw[0] * curves[0], sample_rate=sr),
        music=AudioClip(samples=raw[1] * curves[1], sample_rate=sr),
        effects=AudioClip(samples=raw[2] * curves[2], sample_rate=sr),
    )
    gt = AudioClip(samples=gained.as_array().sum(axis=0), sample_rate=sr)
    ctx_rng = rngmod.stream(seed, "context")
    ctx_vid = make_context(schedule, context_dim, "vid", ctx_rng)
    ctx_text = make_context(schedule, context_dim, "text", ctx_rng)
    return RenderedScene(gt_mix=gt, gained=gained, context_vid=ctx_vid, context_text=ctx_text)
