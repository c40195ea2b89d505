"""The dual-branch highlighting network.

A spectrogram encoder (frequency-strided convs, unnormalized magnitudes) and a
waveform encoder (time-strided convs over the std-normalized signal) meet in a
shared halving layer. A transformer decoder refines the latent sequence under
cross-attention to encoded context streams, behind a zero-initialized gate so
the latent module starts as the identity. Mirrored decoders with additive
U-Net skips emit a nonnegative ratio mask (applied to the input magnitudes,
inverted with the input phase) and a waveform residual; their sum is the
output.
"""

from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from ..audio import AudioClip, hann_periodic, reflect_pad, cola_norm
from ..errors import InputError
from ..fabric import tensor as T
from ..fabric import signal as FS
from ..fabric import layers as L
from ..fabric.tensor import Tensor
from .config import ModelConfig

MASK_BIAS_INIT = float(np.log(np.e - 1.0))  # softplus(bias) == 1 at init
OUTPUT_W_SCALE = 0.1


class HighlightNet:
    def __init__(self, config: ModelConfig, seed: int, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        self.seed = seed
        store = L.ParamStore(rngmod.stream(seed, "init"), dtype)
        self.store = store
        cfg = config
        chans = cfg.channels

        self.spec_enc = []
        self.wave_enc = []
        c_prev = 1
        for i, (fs, ws) in enumerate(zip(cfg.freq_strides, cfg.wave_strides)):
            c_out = chans[i]
            self.spec_enc.append(
                L.ConvFreq2d(store, f"spec_enc.{i}", c_prev, c_out, 2 * fs, fs, fs // 2)
            )
            self.wave_enc.append(
                L.Conv1d(store, f"wave_enc.{i}", c_prev, c_out, 2 * ws, ws, ws // 2)
            )
            c_prev = c_out

        self.halve = L.Conv1d(store, "shared.halve", chans[-1], cfg.latent_dim, 4, 2, 1)

        self.ctx_proj = {}
        self.ctx_blocks = {}
        self.ctx_norm = {}
        for stream, dim in zip(cfg.context_streams, cfg.context_dims):
            self.ctx_proj[stream] = L.Linear(store, f"ctx.{stream}.proj", dim, cfg.latent_dim)
            self.ctx_blocks[stream] = [
                L.EncoderBlock(store, f"ctx.{stream}.enc.{k}", cfg.latent_dim, cfg.heads, cfg.ffn_dim)
                for k in range(cfg.context_encoder_layers)
            ]
            self.ctx_norm[stream] = L.LayerNorm(store, f"ctx.{stream}.norm", cfg.latent_dim)

        cross = bool(cfg.context_streams)
        self.dec_blocks = [
            L.DecoderBlock(store, f"dec.{k}", cfg.latent_dim, cfg.heads, cfg.ffn_dim, cross)
            for k in range(cfg.decoder_layers)
        ]
        self.dec_norm = L.LayerNorm(store, "dec.norm", cfg.latent_dim)
        self.gate = L.Linear(store, "gate", cfg.latent_dim, cfg.latent_dim, zero=True)

        self.double = L.TConv1d(store, "shared.double", cfg.latent_dim, chans[-1], 4, 2, 1)

        self.spec_dec = []
        self.wave_dec = []
        for i in reversed(range(cfg.n_layers)):
            c_in = chans[i]
            c_out = chans[i - 1] if i > 0 else 1
            fs, ws = cfg.freq_strides[i], cfg.wave_strides[i]
            last = i == 0
            self.spec_dec.append(
                L.TConvFreq2d(
                    store, f"spec_dec.{i}", c_in, c_out, 2 * fs, fs, fs // 2,
                    w_scale=OUTPUT_W_SCALE if last else 1.0,
                    b_fill=MASK_BIAS_INIT if last else None,
                )
            )
            self.wave_dec.append(
                L.TConv1d(
                    store, f"wave_dec.{i}", c_in, c_out, 2 * ws, ws, ws // 2,
                    w_scale=OUTPUT_W_SCALE if last else 1.0,
                    b_fill=0.0 if last else None,
                )
            )

        self._pe_cache: dict[int, np.ndarray] = {}
        self._win = hann_periodic(cfg.window)
        self._cola: dict[int, np.ndarray] = {}

    # -- helpers ---------------------------------------------------------

    def parameters(self):
        return self.store.all()

    def parameter_count(self) -> int:
        return self.store.count()

    def _pe(self, length: int) -> np.ndarray:
        if length not in self._pe_cache:
            self._pe_cache[length] = L.sinusoidal_pe(length, self.config.latent_dim, self.dtype)
        return self._pe_cache[length]

    def _cola_inv(self, padded_len: int, n_frames: int) -> np.ndarray:
        key = padded_len
        if key not in self._cola:
            cfg = self.config
            norm = cola_norm(cfg.window, cfg.hop, n_frames, padded_len + cfg.window)
            pad = cfg.window // 2
            self._cola[key] = (1.0 / norm[pad : pad + padded_len]).astype(self.dtype)
        return self._cola[key]

    def _input_spectra(self, padded: np.ndarray):
        """Magnitude for the encoder and the complex frames reused for phase."""
        cfg = self.config
        pad = cfg.window // 2
        xp = reflect_pad(padded, pad)
        n_frames = padded.size // cfg.hop + 1
        frames = np.lib.stride_tricks.sliding_window_view(xp, cfg.window)[:: cfg.hop][:n_frames]
        spec = np.fft.rfft(frames * self._win, axis=1).T  # [F, T_f]
        mag = np.abs(spec).astype(self.dtype)
        return mag, spec.astype(np.complex64 if self.dtype == np.float32 else np.complex128)

    def precompute_spectra(self, samples: np.ndarray):
        """Input-side (magnitude, complex) pair for repeated-forward caching."""
        cfg = self.config
        n = samples.size
        unit = 2 * cfg.hop
        padded_len = ((n + unit - 1) // unit) * unit
        padded = np.zeros(padded_len, dtype=np.float64)
        padded[:n] = samples
        return self._input_spectra(padded)

    # -- latent highlighting module --------------------------------------

    def encode_context(self, contexts: dict[str, np.ndarray]) -> Tensor | None:
        cfg = self.config
        if not cfg.context_streams:
            return None
        encoded = []
        for stream, dim in zip(cfg.context_streams, cfg.context_dims):
            if stream not in contexts:
                raise InputError(f"model requires context stream {stream!r}")
            data = np.asarray(contexts[stream], dtype=self.dtype)
            if data.ndim != 2 or data.shape[1] != dim:
                raise InputError(
                    f"context {stream!r} must be [frames, {dim}], got {data.shape}"
                )
            h = self.ctx_proj[stream](Tensor(data))
            pe = T.constant(self._pe(data.shape[0]))
            for block in self.ctx_blocks[stream]:
                h = block(h + pe)
            encoded.append(self.ctx_norm[stream](h))
        return encoded[0] if len(encoded) == 1 else T.concat(encoded, axis=0)

    def latent_module(self, f_a: Tensor, memory: Tensor | None) -> Tensor:
        """f_a is time-major [L, C]; returns f_a + Z(D(f_a + PE, memory))."""
        x = f_a + T.constant(self._pe(f_a.data.shape[0]))
        for block in self.dec_blocks:
            x = block(x, memory)
        return f_a + self.gate(self.dec_norm(x))

    # -- full forward ------------------------------------------------------

    def _forward_graph(
        self, samples: np.ndarray, contexts: dict[str, np.ndarray], spectra_cache=None
    ) -> Tensor:
        cfg = self.config
        n = samples.size
        unit = 2 * cfg.hop
        padded_len = ((n + unit - 1) // unit) * unit
        padded = np.zeros(padded_len, dtype=np.float64)
        padded[:n] = samples

        if spectra_cache is not None:
            mag, spec = spectra_cache
        else:
            mag, spec = self._input_spectra(padded)
        f_crop = cfg.window // 2
        t_frames = padded_len // cfg.hop  # even by construction
        n_frames = t_frames + 1

        memory = self.encode_context(contexts)

        # Spectrogram branch (magnitudes left unnormalized).
        s = Tensor(mag[:f_crop, :t_frames][None])  # [1, F_c, T]
        spec_acts = []
        for layer in self.spec_enc:
            s = T.gelu(layer(s))
            spec_acts.append(s)

        # Waveform branch, std-normalized.
        sigma = float(samples.std())
        w_in = (padded / (sigma + 1e-8)).astype(self.dtype)
        w = Tensor(w_in[None])  # [1, T_a]
        wave_acts = []
        for layer in self.wave_enc:
            w = T.gelu(layer(w))
            wave_acts.append(w)

        c_last = cfg.channels[-1]
        fused = s.reshape(c_last, t_frames) + w
        f_a = T.gelu(self.halve(fused))  # [C_a, L]

        f_hat = self.latent_module(f_a.transpose(1, 0), memory)  # [L, C_a]

        d = T.gelu(self.double(f_hat.transpose(1, 0)))  # [C_last, T]

        # Spectrogram decoder -> ratio mask.
        sd = d.reshape(c_last, 1, t_frames)
        for j, layer in enumerate(self.spec_dec):
            sd = layer(sd + spec_acts[-1 - j])
            if j < len(self.spec_dec) - 1:
                sd = T.gelu(sd)
        mask = T.softplus(sd.reshape(f_crop, t_frames))  # [F_c, T]

        # Waveform decoder -> residual waveform.
        wd = d
        for j, layer in enumerate(self.wave_dec):
            wd = layer(wd + wave_acts[-1 - j])
            if j < len(self.wave_dec) - 1:
                wd = T.gelu(wd)
        wave_out = wd.reshape(padded_len) * sigma

        # Apply the mask to the input spectrogram, reuse the input phase.
        mask_ext = T.concat([mask, mask[:, -1:]], axis=1)  # cover the final frame
        c_re = T.constant(spec.real[:f_crop].astype(self.dtype))
        c_im = T.constant(spec.imag[:f_crop].astype(self.dtype))
        zeros_row = T.constant(np.zeros((1, n_frames), dtype=self.dtype))
        ref_re = T.concat([mask_ext * c_re, zeros_row], axis=0)  # Nyquist restored as zero
        ref_im = T.concat([mask_ext * c_im, zeros_row], axis=0)
        f_bins = f_crop + 1
        ri = T.concat(
            [
                ref_re.transpose(1, 0).reshape(n_frames, f_bins, 1),
                ref_im.transpose(1, 0).reshape(n_frames, f_bins, 1),
            ],
            axis=2,
        )
        frames = FS.irfft_ri(ri, cfg.window) * T.constant(self._win.astype(self.dtype))
        buf = FS.overlap_add(frames, cfg.hop, padded_len + cfg.window)
        pad = cfg.window // 2
        spec_wave = buf[pad : pad + padded_len] * T.constant(self._cola_inv(padded_len, n_frames))

        return (spec_wave + wave_out)[:n]

    def forward(self, clip: AudioClip, contexts=None) -> AudioClip:
        """Run the network on a clip; contexts maps stream name -> matrix."""
        if clip.sample_rate != self.config.sr:
            raise InputError(
                f"clip rate {clip.sample_rate} != model rate {self.config.sr} (no resampling)"
            )
        ctx = _normalize_contexts(contexts)
        out = self._forward_graph(clip.samples, ctx)
        return AudioClip(samples=np.asarray(out.data, dtype=np.float64), sample_rate=clip.sample_rate)


def _normalize_contexts(contexts) -> dict[str, np.ndarray]:
    if contexts is None:
        return {}
    out = {}
    for key, value in contexts.items():
        data = value.data if hasattr(value, "data") else np.asarray(value)
        out[key] = data
    return out


def build_model(config: ModelConfig, seed: int, dtype=np.float32) -> HighlightNet:
    return HighlightNet(config, seed, dtype)
