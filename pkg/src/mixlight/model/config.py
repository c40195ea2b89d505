"""Model configuration and the desk/paper presets.

Layer arithmetic invariants: the frequency-stride ladder must collapse the
cropped spectrogram (window/2 bins) to a single bin, and the waveform-stride
ladder must multiply to the hop so both branches emit the same frame count.
Kernels follow kernel = 2*stride with pad = stride/2, which makes every layer
an exact divide-by-stride and its transposed mirror an exact multiply.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import prod

from ..errors import ConfigError

PRESETS = ("desk", "paper")


@dataclass(frozen=True)
class ModelConfig:
    sr: int
    window: int
    hop: int
    freq_strides: tuple
    wave_strides: tuple
    channels: tuple
    latent_dim: int
    context_streams: tuple  # subset of ("vid", "text"), possibly empty
    context_dims: tuple  # one dim per stream
    context_encoder_layers: int
    decoder_layers: int
    heads: int
    ffn_dim: int

    def __post_init__(self):
        object.__setattr__(self, "freq_strides", tuple(self.freq_strides))
        object.__setattr__(self, "wave_strides", tuple(self.wave_strides))
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "context_streams", tuple(self.context_streams))
        object.__setattr__(self, "context_dims", tuple(self.context_dims))
        self.validate()

    def validate(self):
        if self.window < 4 or (self.window & (self.window - 1)) != 0:
            raise ConfigError(f"window must be a power of two, got {self.window}")
        if self.hop <= 0 or self.window % self.hop != 0:
            raise ConfigError("hop must divide the window")
        f_cropped = self.window // 2
        if prod(self.freq_strides) != f_cropped:
            raise ConfigError(
                f"freq_strides {self.freq_strides} must multiply to {f_cropped}"
            )
        if prod(self.wave_strides) != self.hop:
            raise ConfigError(
                f"wave_strides {self.wave_strides} must multiply to hop {self.hop}"
            )
        if not (len(self.freq_strides) == len(self.wave_strides) == len(self.channels)):
            raise ConfigError("freq_strides, wave_strides and channels must align")
        for s in (*self.freq_strides, *self.wave_strides):
            if s < 2 or s % 2 != 0:
                raise ConfigError(f"strides must be even and >= 2, got {s}")
        if len(self.context_streams) != len(self.context_dims):
            raise ConfigError("one context dim per context stream required")
        for stream in self.context_streams:
            if stream not in ("vid", "text"):
                raise ConfigError(f"unknown context stream {stream!r}")
        if self.latent_dim % self.heads != 0:
            raise ConfigError("latent_dim must be divisible by heads")

    @property
    def n_layers(self) -> int:
        return len(self.channels)

    def to_json(self) -> dict:
        return {
            "sr": self.sr,
            "window": self.window,
            "hop": self.hop,
            "freq_strides": list(self.freq_strides),
            "wave_strides": list(self.wave_strides),
            "channels": list(self.channels),
            "latent_dim": self.latent_dim,
            "context_streams": list(self.context_streams),
            "context_dims": list(self.context_dims),
            "context_encoder_layers": self.context_encoder_layers,
            "decoder_layers": self.decoder_layers,
            "heads": self.heads,
            "ffn_dim": self.ffn_dim,
        }

    @staticmethod
    def from_json(obj: dict) -> "ModelConfig":
        return ModelConfig(
            sr=int(obj["sr"]),
            window=int(obj["window"]),
            hop=int(obj["hop"]),
            freq_strides=tuple(obj["freq_strides"]),
            wave_strides=tuple(obj["wave_strides"]),
            channels=tuple(obj["channels"]),
            latent_dim=int(obj["latent_dim"]),
            context_streams=tuple(obj["context_streams"]),
            context_dims=tuple(obj["context_dims"]),
            context_encoder_layers=int(obj["context_encoder_layers"]),
            decoder_layers=int(obj["decoder_layers"]),
            heads=int(obj["heads"]),
            ffn_dim=int(obj["ffn_dim"]),
        )

    def with_context(self, streams, dim_by_stream=None) -> "ModelConfig":
        """Derive a variant with a different set of context streams."""
        streams = tuple(streams)
        if dim_by_stream is None:
            dim_by_stream = dict(zip(self.context_streams, self.context_dims))
        dims = tuple(dim_by_stream[s] for s in streams)
        return replace(self, context_streams=streams, context_dims=dims)


def preset(name: str) -> ModelConfig:
    if name == "desk":
        return ModelConfig(
            sr=8000,
            window=512,
            hop=128,
            freq_strides=(4, 4, 4, 4),
            wave_strides=(4, 4, 4, 2),
            channels=(16, 32, 64, 64),
            latent_dim=64,
            context_streams=("vid", "text"),
            context_dims=(16, 16),
            context_encoder_layers=3,
            decoder_layers=3,
            heads=4,
            ffn_dim=128,
        )
    if name == "paper":
        return ModelConfig(
            sr=44100,
            window=4096,
            hop=1024,
            freq_strides=(4, 4, 4, 4, 8),
            wave_strides=(4, 4, 4, 4, 4),
            channels=(48, 96, 192, 384, 768),
            latent_dim=768,
            context_streams=("vid", "text"),
            context_dims=(768, 4096),
            context_encoder_layers=3,
            decoder_layers=3,
            heads=4,
            ffn_dim=3072,
        )
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


def miniature() -> ModelConfig:
    """Tiny configuration for end-to-end gradient verification."""
    return ModelConfig(
        sr=2048,
        window=64,
        hop=16,
        freq_strides=(4, 8),
        wave_strides=(4, 4),
        channels=(8, 8),
        latent_dim=8,
        context_streams=("vid",),
        context_dims=(8,),
        context_encoder_layers=1,
        decoder_layers=1,
        heads=2,
        ffn_dim=16,
    )
