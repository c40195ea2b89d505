"""Inference entry points: single files and whole manifest splits."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .. import corpus as corpusmod
from ..audio import read_wav, write_wav
from ..errors import InputError
from .checkpoint import load_checkpoint
from .network import HighlightNet

log = logging.getLogger("mixlight.infer")


def infer_file(checkpoint_path, input_path, context_paths: dict, out_path) -> Path:
    """Run a checkpoint on one WAV; context_paths maps stream -> CFM path."""
    model = load_checkpoint(checkpoint_path)
    clip = read_wav(input_path)
    contexts = {}
    for stream in model.config.context_streams:
        if stream not in context_paths:
            raise InputError(
                f"checkpoint was trained with context stream {stream!r}; pass its file"
            )
        contexts[stream] = corpusmod.read_cfm(context_paths[stream])
    out = model.forward(clip, contexts)
    write_wav(out_path, out)
    return Path(out_path)


def infer_split(
    model: HighlightNet, manifest: corpusmod.Manifest, split: str, out_dir
) -> list:
    """Write one output WAV per clip of a manifest split into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for record in manifest.split(split):
        clip = corpusmod.load_clip_audio(manifest, record, "input")
        contexts = {
            stream: corpusmod.load_clip_context(manifest, record, stream)
            for stream in model.config.context_streams
        }
        out = model.forward(clip, contexts)
        path = out_dir / f"{record.clip_id}.wav"
        write_wav(path, out)
        written.append(path)
    log.info("wrote %d outputs to %s", len(written), out_dir)
    return written
