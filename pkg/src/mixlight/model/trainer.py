"""Training loop: seeded shuffling, MR-STFT objective, Adam updates,

per-epoch validation, best-checkpoint selection and JSONL logging.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import corpus as corpusmod
from .. import rng as rngmod
from ..errors import InputError, NumericError
from ..fabric import optim
from ..fabric.tensor import Tensor, _toposort
from .checkpoint import save_checkpoint
from .config import ModelConfig
from .loss import default_loss_windows, mr_stft_loss_graph
from .network import HighlightNet, build_model

log = logging.getLogger("mixlight.train")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 4
    epochs: int = 10
    seed: int = 0
    max_steps: int | None = None
    early_stop_ratio: float | None = None  # stop once train loss < ratio * first loss


@dataclass
class TrainResult:
    model: HighlightNet
    history: list = field(default_factory=list)
    checkpoint_path: Path | None = None
    best_val: float | None = None
    steps: int = 0


_CACHE_CLIP_LIMIT = 64  # precompute constant spectra only for small datasets


class _ClipExample:
    __slots__ = ("input", "target", "contexts", "spectra", "target_mags")

    def __init__(self, input_samples, target_samples, contexts):
        self.input = input_samples
        self.target = target_samples
        self.contexts = contexts
        self.spectra = None
        self.target_mags = None


def load_split(manifest: corpusmod.Manifest, split: str, config: ModelConfig):
    examples = []
    for record in manifest.split(split):
        if record.sr != config.sr:
            raise InputError(
                f"{record.clip_id}: corpus rate {record.sr} != model rate {config.sr}"
            )
        clip_in = corpusmod.load_clip_audio(manifest, record, "input")
        clip_gt = corpusmod.load_clip_audio(manifest, record, "gt")
        contexts = {
            stream: corpusmod.load_clip_context(manifest, record, stream).data
            for stream in config.context_streams
        }
        examples.append(_ClipExample(clip_in.samples, clip_gt.samples, contexts))
    return examples


def _first_nonfinite(loss_node: Tensor) -> str:
    for node in _toposort(loss_node):
        if not np.all(np.isfinite(node.data)):
            return node.op
    return "loss"


def _batch_loss(model: HighlightNet, batch, windows) -> Tensor:
    total = None
    for ex in batch:
        pred = model._forward_graph(ex.input, ex.contexts, spectra_cache=ex.spectra)
        term = mr_stft_loss_graph(pred, ex.target, windows, target_mags=ex.target_mags)
        total = term if total is None else total + term
    return total * (1.0 / len(batch))


def evaluate_loss(model: HighlightNet, examples, windows) -> float:
    if not examples:
        return float("nan")
    values = []
    for ex in examples:
        pred = model._forward_graph(ex.input, ex.contexts, spectra_cache=ex.spectra)
        loss = mr_stft_loss_graph(pred, ex.target, windows, target_mags=ex.target_mags)
        values.append(float(loss.data))
    return float(np.mean(values))


def _warm_caches(model: HighlightNet, examples, windows):
    if len(examples) > _CACHE_CLIP_LIMIT:
        return
    from .loss import target_magnitudes

    for ex in examples:
        ex.spectra = model.precompute_spectra(ex.input)
        ex.target_mags = target_magnitudes(ex.target, windows, model.dtype)


def train(
    manifest: corpusmod.Manifest,
    config: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
) -> TrainResult:
    """Train on the manifest's train split; best-validation checkpoint wins.

    Writes ``model.ckpt`` and ``train_log.jsonl`` under ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set = load_split(manifest, "train", config)
    val_set = load_split(manifest, "val", config)
    if not train_set:
        raise InputError("manifest train split is empty")

    model = build_model(config, train_cfg.seed)
    params = model.parameters()
    windows = default_loss_windows(config.window)
    _warm_caches(model, train_set, windows)
    _warm_caches(model, val_set, windows)
    ckpt_path = out_dir / "model.ckpt"
    log_path = out_dir / "train_log.jsonl"

    result = TrainResult(model=model)
    best_val = np.inf
    best_params = None
    first_loss = None
    step = 0
    start = time.monotonic()
    stop = False

    with open(log_path, "w", encoding="utf-8") as log_fh:

        def emit(split, loss_value):
            row = {
                "step": step,
                "split": split,
                "loss": loss_value,
                "wall": round(time.monotonic() - start, 3),
            }
            log_fh.write(json.dumps(row) + "\n")
            result.history.append(row)

        for epoch in range(train_cfg.epochs):
            order = rngmod.stream(train_cfg.seed, "shuffle", epoch).permutation(len(train_set))
            for lo in range(0, len(order), train_cfg.batch):
                batch = [train_set[i] for i in order[lo : lo + train_cfg.batch]]
                loss = _batch_loss(model, batch, windows)
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    raise NumericError(
                        f"non-finite loss at step {step}; first bad tensor: "
                        f"{_first_nonfinite(loss)}"
                    )
                optim.zero_grads(params)
                loss.backward()
                step += 1
                optim.adam_step(params, lr=train_cfg.lr, t=step)
                emit("train", loss_value)
                if first_loss is None:
                    first_loss = loss_value
                if (
                    train_cfg.early_stop_ratio is not None
                    and loss_value < train_cfg.early_stop_ratio * first_loss
                ):
                    stop = True
                if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                    stop = True
                if stop:
                    break
            if val_set:
                val_loss = evaluate_loss(model, val_set, windows)
                emit("val", val_loss)
                if val_loss < best_val:
                    best_val = val_loss
                    best_params = [p.data.copy() for p in params]
            if stop:
                break

        # The returned model carries the best-validation weights (when a
        # validation split exists) and matches the checkpoint bit for bit.
        if best_params is not None:
            for p, data in zip(params, best_params):
                p.tensor.data = data
        save_checkpoint(model, ckpt_path)

    result.checkpoint_path = ckpt_path
    result.best_val = None if np.isinf(best_val) else float(best_val)
    result.steps = step
    log.info("trained %d steps; checkpoint at %s", step, ckpt_path)
    return result
