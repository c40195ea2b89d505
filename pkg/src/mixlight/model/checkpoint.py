"""Checkpoint format: magic, length-prefixed JSON header, float32 arrays.

Header carries the model config and an ordered parameter directory with
name/shape/byte-offset; loading validates every shape and the total size.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FormatError
from .config import ModelConfig
from .network import HighlightNet, build_model

MAGIC = b"VAHCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(model: HighlightNet, path):
    params = model.parameters()
    directory = []
    offset = 0
    blobs = []
    for p in params:
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        directory.append({"name": p.name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += len(blobs[-1])
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "config": model.config.to_json(),
            "params": directory,
        },
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, dtype=np.float32) -> HighlightNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    if len(blob) < 12:
        raise FormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + hlen:
        raise FormatError(f"{path}: truncated header payload")
    try:
        header = json.loads(blob[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {header.get('format_version')}")
    config = ModelConfig.from_json(header["config"])
    model = build_model(config, seed=0, dtype=dtype)
    params = {p.name: p for p in model.parameters()}
    directory = header["params"]
    if {d["name"] for d in directory} != set(params):
        raise FormatError(f"{path}: parameter directory does not match the architecture")
    data = blob[12 + hlen :]
    expected = sum(int(np.prod(d["shape"])) * 4 for d in directory)
    if len(data) != expected:
        raise FormatError(f"{path}: payload is {len(data)} bytes, expected {expected}")
    for entry in directory:
        p = params[entry["name"]]
        shape = tuple(entry["shape"])
        if shape != p.data.shape:
            raise FormatError(
                f"{path}: shape mismatch for {entry['name']}: {shape} vs {p.data.shape}"
            )
        count = int(np.prod(shape))
        arr = np.frombuffer(
            data, dtype="<f4", count=count, offset=int(entry["offset"])
        ).reshape(shape)
        p.tensor.data = arr.astype(dtype)
    return model
