# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Layout: b"LFCK", u32 version, u32 metadata length, metadata (UTF-8 JSON),
# then for each tensor: u32 name length, name (UTF-8), u32 rank, rank x u32
# dims, little-endian f32 payload. All integers are little-endian.

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np
from .zoo import BackbonePreset, Model, build_backbone
from ..core.rng import rng_state
from ..errors import CheckpointFormatError, IncompatibleCheckpointError

MAGIC = b"LFCK"
FORMAT_VERSION = 1

@dataclass
class Checkpoint:
    format_version: int
    preset: BackbonePreset
    seed: int
    with_projection: bool
    tensors: dict[str, np.ndarray]
    rng_state: dict | None = None
    training: dict = field(default_factory=dict)

def _u32(value: int) -> bytes:
    return struct.pack("<I", value)

def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    encoded = name.encode("utf-8")
    array = np.ascontiguousarray(array, dtype="<f4")
    header = _u32(len(encoded)) + encoded + _u32(array.ndim) + b"".join(_u32(d) for d in array.shape)
    return header + array.tobytes()

def save_checkpoint(model: Model, path, rng: np.random.Generator | None = None, training: dict | None = None) -> Path:
    """Write model to path and leave it in evaluation mode."""
    path = Path(path)
    model.eval()
    tensors = {f"param:{k}": v.data for k, v in model.named_parameters().items()}
    tensors.update({f"buffer:{k}": v for k, v in model.named_buffers().items()})
    metadata = {
        "preset": model.preset.to_dict(),
        "seed": int(model.seed),
        "with_projection": model.projection is not None,
        "tensor_count": len(tensors),
        "rng_state": rng_state(rng) if rng is not None else None,
        "training": training or {},
    }
    meta_bytes = json.dumps(metadata, sort_keys=True).encode("utf-8")
    payload = MAGIC + _u32(FORMAT_VERSION) + _u32(len(meta_bytes)) + meta_bytes
    payload += b"".join(_encode_tensor(name, array) for name, array in tensors.items())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return path

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(f"Checkpoint truncated at byte {self.pos} (needed {n} more bytes).")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)

def read_checkpoint(path) -> Checkpoint:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path} is not a LabelForge checkpoint (bad magic).")
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(f"Checkpoint format version {version} is not supported "
                                          f"(expected {FORMAT_VERSION}).")
    try:
        metadata = json.loads(reader.take(reader.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointFormatError(f"Corrupt checkpoint metadata: {err}") from None

    tensors = {}
    while not reader.exhausted:
        name = reader.take(reader.u32()).decode("utf-8", errors="replace")
        dims = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(dims)) if dims else 1
        tensors[name] = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
    if len(tensors) != metadata.get("tensor_count"):
        raise CheckpointFormatError(f"Checkpoint holds {len(tensors)} tensors, metadata announces "
                                    f"{metadata.get('tensor_count')}.")
    try:
        preset = BackbonePreset.from_dict(metadata["preset"])
    except (KeyError, TypeError, ValueError) as err:
        raise CheckpointFormatError(f"Corrupt preset descriptor: {err}") from None
    return Checkpoint(format_version=version, preset=preset, seed=metadata["seed"],
                      with_projection=metadata["with_projection"], tensors=tensors,
                      rng_state=metadata.get("rng_state"), training=metadata.get("training", {}))

def load_checkpoint(path) -> Model:
    checkpoint = read_checkpoint(path)
    model = build_backbone(checkpoint.preset, checkpoint.seed, with_projection=checkpoint.with_projection)
    params = model.named_parameters()
    buffers = model.named_buffers()
    expected = {f"param:{k}" for k in params} | {f"buffer:{k}" for k in buffers}
    if expected != set(checkpoint.tensors):
        raise CheckpointFormatError("Checkpoint tensors do not match the preset architecture.")
    for name, p in params.items():
        array = checkpoint.tensors[f"param:{name}"]
        if array.shape != p.shape:
            raise CheckpointFormatError(f"Tensor {name} has shape {array.shape}, expected {p.shape}.")
        p.data = array.copy()
    for name, buf in buffers.items():
        array = checkpoint.tensors[f"buffer:{name}"]
        if array.shape != buf.shape:
            raise CheckpointFormatError(f"Buffer {name} has shape {array.shape}, expected {buf.shape}.")
        buf[...] = array
    return model.eval()
