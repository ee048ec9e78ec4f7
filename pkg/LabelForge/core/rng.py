# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Counter-based random streams. A stream is fully determined by the master
# seed and its keys, never by the order in which streams are requested.

import hashlib
import numpy as np

_MASK64 = (1 << 64) - 1

def _key_to_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        return int(key) & _MASK64
    if hasattr(key, "name"):
        key = key.name
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

def stream(seed: int, *keys) -> np.random.Generator:
    entropy = [int(seed) & _MASK64] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

def derive_seed(seed: int, *keys) -> int:
    return int(stream(seed, *keys).integers(0, 2**63 - 1))

def rng_state(generator: np.random.Generator) -> dict:
    def _plain(value):
        if isinstance(value, dict):
            return {k: _plain(v) for k, v in value.items()}
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, np.integer):
            return int(value)
        return value
    return _plain(generator.bit_generator.state)

def restore_rng(state: dict) -> np.random.Generator:
    name = state["bit_generator"]
    bit_generator = getattr(np.random, name)()
    restored = dict(state)
    inner = dict(state["state"])
    for key in ("counter", "key"):
        if key in inner:
            inner[key] = np.asarray(inner[key], dtype=np.uint64)
    restored["state"] = inner
    if "buffer" in restored:
        restored["buffer"] = np.asarray(restored["buffer"], dtype=np.uint64)
    bit_generator.state = restored
    return np.random.Generator(bit_generator)
