# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Two-class corpus with known ground truth: Benign images carry one smooth
# blob, Malignant images an oriented high-frequency texture. Separability
# scales the class signal against a shared noise floor.

from typing import Mapping
import numpy as np
from ..core.classutils import Label
from ..core.rng import stream
from ..errors import ConfigurationError
from .corpus import Sample, Dataset

NOISE_LEVEL = 0.12
SIGNAL_AMPLITUDE = 0.35

def _benign(rng: np.random.Generator, yy: np.ndarray, xx: np.ndarray, size: int) -> np.ndarray:
    cy, cx = rng.uniform(0.3, 0.7, size=2) * size
    sigma = rng.uniform(0.15, 0.25) * size
    return np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))

def _malignant(rng: np.random.Generator, yy: np.ndarray, xx: np.ndarray, size: int) -> np.ndarray:
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(0.2, 0.3) * 2 * np.pi
    phase = rng.uniform(0, 2 * np.pi)
    return 0.5 + 0.5 * np.sin(freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)

def synthesize_sample(seed: int, index: int, label: Label, size: tuple[int, int] = (32, 32),
                      channels: int = 3, separability: float = 1.0) -> np.ndarray:
    rng = stream(seed, "synthetic", index)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    pattern = _benign(rng, yy, xx, min(h, w)) if label == Label.Benign else _malignant(rng, yy, xx, min(h, w))
    tint = rng.uniform(0.8, 1.2, size=channels)
    base = 0.3 + NOISE_LEVEL * rng.standard_normal((h, w, channels))
    pixels = base + SIGNAL_AMPLITUDE * separability * pattern[..., None] * tint
    return np.clip(pixels, 0.0, 1.0).astype(np.float32)

def synthesize_corpus(class_counts: Mapping[Label, int] | int, size: tuple[int, int] = (32, 32),
                      channels: int = 3, separability: float = 1.0, seed: int = 0, name: str = "synthetic") -> Dataset:
    '''
    Build a labeled two-class corpus.

    Parameters
    ----------
    class_counts : mapping Label -> int, or int
        Samples per class; an int splits the total evenly (Benign gets the odd one).
    separability : float, default: 1.0
        Class-signal amplitude relative to the noise floor; 0 makes classes indistinguishable.
    '''
    if isinstance(class_counts, (int, np.integer)):
        total = int(class_counts)
        class_counts = {Label.Benign: total - total // 2, Label.Malignant: total // 2}
    if any(n < 0 for n in class_counts.values()) or sum(class_counts.values()) == 0:
        raise ConfigurationError(f"Invalid class counts {dict(class_counts)}.")
    if separability < 0 or channels < 1 or min(size) < 1:
        raise ConfigurationError("separability must be non-negative and image dimensions positive.")

    labels = [label for label in Label for _ in range(class_counts.get(label, 0))]
    # interleave classes so that corpus order carries no class information
    order = stream(seed, "synthetic-order").permutation(len(labels))
    samples = []
    for index, position in enumerate(order):
        label = labels[position]
        pixels = synthesize_sample(seed, index, label, tuple(size), channels, separability)
        samples.append(Sample.labeled(f"syn-{index:06d}", pixels, label))
    return Dataset(samples, name=name)
