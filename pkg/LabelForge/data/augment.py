# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Coordinates are (row, col) offsets from the image center. A rotation by
# theta sends (0, r) to (r sin(theta), r cos(theta)); shear adds sh * row to
# the column. Resampling is bilinear, out-of-bounds pixels read as 0.

from dataclasses import dataclass, asdict
from typing import NamedTuple
import numpy as np
from scipy import ndimage
from .corpus import Sample, Dataset
from ..core.rng import stream
from ..errors import ConfigurationError, InputError

DEFAULT_MAX_ROTATION = 40.0
DEFAULT_FLIP_PROB = 0.5
DEFAULT_SHEAR = 0.2
DEFAULT_TARGET_SIZE = (32, 32)

class AffineParams(NamedTuple):
    rotation_deg: float
    shear: float
    hflip: bool
    vflip: bool

IDENTITY = AffineParams(0.0, 0.0, False, False)

@dataclass(frozen=True)
class AugmentPolicy:
    max_rotation_deg: float = DEFAULT_MAX_ROTATION
    hflip_prob: float = DEFAULT_FLIP_PROB
    vflip_prob: float = DEFAULT_FLIP_PROB
    shear: float = DEFAULT_SHEAR
    target_size: tuple[int, int] | None = DEFAULT_TARGET_SIZE

    def __post_init__(self):
        if self.max_rotation_deg < 0 or self.shear < 0:
            raise ConfigurationError("max_rotation_deg and shear must be non-negative.")
        if not (0 <= self.hflip_prob <= 1 and 0 <= self.vflip_prob <= 1):
            raise ConfigurationError("Flip probabilities must lie in [0, 1].")
        if self.target_size is not None:
            object.__setattr__(self, "target_size", tuple(int(v) for v in self.target_size))
            if len(self.target_size) != 2 or min(self.target_size) < 1:
                raise ConfigurationError(f"target_size must be a positive (H, W), got {self.target_size}.")

    @classmethod
    def identity(cls, target_size=None) -> "AugmentPolicy":
        return cls(max_rotation_deg=0.0, hflip_prob=0.0, vflip_prob=0.0, shear=0.0, target_size=target_size)

    def sample(self, rng: np.random.Generator) -> AffineParams:
        # fixed draw order keeps stream consumption independent of the outcome
        rotation = rng.uniform(-self.max_rotation_deg, self.max_rotation_deg)
        shear = rng.uniform(-self.shear, self.shear)
        hflip = rng.random() < self.hflip_prob
        vflip = rng.random() < self.vflip_prob
        return AffineParams(float(rotation), float(shear), bool(hflip), bool(vflip))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target_size"] = list(self.target_size) if self.target_size is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        return cls(**d)

def forward_matrix(params: AffineParams, scale: tuple[float, float] = (1.0, 1.0)) -> np.ndarray:
    theta = np.deg2rad(params.rotation_deg)
    c, s = np.cos(theta), np.sin(theta)
    rotation = np.array([[c, s], [-s, c]])
    shear = np.array([[1.0, 0.0], [params.shear, 1.0]])
    return np.diag(scale) @ shear @ rotation

def apply_affine(pixels: np.ndarray, params: AffineParams, target_size: tuple[int, int] | None = None) -> np.ndarray:
    '''
    Flip, then rotate, shear and rescale an H x W x C image about its center.

    Returns
    -------
    np.ndarray
        target H x target W x C float32 image clamped to [0, 1].
    '''
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[0] == 0 or pixels.shape[1] == 0:
        raise InputError(f"Cannot augment an image of shape {pixels.shape}.")
    if params.hflip:
        pixels = pixels[:, ::-1]
    if params.vflip:
        pixels = pixels[::-1]
    h, w, c = pixels.shape
    ho, wo = target_size if target_size is not None else (h, w)

    forward = forward_matrix(params, (ho / h, wo / w))
    inverse = np.linalg.inv(forward)
    center_in = np.array([(h - 1) / 2, (w - 1) / 2])
    center_out = np.array([(ho - 1) / 2, (wo - 1) / 2])
    matrix = np.eye(3)
    matrix[:2, :2] = inverse
    offset = np.zeros(3)
    offset[:2] = center_in - inverse @ center_out

    out = ndimage.affine_transform(pixels, matrix, offset=offset, output_shape=(ho, wo, c),
                                   order=1, mode="constant", cval=0.0, prefilter=False)
    return np.clip(out, 0.0, 1.0).astype(np.float32)

def augment(sample: Sample, policy: AugmentPolicy, rng: np.random.Generator) -> Sample:
    params = policy.sample(rng)
    return sample.with_pixels(apply_affine(sample.pixels, params, policy.target_size))

def sample_stream(seed: int, sample_id: str, epoch: int, view: int = 0) -> np.random.Generator:
    return stream(seed, "augment", sample_id, epoch, view)

def augment_batch(dataset: Dataset, policy: AugmentPolicy, seed: int, epoch: int, view: int = 0) -> np.ndarray:
    """Augmented (N, C, H, W) batch, each sample drawn from its own (seed, id, epoch, view) stream."""
    if len(dataset) == 0:
        return dataset.images()
    views = [apply_affine(s.pixels, policy.sample(sample_stream(seed, s.id, epoch, view)), policy.target_size)
             for s in dataset]
    return np.stack(views).transpose(0, 3, 1, 2)

def resize_batch(dataset: Dataset, target_size: tuple[int, int] | None) -> np.ndarray:
    """Un-augmented batch brought to target_size, used for evaluation and labeling."""
    if target_size is None or len(dataset) == 0 or dataset.image_shape[:2] == tuple(target_size):
        return dataset.images()
    views = [apply_affine(s.pixels, IDENTITY, target_size) for s in dataset]
    return np.stack(views).transpose(0, 3, 1, 2)
