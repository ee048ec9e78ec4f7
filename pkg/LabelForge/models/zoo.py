# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

# Desk-scale stand-ins for the three backbone families:
#   mini-vgg  3 x (conv-relu-conv-relu-maxpool), flatten, dense
#   mini-res  7x7 stride-2 stem, identity-shortcut residual blocks, global average pool
#   mini-eff  mini-res with compound width/depth scaling

import math
from dataclasses import dataclass, asdict, replace
import numpy as np
from ..core.classutils import Family
from ..core.tensor import Tensor, no_grad
from ..core import functional as F
from ..core.rng import stream
from ..errors import ConfigurationError, InputError, UsageError
from .layers import (Module, Sequential, Conv2d, Dense, BatchNorm, ReLU, MaxPool2, GlobalAvgPool,
                     Flatten, ResidualBlock)

NUM_CLASSES = 2
DEFAULT_INPUT_SIZE = (32, 32, 3)
DEFAULT_EMBEDDING_DIM = 128
DEFAULT_PROJECTION_DIM = 64
MIN_INPUT_SIDE = 8

VGG_STAGE_CHANNELS = (8, 16, 32)
VGG_BASE_CONVS = 2
RES_BASE_CHANNELS = 16
RES_BASE_BLOCKS = 3
# compound coefficients for the scaled family (width, depth)
EFF_DEFAULT_SCALING = (1.1, 1.2)

def _scaled(base: int, multiplier: float) -> int:
    return max(1, math.ceil(round(base * multiplier, 9)))

@dataclass(frozen=True)
class BackbonePreset:
    family: Family
    input_size: tuple[int, int, int] = DEFAULT_INPUT_SIZE
    width_multiplier: float = 1.0
    depth_multiplier: float = 1.0
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    projection_dim: int = DEFAULT_PROJECTION_DIM

    def __post_init__(self):
        if not isinstance(self.family, Family):
            object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if len(self.input_size) != 3 or min(self.input_size) < 1:
            raise ConfigurationError(f"input_size must be (H, W, C), got {self.input_size}.")
        if self.width_multiplier <= 0 or self.depth_multiplier <= 0:
            raise ConfigurationError("width_multiplier and depth_multiplier must be positive.")
        if self.embedding_dim < 1 or self.projection_dim < 1:
            raise ConfigurationError("embedding_dim and projection_dim must be positive.")

    @classmethod
    def named(cls, name: str | Family, **overrides) -> "BackbonePreset":
        try:
            family = Family(name) if not isinstance(name, Family) else name
        except ValueError:
            raise ConfigurationError(f"Wrong backbone preset {name!r}, possible presets are "
                                     f"{', '.join(f.value for f in Family)}.") from None
        if family == Family.MiniEff:
            overrides.setdefault("width_multiplier", EFF_DEFAULT_SCALING[0])
            overrides.setdefault("depth_multiplier", EFF_DEFAULT_SCALING[1])
        return cls(family=family, **overrides)

    @property
    def name(self) -> str:
        return self.family.value

    @property
    def block_count(self) -> int:
        if self.family == Family.MiniVgg:
            return len(VGG_STAGE_CHANNELS) * _scaled(VGG_BASE_CONVS, self.depth_multiplier)
        return _scaled(RES_BASE_BLOCKS, self.depth_multiplier)

    def with_input_size(self, input_size) -> "BackbonePreset":
        return replace(self, input_size=tuple(input_size))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BackbonePreset":
        return cls(**{**d, "family": Family(d["family"]), "input_size": tuple(d["input_size"])})

def _vgg_backbone(preset: BackbonePreset, rng: np.random.Generator) -> Sequential:
    h, w, c = preset.input_size
    convs = _scaled(VGG_BASE_CONVS, preset.depth_multiplier)
    layers: list[Module] = []
    in_c = c
    for base in VGG_STAGE_CHANNELS:
        out_c = _scaled(base, preset.width_multiplier)
        for _ in range(convs):
            layers += [Conv2d(in_c, out_c, 3, rng, padding=1), ReLU()]
            in_c = out_c
        layers.append(MaxPool2())
        h, w = h // 2, w // 2
    layers += [Flatten(), Dense(in_c * h * w, preset.embedding_dim, rng), ReLU()]
    return Sequential(*layers)

def _residual_backbone(preset: BackbonePreset, rng: np.random.Generator) -> Sequential:
    c = preset.input_size[2]
    width = _scaled(RES_BASE_CHANNELS, preset.width_multiplier)
    blocks = [ResidualBlock(width, rng) for _ in range(preset.block_count)]
    return Sequential(
        Conv2d(c, width, 7, rng, stride=2, padding=3, bias=False), BatchNorm(width), ReLU(),
        *blocks,
        BatchNorm(width), ReLU(), GlobalAvgPool(),
        Dense(width, preset.embedding_dim, rng), ReLU(),
    )

class Model(Module):
    def __init__(self, preset: BackbonePreset, seed: int, with_projection: bool = True):
        super().__init__()
        self.preset = preset
        self.seed = seed
        rng = stream(seed, "init", preset.name)
        if preset.family == Family.MiniVgg:
            backbone = _vgg_backbone(preset, rng)
        else:
            backbone = _residual_backbone(preset, rng)
        self.backbone = self.add_child("backbone", backbone)
        self.classifier = self.add_child("classifier", Dense(preset.embedding_dim, NUM_CLASSES, rng))
        self.projection = None
        if with_projection:
            self.projection = self.add_child("projection", Sequential(
                Dense(preset.embedding_dim, preset.embedding_dim, rng), ReLU(),
                Dense(preset.embedding_dim, preset.projection_dim, rng),
            ))

    def residual_blocks(self) -> list[ResidualBlock]:
        return [m for m in self.backbone if isinstance(m, ResidualBlock)]

    def check_batch(self, batch) -> Tensor:
        batch = batch if isinstance(batch, Tensor) else Tensor(batch)
        h, w, c = self.preset.input_size
        if batch.ndim != 4 or batch.shape[1:] != (c, h, w):
            raise InputError(f"Batch of shape {batch.shape} does not match preset input (N, {c}, {h}, {w}).")
        return batch

    def embedding(self, batch) -> Tensor:
        return self.backbone(self.check_batch(batch))

    def logits(self, batch) -> Tensor:
        return self.classifier(self.embedding(batch))

    def forward(self, batch) -> Tensor:
        return self.logits(batch)

    def load_backbone_from(self, other: "Model"):
        source = other.backbone.named_parameters()
        for name, p in self.backbone.named_parameters().items():
            p.data = source[name].data.copy()
        source_buffers = other.backbone.named_buffers()
        for name, buf in self.backbone.named_buffers().items():
            buf[...] = source_buffers[name]

def build_backbone(preset: BackbonePreset, seed: int, with_projection: bool = True) -> Model:
    h, w, _ = preset.input_size
    if min(h, w) < MIN_INPUT_SIDE:
        raise ConfigurationError(f"Input {h}x{w} too small for the pooling pyramid, need at least "
                                 f"{MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}.")
    return Model(preset, seed, with_projection=with_projection)

def forward_classify(model: Model, batch) -> Tensor:
    return F.softmax(model.logits(batch))

def forward_embed(model: Model, batch) -> Tensor:
    if model.projection is None:
        raise UsageError("forward_embed needs a model built with a projection head.")
    return F.l2_normalize(model.projection(model.embedding(batch)))

def predict_proba(model: Model, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            parts = [forward_classify(model, images[i:i + batch_size]).data
                     for i in range(0, len(images), batch_size)]
    finally:
        model.train(was_training)
    if not parts:
        return np.zeros((0, NUM_CLASSES), dtype=np.float32)
    return np.concatenate(parts, axis=0)

def predict_embeddings(model: Model, images: np.ndarray, batch_size: int = 128) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            parts = [forward_embed(model, images[i:i + batch_size]).data
                     for i in range(0, len(images), batch_size)]
    finally:
        model.train(was_training)
    return np.concatenate(parts, axis=0)
