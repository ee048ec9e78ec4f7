# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

from decimal import Decimal, ROUND_HALF_UP, ROUND_DOWN
from enum import Enum, IntEnum
from typing import NamedTuple

class Label(IntEnum):
    Benign = 0
    Malignant = 1

    @property
    def token(self) -> str:
        return "B" if self == Label.Benign else "M"

    @classmethod
    def from_token(cls, token: str) -> "Label":
        token = token.strip().upper()
        if token == "B":
            return cls.Benign
        if token == "M":
            return cls.Malignant
        raise ValueError(f"Unknown label token {token!r}, expected B or M.")

class LabelSource(Enum):
    GroundTruth = "ground-truth"
    Pseudo = "pseudo"
    Cluster = "cluster"
    Nothing = "none"

class Setting(Enum):
    SL = "SL"
    SemiSL = "Semi-SL"
    SelfSL = "Self-SL"

    @property
    def title(self) -> str:
        return {Setting.SL: "Setting 1", Setting.SemiSL: "Setting 2", Setting.SelfSL: "Setting 3"}[self]

class Family(Enum):
    MiniRes = "mini-res"
    MiniVgg = "mini-vgg"
    MiniEff = "mini-eff"

class LayerKind(Enum):
    dense = 0
    relu = 1
    maxpool2 = 2
    avgpool_global = 3
    batchnorm = 4
    flatten = 5
    softmax = 6

class Refresh(Enum):
    PerEpoch = "per-epoch"
    Once = "once"

class Rounding(Enum):
    HalfUp = 0
    Truncate = 1

    def apply(self, x: Decimal, places: int = 2) -> Decimal:
        quantum = Decimal(1).scaleb(-places)
        if self == Rounding.HalfUp:
            return x.quantize(quantum, rounding=ROUND_HALF_UP)
        if self == Rounding.Truncate:
            return x.quantize(quantum, rounding=ROUND_DOWN)

class TrainingSetSpec(NamedTuple):
    name: "TrainingSet"
    labeled_fraction: float
    setting: Setting

class TrainingSet(Enum):
    TS1 = (1.0, Setting.SL)
    TS2 = (0.5, Setting.SemiSL)
    TS3 = (0.4, Setting.SemiSL)
    TS4 = (0.3, Setting.SemiSL)
    TS5 = (0.2, Setting.SemiSL)
    TS6 = (0.1, Setting.SemiSL)
    TS7 = (0.0, Setting.SelfSL)

    @property
    def spec(self) -> TrainingSetSpec:
        fraction, setting = self.value
        return TrainingSetSpec(name=self, labeled_fraction=fraction, setting=setting)

    @property
    def labeled_fraction(self) -> float:
        return self.value[0]

    @property
    def setting(self) -> Setting:
        return self.value[1]

    @classmethod
    def parse(cls, names: str | list[str]) -> list["TrainingSet"]:
        if isinstance(names, str):
            names = [n for n in names.split(",") if n.strip()]
        try:
            return [cls[n.strip().upper()] for n in names]
        except KeyError as err:
            raise ValueError(f"Unknown training set {err.args[0]!r}, valid sets are TS1 to TS7.") from None
