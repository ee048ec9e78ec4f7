# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import hashlib
import json
import os
from dataclasses import dataclass, field, asdict, replace, fields
from pathlib import Path
from ..core.classutils import Family, Label, TrainingSet, Setting
from ..data.corpus import Dataset
from ..data.synthetic import synthesize_corpus
from ..models.zoo import BackbonePreset
from ..settings.supervised import SupervisedConfig
from ..settings.pseudo_labeling import PseudoLabelConfig
from ..settings.contrastive import ContrastiveConfig
from ..errors import ConfigurationError

DEFAULT_SEED = 42
DEFAULT_SAMPLES = 625
DEFAULT_OUT_DIR = "labelforge-out"
FORMATS = ("json", "csv", "plotdata")
THREADS_ENV = "LABELFORGE_THREADS"
# keys that only say where results go; they never enter the report or its hash
OUTPUT_KEYS = ("out_dir", "formats")

@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = DEFAULT_SAMPLES
    benign_fraction: float = 0.5
    size: tuple[int, int] = (32, 32)
    channels: int = 3
    separability: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(v) for v in self.size))
        if self.n_samples < 4:
            raise ConfigurationError(f"A synthetic corpus needs at least 4 samples, got {self.n_samples}.")
        if not 0 < self.benign_fraction < 1:
            raise ConfigurationError(f"benign_fraction must lie in (0, 1), got {self.benign_fraction}.")

    def class_counts(self) -> dict[Label, int]:
        benign = int(round(self.n_samples * self.benign_fraction))
        return {Label.Benign: benign, Label.Malignant: self.n_samples - benign}

    def build(self, seed: int) -> Dataset:
        return synthesize_corpus(self.class_counts(), size=self.size, channels=self.channels,
                                 separability=self.separability, seed=self.seed if self.seed is not None else seed)

    def to_dict(self) -> dict:
        return {**asdict(self), "size": list(self.size)}

def _all_sets() -> tuple[str, ...]:
    return tuple(ts.name for ts in TrainingSet)

def _all_presets() -> tuple[str, ...]:
    return tuple(f.value for f in Family)

@dataclass(frozen=True)
class ExperimentConfig:
    '''
    Everything a run depends on. Unknown keys and invalid values raise
    ConfigurationError; to_dict() writes every default back out.
    '''
    seed: int = DEFAULT_SEED
    manifest: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    presets: tuple[str, ...] = field(default_factory=_all_presets)
    training_sets: tuple[str, ...] = field(default_factory=_all_sets)
    input_size: tuple[int, int] = (32, 32)
    train_fraction: float = 0.8
    supervised: SupervisedConfig = field(default_factory=SupervisedConfig)
    pseudo: PseudoLabelConfig = field(default_factory=PseudoLabelConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    representative_semi: str = TrainingSet.TS4.name
    alpha: float = 0.05
    fail_cells: tuple[str, ...] = ()
    record_timestamps: bool = False
    out_dir: str = DEFAULT_OUT_DIR
    formats: tuple[str, ...] = FORMATS

    def __post_init__(self):
        object.__setattr__(self, "presets", tuple(self.presets))
        object.__setattr__(self, "training_sets", tuple(ts.name for ts in self.sets))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        object.__setattr__(self, "fail_cells", tuple(self.fail_cells))
        object.__setattr__(self, "formats", tuple(self.formats))
        if not self.presets or not self.training_sets:
            raise ConfigurationError("A run needs at least one preset and one training set.")
        if len(set(self.presets)) != len(self.presets) or len(set(self.training_sets)) != len(self.training_sets):
            raise ConfigurationError("Presets and training sets must not repeat.")
        for name in self.presets:
            BackbonePreset.named(name)
        if self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed}.")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError(f"train_fraction must lie in (0, 1), got {self.train_fraction}.")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}.")
        representative = TrainingSet.__members__.get(self.representative_semi)
        if representative is None or representative.setting != Setting.SemiSL:
            raise ConfigurationError(f"representative_semi must name a Semi-SL set (TS2 to TS6), "
                                     f"got {self.representative_semi!r}.")
        unknown = [f for f in self.formats if f not in FORMATS]
        if unknown:
            raise ConfigurationError(f"Wrong report format {unknown[0]!r}, possible formats are {', '.join(FORMATS)}.")

    @property
    def sets(self) -> list[TrainingSet]:
        try:
            return TrainingSet.parse(list(self.training_sets))
        except ValueError as err:
            raise ConfigurationError(str(err)) from None

    def backbone_presets(self, channels: int) -> list[BackbonePreset]:
        h, w = self.input_size
        return [BackbonePreset.named(name, input_size=(h, w, channels)) for name in self.presets]

    def cell_keys(self) -> list[str]:
        return [cell_key(ts, name) for ts in self.training_sets for name in self.presets]

    def threads(self) -> int:
        return threads_from_env()

    def to_dict(self, include_output: bool = True) -> dict:
        d = {
            "seed": self.seed,
            "manifest": self.manifest,
            "synthetic": self.synthetic.to_dict(),
            "presets": list(self.presets),
            "training_sets": list(self.training_sets),
            "input_size": list(self.input_size),
            "train_fraction": self.train_fraction,
            "supervised": self.supervised.to_dict(),
            "pseudo": self.pseudo.to_dict(),
            "contrastive": self.contrastive.to_dict(),
            "representative_semi": self.representative_semi,
            "alpha": self.alpha,
            "fail_cells": list(self.fail_cells),
            "record_timestamps": self.record_timestamps,
            "out_dir": self.out_dir,
            "formats": list(self.formats),
        }
        if not include_output:
            for key in OUTPUT_KEYS:
                d.pop(key)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys {unknown}, possible keys are {sorted(known)}.")
        d = dict(d)
        try:
            if "synthetic" in d:
                d["synthetic"] = SyntheticSpec(**d["synthetic"])
            if "supervised" in d:
                d["supervised"] = SupervisedConfig.from_dict(d["supervised"])
            if "pseudo" in d:
                d["pseudo"] = PseudoLabelConfig.from_dict(d["pseudo"])
            if "contrastive" in d:
                d["contrastive"] = ContrastiveConfig.from_dict(d["contrastive"])
            return cls(**d)
        except TypeError as err:
            raise ConfigurationError(f"Invalid configuration: {err}") from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"Configuration file {path} not found.") from None
        except json.JSONDecodeError as err:
            raise ConfigurationError(f"Configuration file {path} is not valid JSON: {err}") from None
        if not isinstance(data, dict):
            raise ConfigurationError(f"Configuration file {path} must hold a JSON object.")
        if data.get("manifest"):
            manifest = Path(data["manifest"])
            if not manifest.is_absolute():
                data["manifest"] = str(Path(path).parent / manifest)
        return cls.from_dict(data)

    def override(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(include_output=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

def cell_key(training_set, preset) -> str:
    ts = training_set.name if isinstance(training_set, TrainingSet) else str(training_set)
    name = preset.name if isinstance(preset, BackbonePreset) else str(preset)
    return f"{ts}/{name}"

def threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}.") from None
    if threads < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}.")
    return threads
