# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

import logging
import os
import re
import struct
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping
import numpy as np
import pandas as pd
from matplotlib import image as mpimg
from ..core.classutils import Label, LabelSource
from ..errors import IngestionError, EmptyCorpusError, InputError, UsageError

logger = logging.getLogger(__name__)

RAW_MAGIC = b"LFIM"
RAW_VERSION = 1
MANIFEST_COLUMNS = ("id", "path", "label")

# per-dataset class counts of the three cancer corpora (Benign, Malignant)
REFERENCE_CLASS_COUNTS = {
    "breast": {Label.Benign: 2480, Label.Malignant: 5429},
    "lung": {Label.Benign: 5206, Label.Malignant: 10872},
    "kidney": {Label.Benign: 5077, Label.Malignant: 2283},
}

class Tripwire:
    """Counts reads of ground truth that was hidden from the learners."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reads = 0

    def trip(self):
        with self._lock:
            self.reads += 1

@dataclass(frozen=True, eq=False)
class Sample:
    id: str
    pixels: np.ndarray
    assigned_label: Label | None = None
    label_source: LabelSource = LabelSource.Nothing
    hidden: bool = False
    _label: Label | None = field(default=None, repr=False)
    tripwire: Tripwire | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise InputError(f"Sample {self.id} pixels must be H x W x C, got {self.pixels.shape}.")
        if self.label_source == LabelSource.GroundTruth and self.assigned_label != self._label:
            raise InputError(f"Sample {self.id}: ground-truth label must equal the true label.")
        if self.label_source == LabelSource.Nothing and self.assigned_label is not None:
            raise InputError(f"Sample {self.id}: unlabeled samples carry no assigned label.")

    @classmethod
    def labeled(cls, id: str, pixels: np.ndarray, label: Label) -> "Sample":
        label = Label(label)
        return cls(id=id, pixels=pixels, assigned_label=label, label_source=LabelSource.GroundTruth, _label=label)

    @classmethod
    def unlabeled(cls, id: str, pixels: np.ndarray, hidden_label: Label | None = None,
                  tripwire: Tripwire | None = None) -> "Sample":
        return cls(id=id, pixels=pixels, hidden=True, _label=hidden_label, tripwire=tripwire)

    @property
    def true_label(self) -> Label | None:
        if self.hidden and self.tripwire is not None:
            self.tripwire.trip()
        return self._label

    def audit_label(self) -> Label | None:
        """Ground truth for bookkeeping and scoring, never for learning."""
        return self._label

    @property
    def shape(self) -> tuple:
        return self.pixels.shape

    def strip(self, tripwire: Tripwire | None = None) -> "Sample":
        return Sample.unlabeled(self.id, self.pixels, self._label, tripwire)

    def relabel(self, label: Label, source: LabelSource) -> "Sample":
        if source not in (LabelSource.Pseudo, LabelSource.Cluster):
            raise UsageError(f"relabel only assigns pseudo or cluster labels, got {source.value}.")
        return replace(self, assigned_label=Label(label), label_source=source)

    def with_pixels(self, pixels: np.ndarray) -> "Sample":
        return replace(self, pixels=pixels)

class Dataset:
    def __init__(self, samples: Iterable[Sample] = (), name: str = ""):
        self.samples = tuple(samples)
        self.name = name
        ids = [s.id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise UsageError(f"Dataset {name!r} holds duplicate sample ids.")

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, index):
        if isinstance(index, (int, np.integer)):
            return self.samples[index]
        if isinstance(index, slice):
            return Dataset(self.samples[index], self.name)
        return Dataset([self.samples[i] for i in np.asarray(index)], self.name)

    def __add__(self, other: "Dataset") -> "Dataset":
        return Dataset(self.samples + other.samples, self.name)

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    @property
    def image_shape(self) -> tuple | None:
        return self.samples[0].shape if self.samples else None

    def images(self) -> np.ndarray:
        """Pixels as an (N, C, H, W) float32 batch."""
        if not self.samples:
            return np.zeros((0, 0, 0, 0), dtype=np.float32)
        return np.stack([s.pixels for s in self.samples]).transpose(0, 3, 1, 2).astype(np.float32)

    def assigned_labels(self) -> np.ndarray:
        missing = [s.id for s in self.samples if s.assigned_label is None]
        if missing:
            raise UsageError(f"{len(missing)} samples have no assigned label (first: {missing[0]}).")
        return np.array([int(s.assigned_label) for s in self.samples], dtype=np.int64)

    def counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for s in self.samples:
            if s.assigned_label is not None:
                counts[s.assigned_label] += 1
        return counts

    def audit_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for s in self.samples:
            if s.audit_label() is not None:
                counts[s.audit_label()] += 1
        return counts

    def count_sources(self) -> dict[LabelSource, int]:
        counts = {source: 0 for source in LabelSource}
        for s in self.samples:
            counts[s.label_source] += 1
        return counts

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "id": self.ids,
            "label": [s.assigned_label.token if s.assigned_label is not None else "" for s in self.samples],
            "label_source": [s.label_source.value for s in self.samples],
        })

def read_raw_image(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != RAW_MAGIC:
        raise InputError(f"{path} is not a raw LFIM tensor file.")
    version, h, w, c = struct.unpack("<4I", data[4:20])
    if version != RAW_VERSION:
        raise InputError(f"{path}: unsupported LFIM version {version}.")
    expected = 20 + 4 * h * w * c
    if len(data) != expected:
        raise InputError(f"{path}: payload holds {len(data) - 20} bytes, expected {expected - 20}.")
    return np.frombuffer(data, dtype="<f4", offset=20).reshape(h, w, c).astype(np.float32)

def write_raw_image(path, pixels: np.ndarray) -> Path:
    path = Path(path)
    pixels = np.clip(np.asarray(pixels, dtype="<f4"), 0.0, 1.0)
    h, w, c = pixels.shape
    path.write_bytes(RAW_MAGIC + struct.pack("<4I", RAW_VERSION, h, w, c) + pixels.tobytes())
    return path

def read_image(path) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".lfim":
        return read_raw_image(path)
    if suffix == ".png":
        pixels = np.asarray(mpimg.imread(path))
        if pixels.dtype == np.uint8:
            pixels = pixels / 255.0
        if pixels.ndim == 2:
            pixels = pixels[..., None]
        elif pixels.shape[2] == 4:
            pixels = pixels[..., :3]
        return np.clip(pixels, 0.0, 1.0).astype(np.float32)
    raise InputError(f"Unsupported payload format {suffix!r} for {path}, expected .png or .lfim.")

def load_corpus(manifest_path, allow_unlabeled: bool = False, name: str = "") -> Dataset:
    '''
    Load a two-class corpus from a manifest CSV with header id,path,label.

    Parameters
    ----------
    manifest_path : path-like
        Manifest; payload paths are resolved relative to its directory.
    allow_unlabeled : bool, default: False
        Accept rows with an empty label (written for unlabeled subsets); their
        optional hidden_label column is kept as hidden ground truth.

    Raises
    ------
    IngestionError
        On a missing payload, an unknown label token or a duplicate id, naming the offending row.
    EmptyCorpusError
        If the manifest holds no rows.
    '''
    manifest_path = Path(manifest_path)
    try:
        frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise IngestionError(f"Manifest {manifest_path} not found.") from None
    except pd.errors.EmptyDataError:
        raise EmptyCorpusError(f"Manifest {manifest_path} is empty.") from None
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestionError(f"Manifest {manifest_path} lacks columns {missing}, expected header id,path,label.")
    if frame.empty:
        raise EmptyCorpusError(f"Manifest {manifest_path} holds no samples.")

    base = manifest_path.parent
    cache: dict[Path, np.ndarray] = {}
    seen: set[str] = set()
    samples = []
    for row, record in enumerate(frame.to_dict("records"), start=1):
        sample_id = record["id"].strip()
        if not sample_id or sample_id in seen:
            raise IngestionError("Duplicate or empty sample id", row, record)
        seen.add(sample_id)

        payload = (base / record["path"]).resolve()
        if payload not in cache:
            if not payload.is_file():
                raise IngestionError(f"Missing payload file {payload}", row, record)
            try:
                cache[payload] = read_image(payload)
            except InputError as err:
                raise IngestionError(str(err), row, record) from None
        pixels = cache[payload]

        source = record.get("label_source", "").strip() or LabelSource.GroundTruth.value
        try:
            if record["label"].strip() and source != LabelSource.GroundTruth.value:
                hidden = record.get("hidden_label", "").strip()
                sample = Sample.unlabeled(sample_id, pixels, Label.from_token(hidden) if hidden else None)
                samples.append(sample.relabel(Label.from_token(record["label"]), LabelSource(source)))
            elif record["label"].strip():
                samples.append(Sample.labeled(sample_id, pixels, Label.from_token(record["label"])))
            elif allow_unlabeled:
                hidden = record.get("hidden_label", "").strip()
                samples.append(Sample.unlabeled(sample_id, pixels, Label.from_token(hidden) if hidden else None))
            else:
                raise ValueError("Missing label")
        except ValueError as err:
            raise IngestionError(str(err), row, record) from None

    dataset = Dataset(samples, name=name or manifest_path.stem)
    counts = dataset.counts()
    logger.info("Loaded %d samples from %s (B: %d, M: %d)", len(dataset), manifest_path,
                counts[Label.Benign], counts[Label.Malignant])
    return dataset

_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")

def write_manifest(dataset: Dataset, manifest_path, payload_dir=None, hidden_labels: bool = True) -> Path:
    '''
    Write payloads as .lfim files and a manifest referencing them.

    Unlabeled samples get an empty label; their hidden ground truth goes to a
    hidden_label column so chained CLI steps can still be scored.
    '''
    manifest_path = Path(manifest_path)
    payload_dir = Path(payload_dir) if payload_dir is not None else manifest_path.parent / "payloads"
    payload_dir.mkdir(parents=True, exist_ok=True)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in dataset:
        payload = payload_dir / f"{_UNSAFE.sub('_', s.id)}.lfim"
        write_raw_image(payload, s.pixels)
        row = {
            "id": s.id,
            "path": Path(os.path.relpath(payload.resolve(), manifest_path.parent.resolve())).as_posix(),
            "label": s.assigned_label.token if s.assigned_label is not None else "",
            "label_source": s.label_source.value,
        }
        if hidden_labels:
            hidden = s.audit_label()
            row["hidden_label"] = hidden.token if (s.hidden and hidden is not None) else ""
        rows.append(row)
    columns = list(MANIFEST_COLUMNS) + ["label_source"] + (["hidden_label"] if hidden_labels else [])
    pd.DataFrame(rows, columns=columns).to_csv(manifest_path, index=False)
    return manifest_path

def class_counts_frame(counts: Mapping[str, Mapping[Label, int]]) -> pd.DataFrame:
    frame = pd.DataFrame({name: {label.name: c[label] for label in Label} for name, c in counts.items()})
    frame.loc["Total"] = frame.sum()
    return frame
