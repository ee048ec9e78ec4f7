# Copyright (C) 2023 Rémy Cases
# See LICENSE file for extended copyright information.
# This file is part of LabelForge project.

class LabelForgeError(Exception):
    pass

class ConfigurationError(LabelForgeError, ValueError):
    pass

class InputError(LabelForgeError, ValueError):
    pass

class UsageError(LabelForgeError, ValueError):
    pass

class IngestionError(LabelForgeError, ValueError):
    def __init__(self, message: str, row: int | None = None, record: dict | None = None):
        if row is not None:
            message = f"{message} (manifest row {row}: {record})"
        super().__init__(message)
        self.row = row
        self.record = record

class EmptyCorpusError(IngestionError):
    pass

class StratificationError(LabelForgeError, ValueError):
    pass

class CheckpointFormatError(LabelForgeError, ValueError):
    pass

class IncompatibleCheckpointError(CheckpointFormatError):
    pass

class ClusteringError(LabelForgeError, RuntimeError):
    pass

class ReportIOError(LabelForgeError, OSError):
    pass
