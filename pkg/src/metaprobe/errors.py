"""Exception types shared across the engine.

Each maps to a distinct CLI exit code (see cli.py), so error kinds must
stay distinguishable rather than collapsing into ValueError.
"""


class MetaprobeError(Exception):
    """Base class for all engine errors."""


class FormatError(MetaprobeError):
    """File is not in the expected format (bad magic, version, field)."""


class CorruptionError(MetaprobeError):
    """File is structurally valid but truncated or inconsistent."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DimensionMismatchError(MetaprobeError):
    """A record or tensor does not match the declared dimensions."""


class CorpusError(MetaprobeError):
    """Invalid labeled-example input (bad line, span, duplicate id)."""


class LeakageError(MetaprobeError):
    """Train and test sets share example ids within one distribution."""


class TrainingDivergedError(MetaprobeError):
    """Non-finite loss encountered during probe training."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class ConfigurationError(MetaprobeError):
    """Inconsistent run configuration (missing counterpart, bad mode)."""


class ManifestMismatchError(MetaprobeError):
    """Resuming into an output directory whose manifest hashes differ."""
