"""Exception hierarchy shared across the package."""


class PointfuseError(Exception):
    """Base class for all package errors."""


class InvalidInput(PointfuseError):
    """An argument violates an operation's preconditions."""


class ConfigError(PointfuseError):
    """A configuration value is out of its legal range."""


class FormatError(PointfuseError):
    """A file does not conform to its declared on-disk format."""

    def __init__(self, message: str, path=None, line=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if line is not None:
            detail = f"{detail} (line {line})"
        super().__init__(detail)
        self.path = path
        self.line = line


class MissingEmbedding(PointfuseError):
    """A required sample id has no stored embedding."""

    def __init__(self, missing_ids):
        self.missing_ids = tuple(missing_ids)
        shown = ", ".join(self.missing_ids[:8])
        more = "" if len(self.missing_ids) <= 8 else f" (+{len(self.missing_ids) - 8} more)"
        super().__init__(f"no embedding for ids: {shown}{more}")


class DegenerateFeature(PointfuseError):
    """A zero-norm feature reached an operation that needs a direction."""


class MemoryMismatch(PointfuseError):
    """A feature memory was built under a different configuration."""


class ZeroShotUnavailable(PointfuseError):
    """Class-text embeddings are missing, so zero-shot scoring is disabled."""
