"""Typed exceptions shared by every pcvae module."""


class PcvaeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(PcvaeError):
    """Tensor/matrix extents do not line up."""


class TokenizationError(PcvaeError):
    """An input cannot be split into the requested stripes/segments."""


class ConfigError(PcvaeError):
    """Inconsistent or unsatisfiable configuration."""


class NumericError(PcvaeError):
    """Non-finite values, degenerate statistics, or a failed factorization."""


class DistributionError(PcvaeError):
    """A probability mass function is malformed."""


class UsageError(PcvaeError):
    """An operation was called in an unsupported way."""


class FormatError(PcvaeError):
    """A file on disk does not match the expected container format."""


class CheckpointError(PcvaeError):
    """A checkpoint file is corrupt, truncated, or of an unknown version."""


class TrainingError(PcvaeError):
    """Training diverged or could not proceed."""
