"""Exception types shared across the package.

Contract violations that sklearn-style code would report as ``ValueError``
stay ``ValueError``; the subclasses below exist where callers need to tell
failure modes apart programmatically (CLI exit codes, training recovery).
"""

from __future__ import annotations


class EncodingConfigError(ValueError):
    """Invalid encoding configuration (e.g. a degenerate Gaussian width)."""


class NormalizationError(ValueError):
    """A vector that must be a probability distribution is not normalized."""


class NumericInputError(ValueError):
    """NaN or infinite values where finite numbers are required."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss or gradient.

    Carries the last parameters known to be finite so callers can recover
    a usable checkpoint.
    """

    def __init__(self, message: str, epoch: int, last_good_params=None):
        super().__init__(message)
        self.epoch = epoch
        self.last_good_params = last_good_params


class MaskCoversGridWarning(UserWarning):
    """The erased rectangle covers the whole grid; masked features are all zero."""
