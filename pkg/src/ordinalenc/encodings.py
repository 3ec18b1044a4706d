"""Age label encodings and their decoders.

Three ways to turn an integer age ``y`` in ``[1, K]`` into a supervision
vector:

* LDL: a Gaussian bump centered at ``y``, evaluated at every age class
  ``k = 1..K`` and L1-normalized, so entry ``k`` is the probability mass
  assigned to age ``k``.  Decoded by taking the expectation.
* Hard-ranking: ``K - 1`` binary "older than k" indicators.  Decoded by
  summing the bits and adding 1.
* Soft-ranking: the Gaussian CDF ``Phi((k - y) / sigma)`` at every
  ``k = 1..K``, i.e. a soft "younger than or around k" probability that is
  0.5 exactly at ``k = y``.  Decoded by finding the pair of complementary
  probabilities closest to the 0.5/0.5 crossing.

All functions are pure and operate on float64 numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import EncodingConfigError, NormalizationError

DEFAULT_MAX_AGE = 101


class Family(str, enum.Enum):
    """Which encoding strategy a vector (or model head) belongs to."""

    LDL = "ldl"
    HARD_RANK = "hard"
    SOFT_RANK = "soft"

    def __str__(self) -> str:  # keep CLI/CSV output as the plain value
        return self.value


@dataclass(frozen=True)
class EncodingConfig:
    """Encoding family plus its hyperparameters.

    ``max_age`` is the largest age class K (ages live in ``[1, K]``);
    ``sigma`` is the correlation width in years.  ``sigma == 0`` is only
    meaningful for the two ranking families, where it yields hard step
    targets; for LDL the Gaussian would be degenerate.
    """

    family: Family
    max_age: int = DEFAULT_MAX_AGE
    sigma: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.max_age) != self.max_age or self.max_age < 2:
            raise EncodingConfigError(f"max_age must be an integer >= 2, got {self.max_age}")
        object.__setattr__(self, "max_age", int(self.max_age))
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise EncodingConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.family is Family.LDL and self.sigma == 0:
            raise EncodingConfigError("sigma=0 gives a degenerate Gaussian; LDL requires sigma > 0")


@dataclass(frozen=True)
class EncodedTarget:
    """A ground-truth supervision vector together with its family."""

    family: Family
    values: np.ndarray

    @property
    def max_age(self) -> int:
        n = len(self.values)
        return n + 1 if self.family is Family.HARD_RANK else n


def check_age(y, max_age: int) -> int:
    """Validate an integer age label in ``[1, max_age]``."""
    if int(y) != y:
        raise ValueError(f"age must be an integer, got {y!r}")
    y = int(y)
    if not 1 <= y <= max_age:
        raise ValueError(f"age {y} outside [1, {max_age}]")
    return y


def _ages(max_age: int) -> np.ndarray:
    return np.arange(1, max_age + 1, dtype=np.float64)


def ldl_encode(y: int, cfg: EncodingConfig) -> EncodedTarget:
    """Gaussian label distribution over ages 1..K, L1-normalized.

    The normal-density prefactor cancels in the normalization, so only the
    exponential is evaluated; mass outside [1, K] is discarded.
    """
    if cfg.family is not Family.LDL:
        raise ValueError(f"config family is {cfg.family}, expected ldl")
    y = check_age(y, cfg.max_age)
    k = _ages(cfg.max_age)
    w = np.exp(-((k - y) ** 2) / (2.0 * cfg.sigma**2))
    return EncodedTarget(Family.LDL, w / w.sum())


def hard_rank_encode(y: int, cfg: EncodingConfig) -> EncodedTarget:
    """Binary "older than k" indicators for k = 1..K-1."""
    if cfg.family is not Family.HARD_RANK:
        raise ValueError(f"config family is {cfg.family}, expected hard")
    y = check_age(y, cfg.max_age)
    k = _ages(cfg.max_age)[:-1]
    return EncodedTarget(Family.HARD_RANK, (y > k).astype(np.float64))


def soft_rank_encode(y: int, cfg: EncodingConfig) -> EncodedTarget:
    """Gaussian-CDF targets: entry k is Phi((k - y) / sigma) for k = 1..K.

    At sigma == 0 the pointwise limit is used: 0 below y, 1 above y, and
    0.5 at k == y (the CDF value there is 0.5 for every sigma).
    """
    if cfg.family is not Family.SOFT_RANK:
        raise ValueError(f"config family is {cfg.family}, expected soft")
    y = check_age(y, cfg.max_age)
    k = _ages(cfg.max_age)
    if cfg.sigma == 0:
        v = np.where(k < y, 0.0, np.where(k == y, 0.5, 1.0))
    else:
        v = 0.5 * (1.0 + erf((k - y) / (math.sqrt(2.0) * cfg.sigma)))
    return EncodedTarget(Family.SOFT_RANK, v)


_ENCODERS = {
    Family.LDL: ldl_encode,
    Family.HARD_RANK: hard_rank_encode,
    Family.SOFT_RANK: soft_rank_encode,
}


def encode(y: int, cfg: EncodingConfig) -> EncodedTarget:
    """Encode an integer age under the configured family."""
    return _ENCODERS[Family(cfg.family)](y, cfg)


def decode_ldl(pred: np.ndarray) -> float:
    """Expectation of a probability vector over ages 1..K (not rounded)."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 1 or pred.size < 2:
        raise ValueError(f"expected a probability vector of length >= 2, got shape {pred.shape}")
    if np.any(pred < 0):
        raise NormalizationError("probability vector has negative entries")
    total = pred.sum()
    if abs(total - 1.0) > 1e-6:
        raise NormalizationError(f"probability vector sums to {total}, expected 1 within 1e-6")
    return float(np.dot(_ages(pred.size), pred))


def decode_hard_rank(bits: np.ndarray) -> int:
    """1 plus the number of "older than k" bits set."""
    bits = np.asarray(bits, dtype=np.float64)
    if bits.ndim != 1 or bits.size == 0:
        raise ValueError(f"expected a non-empty bit vector, got shape {bits.shape}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bit vector entries must be exactly 0 or 1")
    return 1 + int(bits.sum())


def decode_soft_rank(pair_probs: np.ndarray) -> int:
    """Index k whose probability pair is closest to the 0.5/0.5 crossing.

    ``pair_probs`` has shape (K, 2); each row must sum to 1 within 1e-6.
    Ties break toward the smallest k, so results are deterministic.
    """
    pairs = np.asarray(pair_probs, dtype=np.float64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ValueError(f"expected a non-empty (K, 2) array, got shape {pairs.shape}")
    sums = pairs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise NormalizationError("each probability pair must sum to 1 within 1e-6")
    return int(np.argmin(np.abs(pairs[:, 0] - pairs[:, 1]))) + 1


def encode_matrix(ages: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    """Stack encodings for a batch of ages into an (n, D) target matrix."""
    return np.stack([encode(int(y), cfg).values for y in np.asarray(ages).ravel()])
