"""Training losses on raw logits, with exact analytic gradients.

Each family owns one loss:

* LDL: KL divergence between the target distribution and the softmax of
  K logits.  Gradient w.r.t. the logits is ``softmax(o) - p``.
* Hard-ranking: mean softmax cross-entropy over K-1 independent binary
  pairs of logits (slot 0 = "not older", slot 1 = "older").
* Soft-ranking: mean KL divergence over K binary pairs whose targets are
  ``(p_k, 1 - p_k)`` from the CDF encoding.

Per-sample losses are averaged over pairs (1/K or 1/(K-1)) so magnitudes
are comparable across families; the batch mean is the caller's job.
Logs are floored at ``LOG_EPS`` so a dead softmax output cannot produce
an infinite loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encodings import EncodedTarget, EncodingConfig, Family, decode_ldl, decode_soft_rank
from .errors import NumericInputError

LOG_EPS = 1e-12


@dataclass(frozen=True)
class LossValue:
    scalar: float
    grad: np.ndarray


def logit_dim(family: Family, max_age: int) -> int:
    """Number of logits a head must output for a family at max age K."""
    family = Family(family)
    if family is Family.LDL:
        return max_age
    if family is Family.HARD_RANK:
        return 2 * (max_age - 1)
    return 2 * max_age


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction before exponentiation)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericInputError("softmax input contains NaN or Inf")
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _check_logits(logits: np.ndarray, target: EncodedTarget, family: Family) -> np.ndarray:
    if Family(target.family) is not family:
        raise ValueError(f"target family is {target.family}, expected {family}")
    logits = np.asarray(logits, dtype=np.float64)
    expected = logit_dim(family, target.max_age)
    if logits.shape != (expected,):
        raise ValueError(f"expected {expected} logits for {family}, got shape {logits.shape}")
    return logits


def _kl(p: np.ndarray, q: np.ndarray) -> float:
    # terms with p == 0 contribute nothing; q is floored inside the log
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(np.maximum(q, LOG_EPS))), 0.0)
    return float(terms.sum())


def ldl_loss(logits: np.ndarray, target: EncodedTarget) -> LossValue:
    """KL(p || softmax(logits)) for one sample."""
    logits = _check_logits(logits, target, Family.LDL)
    q = softmax(logits)
    return LossValue(_kl(target.values, q), q - target.values)


def soft_rank_loss(logits: np.ndarray, target: EncodedTarget) -> LossValue:
    """Mean per-pair KL divergence; logits hold K (slot0, slot1) pairs."""
    logits = _check_logits(logits, target, Family.SOFT_RANK)
    k = target.max_age
    p = np.stack([target.values, 1.0 - target.values], axis=1)
    q = softmax(logits.reshape(k, 2), axis=1)
    return LossValue(_kl(p, q) / k, ((q - p) / k).reshape(-1))


def hard_rank_loss(logits: np.ndarray, target: EncodedTarget) -> LossValue:
    """Mean per-pair cross-entropy against binary "older than k" labels."""
    logits = _check_logits(logits, target, Family.HARD_RANK)
    n_pairs = target.max_age - 1
    v = target.values.astype(np.intp)
    q = softmax(logits.reshape(n_pairs, 2), axis=1)
    picked = q[np.arange(n_pairs), v]
    scalar = float(-np.log(np.maximum(picked, LOG_EPS)).sum()) / n_pairs
    onehot = np.zeros_like(q)
    onehot[np.arange(n_pairs), v] = 1.0
    return LossValue(scalar, ((q - onehot) / n_pairs).reshape(-1))


_LOSSES = {
    Family.LDL: ldl_loss,
    Family.HARD_RANK: hard_rank_loss,
    Family.SOFT_RANK: soft_rank_loss,
}


def loss(logits: np.ndarray, target: EncodedTarget) -> LossValue:
    """Dispatch to the family-specific loss."""
    return _LOSSES[Family(target.family)](logits, target)


def hard_rank_predict_bits(logits: np.ndarray) -> np.ndarray:
    """Per-pair argmax as a bit vector; a tied pair counts as "not older"."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0 or logits.size % 2:
        raise ValueError(f"expected an even-length logit vector, got shape {logits.shape}")
    pairs = logits.reshape(-1, 2)
    return (pairs[:, 1] > pairs[:, 0]).astype(np.float64)


def predict_age(logits: np.ndarray, cfg: EncodingConfig) -> float:
    """Decode one sample's main-branch logits to an age.

    LDL returns the real-valued expectation; the ranking families return
    integer ages (as floats, for a uniform return type).
    """
    family = Family(cfg.family)
    logits = np.asarray(logits, dtype=np.float64)
    expected = logit_dim(family, cfg.max_age)
    if logits.shape != (expected,):
        raise ValueError(f"expected {expected} logits for {family}, got shape {logits.shape}")
    if family is Family.LDL:
        return decode_ldl(softmax(logits))
    if family is Family.HARD_RANK:
        return float(1 + int(hard_rank_predict_bits(logits).sum()))
    return float(decode_soft_rank(softmax(logits.reshape(cfg.max_age, 2), axis=1)))


# ---------------------------------------------------------------------------
# batched variants used by the trainer (same math, one call per batch)
# ---------------------------------------------------------------------------


def batch_loss_and_grad(logits: np.ndarray, targets: np.ndarray, cfg: EncodingConfig):
    """Per-sample losses and logit gradients for a whole batch.

    ``logits`` is (B, D), ``targets`` is the (B, ...) stack of encoding
    vectors.  Returns ``(losses (B,), grads (B, D))``; the grad rows are
    the gradients of each sample's own loss (no batch averaging).
    """
    family = Family(cfg.family)
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NumericInputError("logits contain NaN or Inf")
    b = logits.shape[0]
    if family is Family.LDL:
        p = targets
        q = softmax(logits, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log(np.maximum(p, LOG_EPS)) - np.log(np.maximum(q, LOG_EPS))), 0.0)
        return terms.sum(axis=1), q - p
    if family is Family.SOFT_RANK:
        k = cfg.max_age
        p = np.stack([targets, 1.0 - targets], axis=2)  # (B, K, 2)
        q = softmax(logits.reshape(b, k, 2), axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log(np.maximum(p, LOG_EPS)) - np.log(np.maximum(q, LOG_EPS))), 0.0)
        return terms.sum(axis=(1, 2)) / k, ((q - p) / k).reshape(b, -1)
    n_pairs = cfg.max_age - 1
    v = targets.astype(np.intp)  # (B, K-1)
    q = softmax(logits.reshape(b, n_pairs, 2), axis=2)
    rows = np.arange(b)[:, None], np.arange(n_pairs)[None, :]
    picked = q[rows[0], rows[1], v]
    losses = -np.log(np.maximum(picked, LOG_EPS)).sum(axis=1) / n_pairs
    onehot = np.zeros_like(q)
    onehot[rows[0], rows[1], v] = 1.0
    return losses, ((q - onehot) / n_pairs).reshape(b, -1)


def batch_predict_age(logits: np.ndarray, cfg: EncodingConfig) -> np.ndarray:
    """Vectorized ``predict_age`` over (B, D) logits."""
    family = Family(cfg.family)
    logits = np.asarray(logits, dtype=np.float64)
    b = logits.shape[0]
    if family is Family.LDL:
        q = softmax(logits, axis=1)
        return q @ np.arange(1, cfg.max_age + 1, dtype=np.float64)
    if family is Family.HARD_RANK:
        pairs = logits.reshape(b, -1, 2)
        return 1.0 + (pairs[:, :, 1] > pairs[:, :, 0]).sum(axis=1).astype(np.float64)
    pairs = softmax(logits.reshape(b, cfg.max_age, 2), axis=2)
    return np.argmin(np.abs(pairs[:, :, 0] - pairs[:, :, 1]), axis=1).astype(np.float64) + 1.0
