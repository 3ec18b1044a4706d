"""Scalar evaluation metrics for age estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def mae(y_pred, y_true) -> float:
    """Mean absolute error between predicted and true ages."""
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    if y_pred.size == 0:
        raise ValueError("mae of an empty prediction set is undefined")
    if y_pred.shape != y_true.shape:
        raise ValueError(f"shape mismatch: {y_pred.shape} vs {y_true.shape}")
    return float(np.abs(y_pred - y_true).mean())


def epsilon_error(y_pred, y_true, sigma_n) -> float:
    """Mean of ``1 - exp(-(err^2) / (2 sigma_n^2))``.

    Weighs each error by that image's annotation spread, so samples whose
    apparent age was ambiguous to annotators count less.  Always in [0, 1].
    """
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    sigma_n = np.asarray(sigma_n, dtype=np.float64).ravel()
    if y_pred.size == 0:
        raise ValueError("epsilon error of an empty prediction set is undefined")
    if not (y_pred.shape == y_true.shape == sigma_n.shape):
        raise ValueError("prediction, truth, and sigma arrays must have equal shapes")
    if np.any(sigma_n <= 0):
        raise ValueError("every sigma_n must be positive")
    return float((1.0 - np.exp(-((y_pred - y_true) ** 2) / (2.0 * sigma_n**2))).mean())


@dataclass(frozen=True)
class AgeBandRow:
    low: int
    high: int  # inclusive
    count: int
    mae: float


def mae_by_age_band(y_pred, y_true, bands) -> list[AgeBandRow]:
    """Per-band MAE plus an overall row.

    ``bands`` is a sequence of inclusive (low, high) integer ranges that
    must tile [1, max high] contiguously starting at 1.  Bands with no
    samples are omitted (absent, not zero).  The overall row spans the
    full range and always appears last.
    """
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    if y_pred.size == 0:
        raise ValueError("mae of an empty prediction set is undefined")
    bands = sorted((int(lo), int(hi)) for lo, hi in bands)
    if not bands or bands[0][0] != 1:
        raise ValueError("bands must start at age 1")
    for (lo, hi), (nlo, _) in zip(bands, bands[1:]):
        if hi + 1 != nlo:
            raise ValueError(f"bands must be contiguous; gap after ({lo}, {hi})")
    if any(lo > hi for lo, hi in bands):
        raise ValueError("each band needs low <= high")
    rows = []
    for lo, hi in bands:
        sel = (y_true >= lo) & (y_true <= hi)
        if sel.any():
            rows.append(AgeBandRow(lo, hi, int(sel.sum()), mae(y_pred[sel], y_true[sel])))
    rows.append(AgeBandRow(bands[0][0], bands[-1][1], y_pred.size, mae(y_pred, y_true)))
    return rows
